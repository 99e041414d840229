#include "layoutlab/encode.hpp"

#include <algorithm>
#include <stdexcept>

namespace layoutlab {

EncodedPage encode_page(const Page& page, const Vocab& vocab,
                        std::size_t max_seq) {
  if (max_seq < 3) throw std::runtime_error("max_seq must be at least 3");
  const std::size_t kept = std::min(page.words.size(), max_seq - 2);
  const std::size_t seq = kept + 2;

  EncodedPage out;
  out.token_ids.reserve(seq);
  out.boxes.reserve(seq);
  out.positions.reserve(seq);
  out.attn_mask.assign(seq, 1);
  out.word_index.reserve(seq);

  out.token_ids.push_back(Vocab::kCls);
  out.boxes.push_back(kClsBox);
  out.word_index.push_back(-1);
  for (std::size_t i = 0; i < kept; ++i) {
    const Word& word = page.words[i];
    out.token_ids.push_back(vocab.id_of(word.text));
    out.boxes.push_back(normalize_bbox(word.box, page.width, page.height));
    out.word_index.push_back(static_cast<int>(i));
  }
  out.token_ids.push_back(Vocab::kSep);
  out.boxes.push_back(kSepBox);
  out.word_index.push_back(-1);

  for (std::size_t s = 0; s < seq; ++s) out.positions.push_back(static_cast<int>(s));
  return out;
}

EncodedBatch EncodedBatch::pad(std::span<const EncodedPage> pages) {
  EncodedBatch out;
  out.batch = pages.size();
  for (const EncodedPage& p : pages) out.seq = std::max(out.seq, p.size());
  const std::size_t n = out.batch * out.seq;
  out.token_ids.assign(n, Vocab::kPad);
  out.boxes.assign(n, kPadBox);
  out.positions.assign(n, 0);
  out.attn_mask.assign(n, 0);
  out.word_index.assign(n, -1);
  for (std::size_t b = 0; b < out.batch; ++b) {
    const EncodedPage& p = pages[b];
    for (std::size_t s = 0; s < p.size(); ++s) {
      const std::size_t i = out.index(b, s);
      out.token_ids[i] = p.token_ids[s];
      out.boxes[i] = p.boxes[s];
      out.positions[i] = p.positions[s];
      out.attn_mask[i] = p.attn_mask[s];
      out.word_index[i] = p.word_index[s];
    }
    // pad positions keep counting up so every row is a valid 0..S-1 ramp
    for (std::size_t s = p.size(); s < out.seq; ++s) {
      out.positions[out.index(b, s)] = static_cast<int>(s);
    }
  }
  return out;
}

}  // namespace layoutlab
