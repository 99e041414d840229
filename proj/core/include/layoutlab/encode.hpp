#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "layoutlab/corpus.hpp"
#include "layoutlab/vocab.hpp"

namespace layoutlab {

// Model-ready view of one page: CLS + one token per word + SEP, boxes on the
// normalized grid. word_index maps a token back to its source word, -1 for
// specials and padding.
struct EncodedPage {
  std::vector<int> token_ids;
  std::vector<BBox> boxes;
  std::vector<int> positions;
  std::vector<std::uint8_t> attn_mask;
  std::vector<int> word_index;

  std::size_t size() const { return token_ids.size(); }
};

inline constexpr BBox kClsBox{0, 0, 0, 0};
inline constexpr BBox kSepBox{1000, 1000, 1000, 1000};
inline constexpr BBox kPadBox{0, 0, 0, 0};

// Truncates so the sequence never exceeds max_seq and SEP is always present:
// at most max_seq - 2 words are kept.
EncodedPage encode_page(const Page& page, const Vocab& vocab,
                        std::size_t max_seq);

// Row-major [batch, seq] arrays, right-padded to the longest page in the
// batch with PAD ids, zero boxes and attn_mask = 0.
struct EncodedBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<int> token_ids;
  std::vector<BBox> boxes;
  std::vector<int> positions;
  std::vector<std::uint8_t> attn_mask;
  std::vector<int> word_index;

  std::size_t index(std::size_t b, std::size_t s) const { return b * seq + s; }

  static EncodedBatch pad(std::span<const EncodedPage> pages);
};

}  // namespace layoutlab
