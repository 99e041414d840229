#include <doctest.h>

#include <filesystem>

#include "layoutlab/encode.hpp"
#include "layoutlab/vocab.hpp"

using namespace layoutlab;

namespace {

Page page_of(std::initializer_list<const char*> words) {
  Page p;
  p.doc_id = "p";
  p.width = 1000;
  p.height = 1000;
  std::int64_t x = 0;
  for (const char* w : words) {
    p.words.push_back({w, {x, 0, x + 10, 10}});
    x += 10;
  }
  return p;
}

std::vector<Page> corpus_abc() {
  // word counts: a=3, b=2, c=1
  return {page_of({"a", "b", "a"}), page_of({"c", "a", "b"})};
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("build_vocab ranks by frequency with min_freq cut") {
  const Vocab v = build_vocab(corpus_abc(), 100, 2, false);
  REQUIRE(v.size() == 7);
  CHECK(v.token(5) == "a");
  CHECK(v.token(6) == "b");
  CHECK(v.id_of("c") == Vocab::kUnk);
}

TEST_CASE("build_vocab size cap keeps the most frequent token") {
  const Vocab v = build_vocab(corpus_abc(), 6, 1, false);
  REQUIRE(v.size() == 6);
  CHECK(v.token(5) == "a");
}

TEST_CASE("build_vocab ties break lexicographically and runs are deterministic") {
  const auto pages = std::vector<Page>{page_of({"z", "y", "z", "y", "m"})};
  const Vocab v1 = build_vocab(pages, 100, 1, false);
  const Vocab v2 = build_vocab(pages, 100, 1, false);
  CHECK(v1.token(5) == "y");  // y and z tie at 2; y sorts first
  CHECK(v1.token(6) == "z");
  CHECK(v1.token(7) == "m");
  CHECK(v1.fingerprint() == v2.fingerprint());
}

TEST_CASE("build_vocab rejects empty input") {
  CHECK_THROWS(build_vocab(std::vector<Page>{}, 100, 1, true));
  CHECK_THROWS(build_vocab(corpus_abc(), 5, 1, true));
}

TEST_CASE("lowercase flag folds case at build and lookup") {
  const auto pages = std::vector<Page>{page_of({"Net", "NET", "net"})};
  const Vocab folded = build_vocab(pages, 100, 1, true);
  CHECK(folded.size() == 6);
  CHECK(folded.id_of("NeT") == 5);
  const Vocab cased = build_vocab(pages, 100, 1, false);
  CHECK(cased.size() == 8);
}

TEST_CASE("vocab file round trip keeps ids, header and fingerprint") {
  const Vocab v = build_vocab(corpus_abc(), 100, 1, true);
  const std::string path = temp_path("layoutlab_vocab_test.txt");
  v.save(path);
  const Vocab loaded = Vocab::load(path);
  CHECK(loaded.size() == v.size());
  CHECK(loaded.lowercase() == v.lowercase());
  CHECK(loaded.fingerprint() == v.fingerprint());
  CHECK(loaded.id_of("a") == v.id_of("a"));
  std::filesystem::remove(path);
}

TEST_CASE("fingerprint is sensitive to casing flag and content") {
  const Vocab lower = build_vocab(corpus_abc(), 100, 1, true);
  const Vocab cased = build_vocab(corpus_abc(), 100, 1, false);
  CHECK(lower.fingerprint() != cased.fingerprint());
}

TEST_CASE("encode_page of an empty page is CLS + SEP") {
  const Vocab v = build_vocab(corpus_abc(), 100, 1, true);
  const EncodedPage e = encode_page(page_of({}), v, 16);
  REQUIRE(e.size() == 2);
  CHECK(e.token_ids[0] == Vocab::kCls);
  CHECK(e.token_ids[1] == Vocab::kSep);
  CHECK(e.boxes[0] == kClsBox);
  CHECK(e.boxes[1] == kSepBox);
  CHECK(e.attn_mask == std::vector<std::uint8_t>{1, 1});
  CHECK(e.word_index == std::vector<int>{-1, -1});
}

TEST_CASE("encode_page truncates to keep SEP") {
  const Vocab v = build_vocab(corpus_abc(), 100, 1, true);
  const EncodedPage e = encode_page(page_of({"a", "b", "c"}), v, 4);
  REQUIRE(e.size() == 4);
  CHECK(e.token_ids[0] == Vocab::kCls);
  CHECK(e.token_ids[1] == v.id_of("a"));
  CHECK(e.token_ids[2] == v.id_of("b"));
  CHECK(e.token_ids[3] == Vocab::kSep);
  CHECK(e.word_index == std::vector<int>{-1, 0, 1, -1});
}

TEST_CASE("unknown words become UNK but keep their box") {
  const Vocab v = build_vocab(corpus_abc(), 100, 2, false);  // c excluded
  Page p = page_of({"c"});
  const EncodedPage e = encode_page(p, v, 8);
  CHECK(e.token_ids[1] == Vocab::kUnk);
  CHECK(e.boxes[1] == normalize_bbox(p.words[0].box, p.width, p.height));
}

TEST_CASE("encode_page invariants hold across sizes") {
  const Vocab v = build_vocab(corpus_abc(), 100, 1, true);
  for (std::size_t words = 0; words < 12; ++words) {
    std::vector<const char*> names(words, "a");
    Page p;
    p.doc_id = "p";
    p.width = 500;
    p.height = 500;
    for (std::size_t i = 0; i < words; ++i) {
      p.words.push_back({"a", {static_cast<std::int64_t>(i * 5), 0,
                               static_cast<std::int64_t>(i * 5 + 4), 9}});
    }
    for (const std::size_t max_seq : {3u, 4u, 8u, 64u}) {
      const EncodedPage e = encode_page(p, v, max_seq);
      const std::size_t expect = std::min(words, max_seq - 2) + 2;
      CHECK(e.size() == expect);
      CHECK(e.token_ids.size() == e.boxes.size());
      CHECK(e.token_ids.size() == e.positions.size());
      CHECK(e.token_ids.size() == e.attn_mask.size());
      CHECK(e.token_ids.size() == e.word_index.size());
      CHECK(e.token_ids.front() == Vocab::kCls);
      CHECK(e.token_ids.back() == Vocab::kSep);
      for (std::size_t s = 0; s < e.size(); ++s) {
        CHECK(e.positions[s] == static_cast<int>(s));
        CHECK(e.attn_mask[s] == 1);
      }
    }
  }
}

TEST_CASE("batch padding pads with PAD, zero mask and valid positions") {
  const Vocab v = build_vocab(corpus_abc(), 100, 1, true);
  const EncodedPage small = encode_page(page_of({"a"}), v, 16);
  const EncodedPage large = encode_page(page_of({"a", "b", "c"}), v, 16);
  const std::vector<EncodedPage> pages = {small, large};
  const EncodedBatch batch = EncodedBatch::pad(pages);
  CHECK(batch.batch == 2);
  CHECK(batch.seq == large.size());
  CHECK(batch.token_ids[batch.index(0, 4)] == Vocab::kPad);
  CHECK(batch.attn_mask[batch.index(0, 4)] == 0);
  CHECK(batch.word_index[batch.index(0, 4)] == -1);
  CHECK(batch.positions[batch.index(0, 4)] == 4);
  CHECK(batch.token_ids[batch.index(1, 4)] == Vocab::kSep);
}
