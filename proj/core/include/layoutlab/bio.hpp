#pragma once

#include <compare>
#include <span>
#include <string>
#include <vector>

#include "layoutlab/corpus.hpp"

namespace layoutlab {

// Labeled span over word indices, half-open [start, end). The unit of
// precision/recall/F1.
struct Mention {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string label;

  auto operator<=>(const Mention&) const = default;
};

// Decodes BIO tags into maximal mentions. A B-L opens a mention; an I-L
// continues a mention of the same L. An I-L with no open mention of that
// label is repaired as B-L (CoNLL-style). Output is sorted by start and
// non-overlapping for any input. Throws on tags that are not O/B-L/I-L.
std::vector<Mention> tags_to_spans(std::span<const std::string> tags);

// Exact inverse of tags_to_spans on legal inputs. Throws on overlapping or
// out-of-range mentions.
std::vector<std::string> spans_to_tags(std::span<const Mention> mentions,
                                       std::size_t length);

// Dense tag index space for the NER head: O = 0, then B-L/I-L pairs in
// label declaration order.
class TagCodec {
 public:
  explicit TagCodec(const LabelSet& labels);

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t index) const { return names_.at(index); }
  int index_of(std::string_view tag) const;  // -1 when unknown

 private:
  std::vector<std::string> names_;
};

}  // namespace layoutlab
