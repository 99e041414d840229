#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace layoutlab {

// Word box in page pixel units, as emitted by OCR.
struct RawBox {
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t x1 = 0;
  std::int64_t y1 = 0;

  bool operator==(const RawBox&) const = default;
};

// Box on the normalized 0..1000 grid. Width/height are derived, never stored.
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }

  bool operator==(const BBox&) const = default;
};

struct Word {
  std::string text;
  RawBox box;

  bool operator==(const Word&) const = default;
};

// One OCR'd document page, the experiment unit. Tags are optional because
// pre-training corpora are unlabeled.
struct Page {
  std::string doc_id;
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<Word> words;
  std::optional<std::vector<std::string>> tags;

  bool operator==(const Page&) const = default;
};

class LabelSet {
 public:
  explicit LabelSet(std::vector<std::string> labels);

  // One label name per line; blank lines ignored.
  static LabelSet load(const std::string& path);

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  // O plus B-/I- per label.
  std::size_t tagset_size() const { return 2 * labels_.size() + 1; }
  bool contains(std::string_view label) const;
  // Index in declaration order, -1 when absent.
  int index_of(std::string_view label) const;

 private:
  std::vector<std::string> labels_;
};

// Word-level tag counts for one split.
struct LabelStats {
  std::vector<std::pair<std::string, std::size_t>> per_label;
  std::size_t outside = 0;
  std::size_t total = 0;
};

// floor(c * 1000 / D) per coordinate, clamped to [0, 1000]. Monotone per
// axis; a full-page box maps to exactly (0, 0, 1000, 1000).
BBox normalize_bbox(const RawBox& box, std::int64_t page_width,
                    std::int64_t page_height);

// Line-delimited corpus: one JSON page record per line (see README for the
// schema). The label set, when given, validates tag names; the unlabeled
// overload only checks tag shape, for pre-training corpora.
std::vector<Page> parse_corpus(const std::string& path, const LabelSet& labels);
std::vector<Page> parse_corpus(const std::string& path);
std::vector<Page> parse_corpus(std::istream& in, std::string_view source_name,
                               const LabelSet* labels);

void write_corpus(std::span<const Page> pages, const std::string& path);
void write_corpus(std::span<const Page> pages, std::ostream& out);

LabelStats label_stats(std::span<const Page> pages, const LabelSet& labels);

}  // namespace layoutlab
