#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "layoutlab/corpus.hpp"

namespace layoutlab {

// Word-level vocabulary with five reserved ids. The lowercase flag is part
// of the vocabulary identity (stored in the file header and folded into the
// fingerprint) so encoding and training cannot disagree on casing.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr std::size_t kNumReserved = 5;
  static const std::array<std::string_view, kNumReserved>& reserved_tokens();

  // Tokens must start with the five reserved surface forms.
  Vocab(std::vector<std::string> tokens, bool lowercase);

  std::size_t size() const { return tokens_.size(); }
  bool lowercase() const { return lowercase_; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  // Case folding applied per the lowercase flag; unknown words map to UNK.
  int id_of(std::string_view word) const;

  // FNV-1a over the canonical file serialization (header + tokens).
  std::uint64_t fingerprint() const;

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  bool lowercase_ = true;
};

// Frequency-ranked vocabulary: tokens sorted by count descending, ties
// broken lexicographically, truncated to max_size (reserved ids included).
Vocab build_vocab(std::span<const Page> pages, std::size_t max_size,
                  std::size_t min_freq, bool lowercase);

std::string fold_case(std::string_view word, bool lowercase);

}  // namespace layoutlab
