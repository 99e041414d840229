#include "layoutlab/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "layoutlab/rng.hpp"

namespace layoutlab {

namespace {

std::string header_line(bool lowercase) {
  return std::string("#vocab v1 lowercase=") + (lowercase ? "1" : "0");
}

}  // namespace

const std::array<std::string_view, Vocab::kNumReserved>& Vocab::reserved_tokens() {
  static const std::array<std::string_view, kNumReserved> kTokens = {
      "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  return kTokens;
}

std::string fold_case(std::string_view word, bool lowercase) {
  std::string out(word);
  if (lowercase) {
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
      return static_cast<char>(std::tolower(c));
    });
  }
  return out;
}

Vocab::Vocab(std::vector<std::string> tokens, bool lowercase)
    : tokens_(std::move(tokens)), lowercase_(lowercase) {
  if (tokens_.size() < kNumReserved) {
    throw std::runtime_error("vocabulary smaller than the reserved ids");
  }
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    if (tokens_[i] != reserved_tokens()[i]) {
      throw std::runtime_error("reserved token mismatch at id " +
                               std::to_string(i));
    }
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::runtime_error("duplicate vocabulary token \"" + tokens_[i] +
                               "\"");
    }
  }
}

int Vocab::id_of(std::string_view word) const {
  const auto it = index_.find(fold_case(word, lowercase_));
  return it == index_.end() ? kUnk : it->second;
}

std::uint64_t Vocab::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  h = fnv1a64(header_line(lowercase_), h);
  h = fnv1a64("\n", h);
  for (const auto& token : tokens_) {
    h = fnv1a64(token, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open vocabulary file " + path);
  out << header_line(lowercase_) << "\n";
  for (const auto& token : tokens_) out << token << "\n";
  if (!out) throw std::runtime_error("vocabulary write failed");
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("empty vocabulary file " + path);
  }
  bool lowercase;
  if (line == header_line(true)) {
    lowercase = true;
  } else if (line == header_line(false)) {
    lowercase = false;
  } else {
    throw std::runtime_error("bad vocabulary header in " + path);
  }
  std::vector<std::string> tokens;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens), lowercase);
}

Vocab build_vocab(std::span<const Page> pages, std::size_t max_size,
                  std::size_t min_freq, bool lowercase) {
  if (max_size < Vocab::kNumReserved + 1) {
    throw std::runtime_error("max_size must be at least 6");
  }
  if (min_freq < 1) throw std::runtime_error("min_freq must be at least 1");
  if (pages.empty()) throw std::runtime_error("empty corpus");

  // std::map keeps ties resolvable lexicographically without a second sort key.
  std::map<std::string, std::size_t> counts;
  for (const Page& page : pages) {
    for (const Word& word : page.words) {
      ++counts[fold_case(word.text, lowercase)];
    }
  }
  if (counts.empty()) throw std::runtime_error("corpus contains no words");

  std::vector<std::pair<std::string, std::size_t>> ranked;
  ranked.reserve(counts.size());
  const auto& reserved = Vocab::reserved_tokens();
  for (auto& [token, count] : counts) {
    if (count < min_freq) continue;
    if (std::find(reserved.begin(), reserved.end(), token) != reserved.end()) {
      continue;  // corpus text colliding with a reserved form is dropped
    }
    ranked.emplace_back(token, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens(reserved.begin(), reserved.end());
  const std::size_t budget = max_size - Vocab::kNumReserved;
  for (std::size_t i = 0; i < ranked.size() && i < budget; ++i) {
    tokens.push_back(std::move(ranked[i].first));
  }
  return Vocab(std::move(tokens), lowercase);
}

}  // namespace layoutlab
