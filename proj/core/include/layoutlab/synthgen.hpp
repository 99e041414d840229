#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "layoutlab/corpus.hpp"

namespace layoutlab {

// The nine payslip fields.
LabelSet payslip_labels();

// Exact word-count targets for one synthetic split.
struct SplitTargets {
  std::vector<std::pair<std::string, std::size_t>> label_words;
  std::size_t total_words = 0;
  std::size_t pages = 0;

  std::size_t labeled_words() const;
  std::size_t outside_words() const { return total_words - labeled_words(); }
};

// Targets mirroring the published Payslips label distribution, so the
// bundled fixture exercises the stats pipeline against realistic numbers.
SplitTargets payslip_train_targets();
SplitTargets payslip_test_targets();

// Deterministic synthetic split whose word-level label counts match the
// targets exactly (verified before returning).
std::vector<Page> make_payslip_split(const SplitTargets& targets,
                                     std::uint64_t seed,
                                     const std::string& id_prefix);

// Unlabeled corpus built from key/value token pairs, each pair repeated on
// its page, so masked tokens are recoverable from surviving copies. Used to
// demonstrate MLM learnability at desk scale.
std::vector<Page> make_mlm_toy(std::uint64_t seed, std::size_t pages,
                               std::size_t distinct_pairs, std::size_t repeats);

// Labeled corpus where each label owns a disjoint token pool, so tags are
// memorizable; used for the fine-tuning memorization check.
std::vector<Page> make_ner_toy(std::uint64_t seed, std::size_t pages,
                               std::size_t mentions_per_page);

}  // namespace layoutlab
