#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "layoutlab/bio.hpp"
#include "layoutlab/corpus.hpp"

namespace layoutlab {

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const;
  double recall() const;
  double f1() const;
};

// Exact-match (boundaries + label) mention-level scores, per label and
// micro-averaged. Zero denominators score 0.
struct EvalReport {
  std::vector<std::pair<std::string, MatchCounts>> per_label;
  MatchCounts micro;
  std::size_t documents = 0;
};

EvalReport evaluate(std::span<const std::vector<std::string>> pred,
                    std::span<const std::vector<std::string>> gold,
                    const LabelSet& labels);

// evaluate restricted to one page. A page where both sides have no mentions
// scores 1.0: nothing contradicts agreement, and such pages contribute no
// counts to corpus-level metrics anyway.
double per_document_f1(std::span<const std::string> pred,
                       std::span<const std::string> gold);

struct SignificanceResult {
  double observed_diff = 0.0;
  std::size_t iterations = 0;
  std::size_t exceed_count = 0;
  double significance_level = 0.0;

  // Reading per the MUC convention: below 0.01 is highly significant.
  bool highly_significant() const { return significance_level < 0.01; }
};

inline constexpr std::size_t kDefaultSignificanceIterations = 9999;

// Paired approximate randomization over per-document scores: each
// iteration swaps each pair (a_i, b_i) independently with probability 1/2
// and compares the shuffled |mean difference| against the observed one.
// Ties count as exceeding, so identical systems report 1.0.
SignificanceResult approx_rand_test(std::span<const double> scores_a,
                                    std::span<const double> scores_b,
                                    std::size_t iterations,
                                    std::uint64_t seed);

// Exact enumeration of all 2^n swap assignments; the oracle for the
// approximate test. n is capped at 20.
SignificanceResult exact_rand_test(std::span<const double> scores_a,
                                   std::span<const double> scores_b);

// Score files: one per-document F1 per line, aligned by line number.
std::vector<double> load_scores(const std::string& path);
void save_scores(std::span<const double> scores, const std::string& path);

std::string format_report(const EvalReport& report);
std::string report_json(const EvalReport& report);
std::string significance_json(const SignificanceResult& result);

}  // namespace layoutlab
