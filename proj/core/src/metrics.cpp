#include "layoutlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "layoutlab/rng.hpp"

namespace layoutlab {

double MatchCounts::precision() const {
  const std::size_t denom = tp + fp;
  return denom == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(denom);
}

double MatchCounts::recall() const {
  const std::size_t denom = tp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(denom);
}

double MatchCounts::f1() const {
  const double p = precision();
  const double r = recall();
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

namespace {

// One-to-one exact matching: mentions within a page are non-overlapping, so
// (start, end, label) triples are distinct and the maximum matching is the
// sorted intersection.
MatchCounts match_page(std::vector<Mention> pred, std::vector<Mention> gold) {
  std::sort(pred.begin(), pred.end());
  std::sort(gold.begin(), gold.end());
  std::vector<Mention> common;
  std::set_intersection(pred.begin(), pred.end(), gold.begin(), gold.end(),
                        std::back_inserter(common));
  MatchCounts counts;
  counts.tp = common.size();
  counts.fp = pred.size() - common.size();
  counts.fn = gold.size() - common.size();
  return counts;
}

}  // namespace

EvalReport evaluate(std::span<const std::vector<std::string>> pred,
                    std::span<const std::vector<std::string>> gold,
                    const LabelSet& labels) {
  if (pred.size() != gold.size()) {
    throw std::runtime_error("evaluate: page count mismatch");
  }
  EvalReport report;
  report.documents = pred.size();
  for (const auto& name : labels.labels()) {
    report.per_label.emplace_back(name, MatchCounts{});
  }
  for (std::size_t page = 0; page < pred.size(); ++page) {
    if (pred[page].size() != gold[page].size()) {
      throw std::runtime_error("evaluate: tag length mismatch on page " +
                               std::to_string(page));
    }
    const std::vector<Mention> p = tags_to_spans(pred[page]);
    const std::vector<Mention> g = tags_to_spans(gold[page]);
    for (auto& [label, counts] : report.per_label) {
      std::vector<Mention> pl, gl;
      std::copy_if(p.begin(), p.end(), std::back_inserter(pl),
                   [&](const Mention& m) { return m.label == label; });
      std::copy_if(g.begin(), g.end(), std::back_inserter(gl),
                   [&](const Mention& m) { return m.label == label; });
      const MatchCounts c = match_page(std::move(pl), std::move(gl));
      counts.tp += c.tp;
      counts.fp += c.fp;
      counts.fn += c.fn;
    }
  }
  for (const auto& [label, counts] : report.per_label) {
    report.micro.tp += counts.tp;
    report.micro.fp += counts.fp;
    report.micro.fn += counts.fn;
  }
  return report;
}

double per_document_f1(std::span<const std::string> pred,
                       std::span<const std::string> gold) {
  if (pred.size() != gold.size()) {
    throw std::runtime_error("per_document_f1: tag length mismatch");
  }
  const std::vector<Mention> p = tags_to_spans(pred);
  const std::vector<Mention> g = tags_to_spans(gold);
  if (p.empty() && g.empty()) return 1.0;
  return match_page(p, g).f1();
}

SignificanceResult approx_rand_test(std::span<const double> scores_a,
                                    std::span<const double> scores_b,
                                    std::size_t iterations,
                                    std::uint64_t seed) {
  if (scores_a.size() != scores_b.size()) {
    throw std::runtime_error("score lists differ in length");
  }
  if (scores_a.empty()) throw std::runtime_error("empty score lists");
  if (iterations == 0) throw std::runtime_error("iterations must be positive");
  const std::size_t n = scores_a.size();

  const auto mean_diff = [n](std::span<const double> a,
                             std::span<const double> b) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sa += a[i];
      sb += b[i];
    }
    return std::abs(sa - sb) / static_cast<double>(n);
  };

  SignificanceResult result;
  result.observed_diff = mean_diff(scores_a, scores_b);
  result.iterations = iterations;

  std::vector<double> a(scores_a.begin(), scores_a.end());
  std::vector<double> b(scores_b.begin(), scores_b.end());
  for (std::size_t it = 0; it < iterations; ++it) {
    RngStream rng = derive_stream(seed, "swap", it);
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.next_bernoulli(0.5)) {
        a[i] = scores_b[i];
        b[i] = scores_a[i];
      } else {
        a[i] = scores_a[i];
        b[i] = scores_b[i];
      }
    }
    if (mean_diff(a, b) >= result.observed_diff) ++result.exceed_count;
  }
  result.significance_level = static_cast<double>(result.exceed_count) /
                              static_cast<double>(result.iterations);
  return result;
}

SignificanceResult exact_rand_test(std::span<const double> scores_a,
                                   std::span<const double> scores_b) {
  if (scores_a.size() != scores_b.size()) {
    throw std::runtime_error("score lists differ in length");
  }
  if (scores_a.empty()) throw std::runtime_error("empty score lists");
  const std::size_t n = scores_a.size();
  if (n > 20) {
    throw std::runtime_error("exact test enumerates 2^n; n is capped at 20");
  }

  const auto mean_diff = [n](std::span<const double> a,
                             std::span<const double> b) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sa += a[i];
      sb += b[i];
    }
    return std::abs(sa - sb) / static_cast<double>(n);
  };

  SignificanceResult result;
  result.observed_diff = mean_diff(scores_a, scores_b);
  result.iterations = std::size_t{1} << n;

  std::vector<double> a(n), b(n);
  for (std::uint64_t assignment = 0; assignment < result.iterations;
       ++assignment) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool swap = (assignment >> i) & 1u;
      a[i] = swap ? scores_b[i] : scores_a[i];
      b[i] = swap ? scores_a[i] : scores_b[i];
    }
    if (mean_diff(a, b) >= result.observed_diff) ++result.exceed_count;
  }
  result.significance_level = static_cast<double>(result.exceed_count) /
                              static_cast<double>(result.iterations);
  return result;
}

std::vector<double> load_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open score file " + path);
  std::vector<double> scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      scores.push_back(std::stod(line));
    } catch (const std::exception&) {
      std::ostringstream os;
      os << path << ":" << line_no << ": not a number";
      throw std::runtime_error(os.str());
    }
  }
  if (scores.empty()) throw std::runtime_error("score file " + path + " is empty");
  return scores;
}

void save_scores(std::span<const double> scores, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open score file " + path);
  out << std::setprecision(17);
  for (const double s : scores) out << s << "\n";
  if (!out) throw std::runtime_error("score write failed: " + path);
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(30) << "Label" << std::right << std::setw(7)
     << "TP" << std::setw(7) << "FP" << std::setw(7) << "FN" << std::setw(10)
     << "Prec" << std::setw(10) << "Recall" << std::setw(10) << "F1" << "\n";
  const auto row = [&os](const std::string& name, const MatchCounts& c) {
    os << std::left << std::setw(30) << name << std::right << std::setw(7)
       << c.tp << std::setw(7) << c.fp << std::setw(7) << c.fn << std::fixed
       << std::setprecision(4) << std::setw(10) << c.precision()
       << std::setw(10) << c.recall() << std::setw(10) << c.f1()
       << std::defaultfloat << "\n";
  };
  for (const auto& [label, counts] : report.per_label) row(label, counts);
  row("micro", report.micro);
  os << "documents: " << report.documents << "\n";
  return os.str();
}

namespace {

nlohmann::json counts_json(const MatchCounts& c) {
  return {{"tp", c.tp},         {"fp", c.fp},
          {"fn", c.fn},         {"precision", c.precision()},
          {"recall", c.recall()}, {"f1", c.f1()}};
}

}  // namespace

std::string report_json(const EvalReport& report) {
  nlohmann::json j;
  j["documents"] = report.documents;
  j["micro"] = counts_json(report.micro);
  nlohmann::json per_label = nlohmann::json::object();
  for (const auto& [label, counts] : report.per_label) {
    per_label[label] = counts_json(counts);
  }
  j["per_label"] = std::move(per_label);
  return j.dump();
}

std::string significance_json(const SignificanceResult& r) {
  nlohmann::json j;
  j["observed_diff"] = r.observed_diff;
  j["iterations"] = r.iterations;
  j["exceed_count"] = r.exceed_count;
  j["significance_level"] = r.significance_level;
  j["highly_significant"] = r.highly_significant();
  return j.dump();
}

}  // namespace layoutlab
