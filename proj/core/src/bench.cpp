#include "layoutlab/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace layoutlab {

namespace {

double quantile_nearest_rank(std::span<const double> sorted, double q) {
  const auto n = sorted.size();
  const auto rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(n)));
  return sorted[std::min(n - 1, rank == 0 ? 0 : rank - 1)];
}

}  // namespace

TimingReport time_page_fn(const std::function<void(std::size_t)>& run_page,
                          std::size_t num_pages, std::size_t warmup,
                          std::size_t reps) {
  if (num_pages == 0) throw std::runtime_error("nothing to measure");
  if (reps < 3) throw std::runtime_error("reps must be at least 3");
  if (warmup < 1) throw std::runtime_error("warmup must be at least 1");

  using clock = std::chrono::steady_clock;
  for (std::size_t w = 0; w < warmup; ++w) {
    for (std::size_t p = 0; p < num_pages; ++p) run_page(p);
  }
  std::vector<double> samples;
  samples.reserve(reps * num_pages);
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t p = 0; p < num_pages; ++p) {
      const auto t0 = clock::now();
      run_page(p);
      const auto t1 = clock::now();
      samples.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  std::sort(samples.begin(), samples.end());

  TimingReport report;
  report.pages_measured = num_pages;
  report.warmup = warmup;
  report.reps = reps;
  report.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) /
                   static_cast<double>(samples.size());
  report.median_ms = quantile_nearest_rank(samples, 0.5);
  report.p95_ms = quantile_nearest_rank(samples, 0.95);
  return report;
}

TimingReport time_inference(const Checkpoint& ckpt,
                            std::span<const Page> pages, const Vocab& vocab,
                            std::size_t k_layers, std::size_t warmup,
                            std::size_t reps) {
  if (k_layers < 1 || k_layers > ckpt.config.layers) {
    throw std::runtime_error("k_layers out of range");
  }
  if (pages.empty()) throw std::runtime_error("empty benchmark corpus");
  Model<float> model = model_from_checkpoint<float>(ckpt);

  // Encoding happens here, outside the measured region.
  std::vector<EncodedBatch> batches;
  batches.reserve(pages.size());
  for (const Page& page : pages) {
    const EncodedPage encoded =
        encode_page(page, vocab, model.config().max_seq);
    batches.push_back(EncodedBatch::pad({&encoded, 1}));
  }

  TimingReport report = time_page_fn(
      [&](std::size_t p) { model.encode(batches[p], k_layers); },
      pages.size(), warmup, reps);
  report.layer_count = k_layers;
  report.batch_size = 1;
  report.max_seq = model.config().max_seq;
  return report;
}

std::vector<DepthRow> depth_sweep(const Checkpoint& ckpt,
                                  std::span<const Page> pages,
                                  const Vocab& vocab, const LabelSet* labels,
                                  std::span<const std::size_t> depths,
                                  std::size_t warmup, std::size_t reps) {
  if (depths.empty()) throw std::runtime_error("no depths requested");
  std::vector<DepthRow> rows;
  rows.reserve(depths.size());
  for (const std::size_t k : depths) {
    DepthRow row;
    row.timing = time_inference(ckpt, pages, vocab, k, warmup, reps);
    if (labels != nullptr) {
      Model<float> model = model_from_checkpoint<float>(ckpt);
      std::vector<std::vector<std::string>> gold;
      gold.reserve(pages.size());
      for (const Page& page : pages) {
        if (!page.tags) {
          throw std::runtime_error("depth sweep evaluation needs tagged pages");
        }
        gold.push_back(*page.tags);
      }
      const auto pred = predict_tags(model, pages, vocab, *labels, k);
      row.eval = evaluate(pred, gold, *labels);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_timing_table(std::span<const DepthRow> rows) {
  std::ostringstream os;
  os << std::right << std::setw(7) << "layers" << std::setw(10) << "pages"
     << std::setw(12) << "mean ms" << std::setw(12) << "median ms"
     << std::setw(12) << "p95 ms" << std::setw(10) << "F1" << "\n";
  for (const DepthRow& row : rows) {
    os << std::right << std::setw(7) << row.timing.layer_count << std::setw(10)
       << row.timing.pages_measured << std::fixed << std::setprecision(3)
       << std::setw(12) << row.timing.mean_ms << std::setw(12)
       << row.timing.median_ms << std::setw(12) << row.timing.p95_ms
       << std::defaultfloat;
    if (row.eval) {
      os << std::fixed << std::setprecision(4) << std::setw(10)
         << row.eval->micro.f1() << std::defaultfloat;
    } else {
      os << std::setw(10) << "-";
    }
    os << "\n";
  }
  return os.str();
}

std::string timing_json(std::span<const DepthRow> rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const DepthRow& row : rows) {
    nlohmann::json j;
    j["layers"] = row.timing.layer_count;
    j["pages"] = row.timing.pages_measured;
    j["warmup"] = row.timing.warmup;
    j["reps"] = row.timing.reps;
    j["batch_size"] = row.timing.batch_size;
    j["max_seq"] = row.timing.max_seq;
    j["mean_ms"] = row.timing.mean_ms;
    j["median_ms"] = row.timing.median_ms;
    j["p95_ms"] = row.timing.p95_ms;
    if (row.eval) j["micro_f1"] = row.eval->micro.f1();
    arr.push_back(std::move(j));
  }
  return arr.dump();
}

}  // namespace layoutlab
