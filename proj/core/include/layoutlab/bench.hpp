#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layoutlab/checkpoint.hpp"
#include "layoutlab/metrics.hpp"
#include "layoutlab/trainer.hpp"

namespace layoutlab {

// Per-page forward-pass latency statistics. Warmup passes are excluded;
// quantiles are nearest-rank so median <= p95 by construction.
struct TimingReport {
  std::size_t layer_count = 0;
  std::size_t pages_measured = 0;
  std::size_t warmup = 0;
  std::size_t reps = 0;
  std::size_t batch_size = 1;
  std::size_t max_seq = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

// Times an arbitrary per-page callable. The measured region covers exactly
// one invocation; ingestion and encoding stay outside. This is the core the
// tests drive with a no-op body to bound harness overhead.
TimingReport time_page_fn(const std::function<void(std::size_t)>& run_page,
                          std::size_t num_pages, std::size_t warmup,
                          std::size_t reps);

// Forward-only passes (no gradient recording) at depth k_layers, one page
// per pass, identical inputs across depth settings.
TimingReport time_inference(const Checkpoint& ckpt,
                            std::span<const Page> pages, const Vocab& vocab,
                            std::size_t k_layers, std::size_t warmup,
                            std::size_t reps);

struct DepthRow {
  TimingReport timing;
  std::optional<EvalReport> eval;  // present when the corpus is labeled
};

// One row per depth: latency plus labeled micro-F1 on the same inputs.
std::vector<DepthRow> depth_sweep(const Checkpoint& ckpt,
                                  std::span<const Page> pages,
                                  const Vocab& vocab,
                                  const LabelSet* labels,
                                  std::span<const std::size_t> depths,
                                  std::size_t warmup, std::size_t reps);

std::string format_timing_table(std::span<const DepthRow> rows);
std::string timing_json(std::span<const DepthRow> rows);

}  // namespace layoutlab
