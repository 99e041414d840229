#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layoutlab/checkpoint.hpp"
#include "layoutlab/encode.hpp"
#include "layoutlab/metrics.hpp"
#include "layoutlab/model.hpp"

namespace layoutlab {

// Paper-scale defaults; desk-scale runs override batch/epochs.
struct PretrainConfig {
  std::size_t batch_size = 80;
  std::size_t epochs = 5;
  double base_lr = 5e-5;
  double warmup_fraction = 0.05;
  double mask_rate = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

// Constant learning rate throughout, per the fine-tuning protocol.
struct FinetuneConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  double lr = 5e-5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam without weight decay. One state slot per parameter,
// keyed by position in the parameter list.
template <typename T>
class AdamState {
 public:
  explicit AdamState(AdamParams params = {}) : params_(params) {}

  std::size_t step_count() const { return t_; }

  // Applies one update from the accumulated gradients. Throws on non-finite
  // gradients, naming the offending parameter.
  void step(std::span<Parameter<T>* const> params, double lr);

 private:
  AdamParams params_;
  std::size_t t_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

// Linear warmup to base_lr over w = round(warmup_fraction * total) steps
// (at least one), then cosine decay to zero at step = total.
double lr_schedule(std::size_t step, std::size_t total, double warmup_fraction,
                   double base_lr);

// Masked copy of a batch plus MLM targets (-1 = ignore). Per page,
// max(1, round(mask_rate * candidates)) of the non-special positions are
// selected; of those 80% become MASK, 10% a random non-special token and
// 10% stay unchanged. Boxes and positions are never altered.
struct MaskedBatch {
  EncodedBatch batch;
  std::vector<int> targets;
  std::size_t selected = 0;
};

MaskedBatch mask_batch(const EncodedBatch& batch, double mask_rate,
                       std::size_t vocab_size, RngStream& rng);

struct LossPoint {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

// One fine-tuning outcome; bit-reproducible from (checkpoint, config,
// corpus, seed) apart from the wall-clock field.
struct RunSummary {
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  std::optional<EvalReport> eval;
  std::vector<double> per_document_f1;
  double seconds = 0.0;

  double micro_f1() const { return eval ? eval->micro.f1() : 0.0; }
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<LossPoint> loss_curve;
};

// MLM pre-training: shuffled epochs, masking, cross-entropy on the masked
// positions, Adam under the warmup+cosine schedule. Pages may be unlabeled.
PretrainResult pretrain(std::span<const Page> pages, const Vocab& vocab,
                        const ModelConfig& model_config,
                        const PretrainConfig& config);

struct FinetuneResult {
  Checkpoint checkpoint;
  RunSummary summary;
};

// Full fine-tuning (encoder + freshly seeded NER head) with constant lr.
// When eval_pages is null the training pages themselves are scored.
FinetuneResult finetune(const Checkpoint& start, std::span<const Page> pages,
                        const LabelSet& labels, const FinetuneConfig& config,
                        const Vocab& vocab,
                        const std::vector<Page>* eval_pages = nullptr);

// Word-level predicted tags for each page; words beyond max_seq keep "O".
std::vector<std::vector<std::string>> predict_tags(
    Model<float>& model, std::span<const Page> pages, const Vocab& vocab,
    const LabelSet& labels, std::optional<std::size_t> k_layers = {},
    std::size_t batch_size = 16);

// Deterministic masked-token reconstruction accuracy over a corpus, using
// the same masking policy with a fixed stream per batch.
double mlm_masked_accuracy(Model<float>& model, std::span<const Page> pages,
                           const Vocab& vocab, double mask_rate,
                           std::uint64_t seed, std::size_t batch_size,
                           std::size_t max_seq);

struct MultiRunSummary {
  std::vector<RunSummary> runs;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;  // sample standard deviation
  double min_f1 = 0.0;
  double max_f1 = 0.0;
  std::vector<std::string> failures;  // per-seed error messages, if any
};

// Independent fine-tuning runs over the given seeds; failures are recorded
// and remaining seeds still run.
MultiRunSummary multi_run(const Checkpoint& start, std::span<const Page> pages,
                          const LabelSet& labels, const FinetuneConfig& base,
                          std::span<const std::uint64_t> seeds,
                          const Vocab& vocab,
                          const std::vector<Page>* eval_pages = nullptr);

void write_loss_log(std::span<const LossPoint> curve, const std::string& path);
std::string run_summary_json(const RunSummary& summary);

}  // namespace layoutlab
