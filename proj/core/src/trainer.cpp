#include "layoutlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace layoutlab {

void PretrainConfig::validate() const {
  if (batch_size == 0) throw std::runtime_error("batch_size must be positive");
  if (epochs == 0) throw std::runtime_error("epochs must be positive");
  if (base_lr <= 0.0) throw std::runtime_error("base_lr must be positive");
  if (warmup_fraction <= 0.0 || warmup_fraction >= 1.0) {
    throw std::runtime_error("warmup_fraction must be in (0, 1)");
  }
  if (mask_rate <= 0.0 || mask_rate >= 1.0) {
    throw std::runtime_error("mask_rate must be in (0, 1)");
  }
}

void FinetuneConfig::validate() const {
  if (batch_size == 0) throw std::runtime_error("batch_size must be positive");
  if (epochs == 0) throw std::runtime_error("epochs must be positive");
  if (lr <= 0.0) throw std::runtime_error("lr must be positive");
}

double lr_schedule(std::size_t step, std::size_t total, double warmup_fraction,
                   double base_lr) {
  if (total == 0) throw std::runtime_error("schedule needs total > 0");
  if (step > total) throw std::runtime_error("step exceeds total");
  const auto warmup = static_cast<std::size_t>(std::max<long long>(
      1, std::llround(warmup_fraction * static_cast<double>(total))));
  if (step < warmup) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total == warmup) return base_lr;  // zero-length cosine phase
  const double phase = static_cast<double>(step - warmup) /
                       static_cast<double>(total - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

MaskedBatch mask_batch(const EncodedBatch& batch, double mask_rate,
                       std::size_t vocab_size, RngStream& rng) {
  if (mask_rate <= 0.0 || mask_rate >= 1.0) {
    throw std::runtime_error("mask_rate must be in (0, 1)");
  }
  if (vocab_size <= Vocab::kNumReserved) {
    throw std::runtime_error("vocabulary has no maskable tokens");
  }
  MaskedBatch out;
  out.batch = batch;
  out.targets.assign(batch.token_ids.size(), -1);

  std::vector<std::size_t> candidates;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    candidates.clear();
    for (std::size_t s = 0; s < batch.seq; ++s) {
      const std::size_t i = batch.index(b, s);
      if (batch.word_index[i] >= 0) candidates.push_back(i);
    }
    if (candidates.empty()) continue;  // nothing maskable on this page

    const auto want = static_cast<std::size_t>(std::max<long long>(
        1, std::llround(mask_rate * static_cast<double>(candidates.size()))));
    const std::size_t take = std::min(want, candidates.size());
    for (std::size_t j = 0; j < take; ++j) {
      const std::size_t pick = j + rng.next_below(candidates.size() - j);
      std::swap(candidates[j], candidates[pick]);
      const std::size_t i = candidates[j];
      out.targets[i] = batch.token_ids[i];
      ++out.selected;
      const double u = rng.next_unit();
      if (u < 0.8) {
        out.batch.token_ids[i] = Vocab::kMask;
      } else if (u < 0.9) {
        out.batch.token_ids[i] = static_cast<int>(
            Vocab::kNumReserved +
            rng.next_below(vocab_size - Vocab::kNumReserved));
      }
      // else: left unchanged, still a reconstruction target
    }
  }
  return out;
}

template <typename T>
void AdamState<T>::step(std::span<Parameter<T>* const> params, double lr) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Parameter<T>* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) {
    throw std::runtime_error("optimizer state does not match parameter list");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
  const T beta1 = static_cast<T>(params_.beta1);
  const T beta2 = static_cast<T>(params_.beta2);
  const T one_minus_b1 = T{1} - beta1;
  const T one_minus_b2 = T{1} - beta2;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<T>& p = *params[pi];
    if (!p.grad.all_finite()) {
      throw std::runtime_error("non-finite gradient in " + p.name +
                               "; aborting step " + std::to_string(t_));
    }
    Tensor<T>& m = m_[pi];
    Tensor<T>& v = v_[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = beta1 * m[i] + one_minus_b1 * g;
      v[i] = beta2 * v[i] + one_minus_b2 * g * g;
      const double m_hat = static_cast<double>(m[i]) / c1;
      const double v_hat = static_cast<double>(v[i]) / c2;
      p.value[i] -= static_cast<T>(lr * m_hat /
                                   (std::sqrt(v_hat) + params_.eps));
    }
  }
}

template class AdamState<float>;
template class AdamState<double>;

namespace {

std::vector<EncodedPage> encode_all(std::span<const Page> pages,
                                    const Vocab& vocab, std::size_t max_seq) {
  std::vector<EncodedPage> encoded;
  encoded.reserve(pages.size());
  for (const Page& page : pages) {
    encoded.push_back(encode_page(page, vocab, max_seq));
  }
  return encoded;
}

EncodedBatch gather_batch(std::span<const EncodedPage> encoded,
                          std::span<const std::size_t> ids) {
  std::vector<EncodedPage> views;
  views.reserve(ids.size());
  for (const std::size_t id : ids) views.push_back(encoded[id]);
  return EncodedBatch::pad(views);
}

}  // namespace

PretrainResult pretrain(std::span<const Page> pages, const Vocab& vocab,
                        const ModelConfig& model_config,
                        const PretrainConfig& config) {
  config.validate();
  if (pages.empty()) throw std::runtime_error("empty corpus");
  if (model_config.vocab_size != vocab.size()) {
    throw std::runtime_error("model vocab_size does not match the vocabulary");
  }

  RngStream init_rng = derive_stream(config.seed, "init");
  Model<float> model = Model<float>::random_init(model_config, init_rng);
  const std::vector<Parameter<float>*> params = model.parameters();

  const std::vector<EncodedPage> encoded =
      encode_all(pages, vocab, model_config.max_seq);
  const std::size_t steps_per_epoch =
      (pages.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * steps_per_epoch;

  AdamState<float> adam;
  PretrainResult result;
  std::vector<std::size_t> order(pages.size());
  std::iota(order.begin(), order.end(), 0);

  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream shuffle_rng = derive_stream(config.seed, "shuffle", epoch);
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size, ++global_step) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      const EncodedBatch batch =
          gather_batch(encoded, std::span(order).subspan(start, count));
      RngStream mask_rng = derive_stream(config.seed, "mask", global_step);
      MaskedBatch masked =
          mask_batch(batch, config.mask_rate, vocab.size(), mask_rng);
      const double lr =
          lr_schedule(global_step, total_steps, config.warmup_fraction,
                      config.base_lr);
      if (masked.selected == 0) continue;  // every page in the batch was empty

      model.zero_grads();
      Tape<float> tape;
      RngStream dropout_rng = derive_stream(config.seed, "dropout", global_step);
      ForwardOptions<float> opts;
      opts.dropout_rng = &dropout_rng;
      const auto hidden = model.forward(tape, masked.batch, opts);
      const auto logits = model.mlm_logits(tape, hidden);
      const auto loss = tape.cross_entropy(logits, std::move(masked.targets));
      tape.backward(loss);
      adam.step(params, lr);
      result.loss_curve.push_back(
          {global_step, lr, static_cast<double>(tape.value(loss)[0])});
    }
  }
  result.checkpoint = to_checkpoint(model, vocab);
  return result;
}

namespace {

// Gold tag index per token (-1 for specials); throws on unlabeled pages or
// tags outside the codec.
std::vector<int> ner_targets(const EncodedBatch& batch,
                             std::span<const Page> pages,
                             std::span<const std::size_t> ids,
                             const TagCodec& codec) {
  std::vector<int> targets(batch.token_ids.size(), -1);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const Page& page = pages[ids[b]];
    if (!page.tags) {
      throw std::runtime_error("unlabeled page \"" + page.doc_id +
                               "\" in fine-tuning corpus");
    }
    for (std::size_t s = 0; s < batch.seq; ++s) {
      const std::size_t i = batch.index(b, s);
      const int w = batch.word_index[i];
      if (w < 0) continue;
      const int tag = codec.index_of((*page.tags)[static_cast<std::size_t>(w)]);
      if (tag < 0) {
        throw std::runtime_error("tag \"" +
                                 (*page.tags)[static_cast<std::size_t>(w)] +
                                 "\" is not in the fine-tuning tagset");
      }
      targets[i] = tag;
    }
  }
  return targets;
}

}  // namespace

std::vector<std::vector<std::string>> predict_tags(
    Model<float>& model, std::span<const Page> pages, const Vocab& vocab,
    const LabelSet& labels, std::optional<std::size_t> k_layers,
    std::size_t batch_size) {
  const TagCodec codec(labels);
  if (model.ner_tags() != codec.size()) {
    throw std::runtime_error("model NER head does not match the label set");
  }
  std::vector<std::vector<std::string>> out;
  out.reserve(pages.size());
  const std::vector<EncodedPage> encoded =
      encode_all(pages, vocab, model.config().max_seq);
  for (std::size_t start = 0; start < pages.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, pages.size() - start);
    std::vector<std::size_t> ids(count);
    std::iota(ids.begin(), ids.end(), start);
    const EncodedBatch batch = gather_batch(encoded, ids);

    Tape<float> tape(/*recording=*/false);
    ForwardOptions<float> opts;
    opts.k_layers = k_layers;
    const auto hidden = model.forward(tape, batch, opts);
    const auto logits_id = model.ner_logits(tape, hidden);
    const Tensor<float>& logits = tape.value(logits_id);

    for (std::size_t b = 0; b < count; ++b) {
      std::vector<std::string> tags(pages[start + b].words.size(), "O");
      for (std::size_t s = 0; s < batch.seq; ++s) {
        const std::size_t i = batch.index(b, s);
        const int w = batch.word_index[i];
        if (w < 0) continue;
        std::size_t best = 0;
        for (std::size_t c = 1; c < codec.size(); ++c) {
          if (logits.at(i, c) > logits.at(i, best)) best = c;
        }
        tags[static_cast<std::size_t>(w)] = codec.name(best);
      }
      out.push_back(std::move(tags));
    }
  }
  return out;
}

FinetuneResult finetune(const Checkpoint& start, std::span<const Page> pages,
                        const LabelSet& labels, const FinetuneConfig& config,
                        const Vocab& vocab,
                        const std::vector<Page>* eval_pages) {
  config.validate();
  if (pages.empty()) throw std::runtime_error("empty fine-tuning corpus");
  start.require_vocab(vocab);
  for (const Page& page : pages) {
    if (!page.tags) {
      throw std::runtime_error("unlabeled page \"" + page.doc_id +
                               "\" in fine-tuning corpus");
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  Model<float> model = model_from_checkpoint<float>(start);
  RngStream head_rng = derive_stream(config.seed, "head-init");
  model.init_ner_head(labels.labels(), head_rng);
  const std::vector<Parameter<float>*> params = model.parameters();
  const TagCodec codec(labels);

  const std::vector<EncodedPage> encoded =
      encode_all(pages, vocab, model.config().max_seq);
  AdamState<float> adam;
  std::vector<std::size_t> order(pages.size());
  std::iota(order.begin(), order.end(), 0);

  double last_loss = 0.0;
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream shuffle_rng = derive_stream(config.seed, "shuffle", epoch);
    shuffle_rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size();
         begin += config.batch_size, ++global_step) {
      const std::size_t count = std::min(config.batch_size, order.size() - begin);
      const auto ids = std::span(order).subspan(begin, count);
      const EncodedBatch batch = gather_batch(encoded, ids);
      std::vector<int> targets = ner_targets(batch, pages, ids, codec);

      model.zero_grads();
      Tape<float> tape;
      RngStream dropout_rng = derive_stream(config.seed, "dropout", global_step);
      ForwardOptions<float> opts;
      opts.dropout_rng = &dropout_rng;
      const auto hidden = model.forward(tape, batch, opts);
      const auto logits = model.ner_logits(tape, hidden);
      const auto loss = tape.cross_entropy(logits, std::move(targets));
      tape.backward(loss);
      adam.step(params, config.lr);
      last_loss = static_cast<double>(tape.value(loss)[0]);
    }
  }

  FinetuneResult result;
  result.summary.seed = config.seed;
  result.summary.final_loss = last_loss;

  const std::span<const Page> scored =
      eval_pages != nullptr ? std::span<const Page>(*eval_pages) : pages;
  std::vector<std::vector<std::string>> gold;
  gold.reserve(scored.size());
  for (const Page& page : scored) {
    if (!page.tags) {
      throw std::runtime_error("unlabeled page \"" + page.doc_id +
                               "\" in evaluation corpus");
    }
    gold.push_back(*page.tags);
  }
  const auto pred = predict_tags(model, scored, vocab, labels);
  result.summary.eval = evaluate(pred, gold, labels);
  result.summary.per_document_f1.reserve(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) {
    result.summary.per_document_f1.push_back(per_document_f1(pred[i], gold[i]));
  }

  result.checkpoint = to_checkpoint(model, vocab);
  result.summary.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

double mlm_masked_accuracy(Model<float>& model, std::span<const Page> pages,
                           const Vocab& vocab, double mask_rate,
                           std::uint64_t seed, std::size_t batch_size,
                           std::size_t max_seq) {
  const std::vector<EncodedPage> encoded = encode_all(pages, vocab, max_seq);
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < pages.size();
       start += batch_size, ++batch_index) {
    const std::size_t count = std::min(batch_size, pages.size() - start);
    std::vector<std::size_t> ids(count);
    std::iota(ids.begin(), ids.end(), start);
    const EncodedBatch batch = gather_batch(encoded, ids);
    RngStream mask_rng = derive_stream(seed, "mask-eval", batch_index);
    const MaskedBatch masked =
        mask_batch(batch, mask_rate, vocab.size(), mask_rng);
    if (masked.selected == 0) continue;

    Tape<float> tape(/*recording=*/false);
    const auto hidden = model.forward(tape, masked.batch);
    const auto logits_id = model.mlm_logits(tape, hidden);
    const Tensor<float>& logits = tape.value(logits_id);
    for (std::size_t i = 0; i < masked.targets.size(); ++i) {
      const int target = masked.targets[i];
      if (target < 0) continue;
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c) {
        if (logits.at(i, c) > logits.at(i, best)) best = c;
      }
      ++total;
      if (best == static_cast<std::size_t>(target)) ++correct;
    }
  }
  if (total == 0) throw std::runtime_error("no maskable tokens in corpus");
  return static_cast<double>(correct) / static_cast<double>(total);
}

MultiRunSummary multi_run(const Checkpoint& start, std::span<const Page> pages,
                          const LabelSet& labels, const FinetuneConfig& base,
                          std::span<const std::uint64_t> seeds,
                          const Vocab& vocab,
                          const std::vector<Page>* eval_pages) {
  if (seeds.size() < 2) {
    throw std::runtime_error("multi_run needs at least 2 seeds");
  }
  MultiRunSummary summary;
  std::vector<double> f1s;
  for (const std::uint64_t seed : seeds) {
    FinetuneConfig config = base;
    config.seed = seed;
    try {
      FinetuneResult run = finetune(start, pages, labels, config, vocab,
                                    eval_pages);
      f1s.push_back(run.summary.micro_f1());
      summary.runs.push_back(std::move(run.summary));
    } catch (const std::exception& e) {
      summary.failures.push_back("seed " + std::to_string(seed) + ": " +
                                 e.what());
    }
  }
  if (!f1s.empty()) {
    const double mean =
        std::accumulate(f1s.begin(), f1s.end(), 0.0) /
        static_cast<double>(f1s.size());
    double ss = 0.0;
    for (const double f : f1s) ss += (f - mean) * (f - mean);
    summary.mean_f1 = mean;
    summary.std_f1 =
        f1s.size() > 1 ? std::sqrt(ss / static_cast<double>(f1s.size() - 1))
                       : 0.0;
    summary.min_f1 = *std::min_element(f1s.begin(), f1s.end());
    summary.max_f1 = *std::max_element(f1s.begin(), f1s.end());
  }
  return summary;
}

void write_loss_log(std::span<const LossPoint> curve, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open loss log " + path);
  out << std::setprecision(10);
  for (const LossPoint& p : curve) {
    out << p.step << "\t" << p.lr << "\t" << p.loss << "\n";
  }
  if (!out) throw std::runtime_error("loss log write failed: " + path);
}

std::string run_summary_json(const RunSummary& summary) {
  nlohmann::json j;
  j["seed"] = summary.seed;
  j["f1"] = summary.eval ? summary.eval->micro.f1() : 0.0;
  j["precision"] = summary.eval ? summary.eval->micro.precision() : 0.0;
  j["recall"] = summary.eval ? summary.eval->micro.recall() : 0.0;
  j["final_loss"] = summary.final_loss;
  j["seconds"] = summary.seconds;
  return j.dump();
}

}  // namespace layoutlab
