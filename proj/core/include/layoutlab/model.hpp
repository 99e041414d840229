#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layoutlab/encode.hpp"
#include "layoutlab/rng.hpp"
#include "layoutlab/tape.hpp"

namespace layoutlab {

// Encoder hyperparameters. Desk-scale defaults; the paper-scale encoder
// (hidden 768, 12 layers, 12 heads) is expressible with the same fields.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden = 128;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t ff_dim = 512;
  std::size_t max_seq = 128;
  std::size_t coord_bins = 1001;  // grid 0..1000 inclusive
  double dropout = 0.1;
  double layer_norm_eps = 1e-12;
  double init_std = 0.02;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// `key = value` lines; unknown keys are errors.
ModelConfig parse_model_config(const std::string& path);
ModelConfig parse_model_config_text(const std::string& text,
                                    std::string_view source_name);
std::string model_config_text(const ModelConfig& config);

// Optional per-forward training behavior. Null rng (or dropout 0) runs the
// deterministic inference path.
template <typename T>
struct ForwardOptions {
  RngStream* dropout_rng = nullptr;
  std::optional<std::size_t> k_layers;  // bottom-k prefix; default all
};

// The encoder: token + 1D position + six spatial embeddings, summed and
// normalized, then a post-norm self-attentive stack, with MLM and NER
// projection heads.
template <typename T>
class Model {
 public:
  struct LayerWeights {
    Parameter<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter<T> attn_norm_gain, attn_norm_bias;
    Parameter<T> ff_inner_w, ff_inner_b, ff_outer_w, ff_outer_b;
    Parameter<T> ff_norm_gain, ff_norm_bias;
  };

  Model() = default;

  static Model random_init(const ModelConfig& config, RngStream& rng);

  const ModelConfig& config() const { return config_; }
  std::size_t ner_tags() const { return ner_tags_; }
  const std::vector<std::string>& ner_labels() const { return ner_labels_; }

  // Freshly (re)initializes the NER head; this is the layer whose seed
  // varies across fine-tuning runs.
  void init_ner_head(std::span<const std::string> labels, RngStream& rng);

  // All parameters in checkpoint order. Stable names: "embeddings.*",
  // "layer<i>.*", "head.*".
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  void zero_grads();

  // LayerNorm(token + position + x0/x1 + y0/y1 + width + height), then
  // dropout. Returns [B*S, hidden] on the tape.
  typename Tape<T>::Id embed(Tape<T>& tape, const EncodedBatch& batch,
                             const ForwardOptions<T>& opts = {});

  // Full encoder: embed then the bottom k self-attentive layers.
  // Returns [B*S, hidden].
  typename Tape<T>::Id forward(Tape<T>& tape, const EncodedBatch& batch,
                               const ForwardOptions<T>& opts = {});

  typename Tape<T>::Id mlm_logits(Tape<T>& tape, typename Tape<T>::Id hidden);
  typename Tape<T>::Id ner_logits(Tape<T>& tape, typename Tape<T>::Id hidden);

  // Convenience inference entry point (no gradient recording).
  Tensor<T> encode(const EncodedBatch& batch,
                   std::optional<std::size_t> k_layers = {});

  ModelConfig config_;
  Parameter<T> tok_emb_, pos_emb_, x_emb_, y_emb_, w_emb_, h_emb_;
  Parameter<T> emb_norm_gain_, emb_norm_bias_;
  std::vector<LayerWeights> layers_;
  Parameter<T> mlm_w_, mlm_b_;
  Parameter<T> ner_w_, ner_b_;
  std::size_t ner_tags_ = 0;
  std::vector<std::string> ner_labels_;

 private:
  typename Tape<T>::Id encoder_layer(Tape<T>& tape, typename Tape<T>::Id h,
                                     typename Tape<T>::Id col_mask,
                                     LayerWeights& layer,
                                     const ForwardOptions<T>& opts);
};

// Large negative finite attention bias: exp() underflows to exactly zero,
// which keeps pad columns bit-invisible without introducing infinities.
inline constexpr double kAttnMaskValue = -1e9;

extern template class Model<float>;
extern template class Model<double>;

}  // namespace layoutlab
