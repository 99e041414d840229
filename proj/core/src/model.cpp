#include "layoutlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace layoutlab {

void ModelConfig::validate() const {
  if (vocab_size < Vocab::kNumReserved + 1) {
    throw std::runtime_error("vocab_size must cover the reserved ids");
  }
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw std::runtime_error("hidden must be divisible by heads");
  }
  if (layers < 1) throw std::runtime_error("layers must be >= 1");
  if (ff_dim == 0) throw std::runtime_error("ff_dim must be positive");
  if (max_seq < 3) throw std::runtime_error("max_seq must be at least 3");
  if (coord_bins != 1001) {
    throw std::runtime_error("coord_bins must be 1001 (grid 0..1000)");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::runtime_error("dropout must be in [0, 1)");
  }
  if (layer_norm_eps <= 0.0) throw std::runtime_error("layer_norm_eps must be > 0");
  if (init_std <= 0.0) throw std::runtime_error("init_std must be > 0");
}

ModelConfig parse_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model_config_text(buf.str(), path);
}

ModelConfig parse_model_config_text(const std::string& text,
                                    std::string_view source_name) {
  ModelConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  const auto trim = [](std::string s) {
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    return s;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      std::ostringstream os;
      os << source_name << ":" << line_no << ": expected key = value";
      throw std::runtime_error(os.str());
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    try {
      if (key == "vocab_size") config.vocab_size = std::stoull(value);
      else if (key == "hidden") config.hidden = std::stoull(value);
      else if (key == "layers") config.layers = std::stoull(value);
      else if (key == "heads") config.heads = std::stoull(value);
      else if (key == "ff_dim") config.ff_dim = std::stoull(value);
      else if (key == "max_seq") config.max_seq = std::stoull(value);
      else if (key == "coord_bins") config.coord_bins = std::stoull(value);
      else if (key == "dropout") config.dropout = std::stod(value);
      else if (key == "layer_norm_eps") config.layer_norm_eps = std::stod(value);
      else if (key == "init_std") config.init_std = std::stod(value);
      else {
        std::ostringstream os;
        os << source_name << ":" << line_no << ": unknown key \"" << key << "\"";
        throw std::runtime_error(os.str());
      }
    } catch (const std::invalid_argument&) {
      std::ostringstream os;
      os << source_name << ":" << line_no << ": bad value for \"" << key << "\"";
      throw std::runtime_error(os.str());
    }
  }
  return config;
}

std::string model_config_text(const ModelConfig& c) {
  std::ostringstream os;
  os << "vocab_size = " << c.vocab_size << "\n"
     << "hidden = " << c.hidden << "\n"
     << "layers = " << c.layers << "\n"
     << "heads = " << c.heads << "\n"
     << "ff_dim = " << c.ff_dim << "\n"
     << "max_seq = " << c.max_seq << "\n"
     << "coord_bins = " << c.coord_bins << "\n"
     << "dropout = " << c.dropout << "\n"
     << "layer_norm_eps = " << c.layer_norm_eps << "\n"
     << "init_std = " << c.init_std << "\n";
  return os.str();
}

namespace {

template <typename T>
Tensor<T> trunc_normal(std::vector<std::size_t> shape, double std_dev,
                       RngStream& rng) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(rng.next_trunc_normal(std_dev));
  return t;
}

template <typename T>
Tensor<T> zeros(std::vector<std::size_t> shape) {
  return Tensor<T>(std::move(shape));
}

template <typename T>
Tensor<T> ones(std::vector<std::size_t> shape) {
  return Tensor<T>::full(std::move(shape), T{1});
}

}  // namespace

template <typename T>
Model<T> Model<T>::random_init(const ModelConfig& config, RngStream& rng) {
  config.validate();
  Model<T> m;
  m.config_ = config;
  const std::size_t h = config.hidden;
  const double std_dev = config.init_std;

  m.tok_emb_ = {"embeddings.token",
                trunc_normal<T>({config.vocab_size, h}, std_dev, rng)};
  m.pos_emb_ = {"embeddings.position",
                trunc_normal<T>({config.max_seq, h}, std_dev, rng)};
  m.x_emb_ = {"embeddings.x",
              trunc_normal<T>({config.coord_bins, h}, std_dev, rng)};
  m.y_emb_ = {"embeddings.y",
              trunc_normal<T>({config.coord_bins, h}, std_dev, rng)};
  m.w_emb_ = {"embeddings.width",
              trunc_normal<T>({config.coord_bins, h}, std_dev, rng)};
  m.h_emb_ = {"embeddings.height",
              trunc_normal<T>({config.coord_bins, h}, std_dev, rng)};
  m.emb_norm_gain_ = {"embeddings.norm.gain", ones<T>({h})};
  m.emb_norm_bias_ = {"embeddings.norm.bias", zeros<T>({h})};

  m.layers_.resize(config.layers);
  for (std::size_t i = 0; i < config.layers; ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    LayerWeights& L = m.layers_[i];
    L.wq = {prefix + "attn.query.weight", trunc_normal<T>({h, h}, std_dev, rng)};
    L.bq = {prefix + "attn.query.bias", zeros<T>({h})};
    L.wk = {prefix + "attn.key.weight", trunc_normal<T>({h, h}, std_dev, rng)};
    L.bk = {prefix + "attn.key.bias", zeros<T>({h})};
    L.wv = {prefix + "attn.value.weight", trunc_normal<T>({h, h}, std_dev, rng)};
    L.bv = {prefix + "attn.value.bias", zeros<T>({h})};
    L.wo = {prefix + "attn.output.weight", trunc_normal<T>({h, h}, std_dev, rng)};
    L.bo = {prefix + "attn.output.bias", zeros<T>({h})};
    L.attn_norm_gain = {prefix + "attn.norm.gain", ones<T>({h})};
    L.attn_norm_bias = {prefix + "attn.norm.bias", zeros<T>({h})};
    L.ff_inner_w = {prefix + "ffn.inner.weight",
                    trunc_normal<T>({h, config.ff_dim}, std_dev, rng)};
    L.ff_inner_b = {prefix + "ffn.inner.bias", zeros<T>({config.ff_dim})};
    L.ff_outer_w = {prefix + "ffn.outer.weight",
                    trunc_normal<T>({config.ff_dim, h}, std_dev, rng)};
    L.ff_outer_b = {prefix + "ffn.outer.bias", zeros<T>({h})};
    L.ff_norm_gain = {prefix + "ffn.norm.gain", ones<T>({h})};
    L.ff_norm_bias = {prefix + "ffn.norm.bias", zeros<T>({h})};
  }

  m.mlm_w_ = {"head.mlm.weight",
              trunc_normal<T>({h, config.vocab_size}, std_dev, rng)};
  m.mlm_b_ = {"head.mlm.bias", zeros<T>({config.vocab_size})};
  return m;
}

template <typename T>
void Model<T>::init_ner_head(std::span<const std::string> labels,
                             RngStream& rng) {
  if (labels.empty()) throw std::runtime_error("empty label set for NER head");
  ner_labels_.assign(labels.begin(), labels.end());
  ner_tags_ = 2 * labels.size() + 1;
  ner_w_ = {"head.ner.weight",
            trunc_normal<T>({config_.hidden, ner_tags_}, config_.init_std, rng)};
  ner_b_ = {"head.ner.bias", zeros<T>({ner_tags_})};
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
  std::vector<Parameter<T>*> out = {
      &tok_emb_, &pos_emb_, &x_emb_, &y_emb_, &w_emb_, &h_emb_,
      &emb_norm_gain_, &emb_norm_bias_};
  for (LayerWeights& L : layers_) {
    for (Parameter<T>* p :
         {&L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo, &L.bo,
          &L.attn_norm_gain, &L.attn_norm_bias, &L.ff_inner_w, &L.ff_inner_b,
          &L.ff_outer_w, &L.ff_outer_b, &L.ff_norm_gain, &L.ff_norm_bias}) {
      out.push_back(p);
    }
  }
  out.push_back(&mlm_w_);
  out.push_back(&mlm_b_);
  if (ner_tags_ > 0) {
    out.push_back(&ner_w_);
    out.push_back(&ner_b_);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Model<T>::parameters() const {
  auto mutable_params = const_cast<Model<T>*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename T>
void Model<T>::zero_grads() {
  for (Parameter<T>* p : parameters()) p->zero_grad();
}

template <typename T>
typename Tape<T>::Id Model<T>::embed(Tape<T>& tape, const EncodedBatch& batch,
                                     const ForwardOptions<T>& opts) {
  const std::size_t n = batch.batch * batch.seq;
  if (n == 0) throw std::runtime_error("empty batch");
  std::vector<int> tok(n), pos(n), x0(n), x1(n), y0(n), y1(n), bw(n), bh(n);
  for (std::size_t i = 0; i < n; ++i) {
    const BBox& b = batch.boxes[i];
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > 1000 || b.y1 > 1000 || b.x0 > b.x1 ||
        b.y0 > b.y1) {
      throw std::runtime_error("box coordinate outside the 0..1000 grid");
    }
    if (batch.positions[i] < 0 ||
        static_cast<std::size_t>(batch.positions[i]) >= config_.max_seq) {
      throw std::runtime_error("sequence position exceeds max_seq");
    }
    tok[i] = batch.token_ids[i];
    pos[i] = batch.positions[i];
    x0[i] = b.x0;
    x1[i] = b.x1;
    y0[i] = b.y0;
    y1[i] = b.y1;
    bw[i] = b.width();
    bh[i] = b.height();
  }

  using Id = typename Tape<T>::Id;
  const Id tok_id = tape.param(tok_emb_);
  const Id pos_id = tape.param(pos_emb_);
  const Id x_id = tape.param(x_emb_);
  const Id y_id = tape.param(y_emb_);
  const Id w_id = tape.param(w_emb_);
  const Id h_id = tape.param(h_emb_);

  Id sum = tape.gather_rows(tok_id, std::move(tok));
  sum = tape.add(sum, tape.gather_rows(pos_id, std::move(pos)));
  sum = tape.add(sum, tape.gather_rows(x_id, std::move(x0)));
  sum = tape.add(sum, tape.gather_rows(x_id, std::move(x1)));
  sum = tape.add(sum, tape.gather_rows(y_id, std::move(y0)));
  sum = tape.add(sum, tape.gather_rows(y_id, std::move(y1)));
  sum = tape.add(sum, tape.gather_rows(w_id, std::move(bw)));
  sum = tape.add(sum, tape.gather_rows(h_id, std::move(bh)));

  Id out = tape.layer_norm(sum, tape.param(emb_norm_gain_),
                           tape.param(emb_norm_bias_),
                           static_cast<T>(config_.layer_norm_eps));
  if (opts.dropout_rng != nullptr && config_.dropout > 0.0) {
    out = tape.dropout(out, static_cast<T>(config_.dropout), *opts.dropout_rng);
  }
  return out;
}

template <typename T>
typename Tape<T>::Id Model<T>::encoder_layer(Tape<T>& tape,
                                             typename Tape<T>::Id h,
                                             typename Tape<T>::Id col_mask,
                                             LayerWeights& L,
                                             const ForwardOptions<T>& opts) {
  using Id = typename Tape<T>::Id;
  const std::size_t head_dim = config_.hidden / config_.heads;
  const T inv_sqrt_d = T{1} / std::sqrt(static_cast<T>(head_dim));
  const bool train = opts.dropout_rng != nullptr && config_.dropout > 0.0;
  const T p = static_cast<T>(config_.dropout);

  const Id q = tape.add_rowvec(tape.matmul(h, tape.param(L.wq)), tape.param(L.bq));
  const Id k = tape.add_rowvec(tape.matmul(h, tape.param(L.wk)), tape.param(L.bk));
  const Id v = tape.add_rowvec(tape.matmul(h, tape.param(L.wv)), tape.param(L.bv));

  std::vector<Id> heads;
  heads.reserve(config_.heads);
  for (std::size_t i = 0; i < config_.heads; ++i) {
    const std::size_t c0 = i * head_dim;
    const std::size_t c1 = c0 + head_dim;
    const Id qh = tape.slice_cols(q, c0, c1);
    const Id kh = tape.slice_cols(k, c0, c1);
    const Id vh = tape.slice_cols(v, c0, c1);
    Id scores = tape.scale(tape.matmul_bt(qh, kh), inv_sqrt_d);
    scores = tape.add_rowvec(scores, col_mask);
    Id probs = tape.softmax_rows(scores);
    if (train) probs = tape.dropout(probs, p, *opts.dropout_rng);
    heads.push_back(tape.matmul(probs, vh));
  }
  Id ctx = tape.concat_cols(heads);
  Id attn = tape.add_rowvec(tape.matmul(ctx, tape.param(L.wo)), tape.param(L.bo));
  if (train) attn = tape.dropout(attn, p, *opts.dropout_rng);
  h = tape.layer_norm(tape.add(h, attn), tape.param(L.attn_norm_gain),
                      tape.param(L.attn_norm_bias),
                      static_cast<T>(config_.layer_norm_eps));

  Id ff = tape.gelu(tape.add_rowvec(tape.matmul(h, tape.param(L.ff_inner_w)),
                                    tape.param(L.ff_inner_b)));
  ff = tape.add_rowvec(tape.matmul(ff, tape.param(L.ff_outer_w)),
                       tape.param(L.ff_outer_b));
  if (train) ff = tape.dropout(ff, p, *opts.dropout_rng);
  return tape.layer_norm(tape.add(h, ff), tape.param(L.ff_norm_gain),
                         tape.param(L.ff_norm_bias),
                         static_cast<T>(config_.layer_norm_eps));
}

template <typename T>
typename Tape<T>::Id Model<T>::forward(Tape<T>& tape, const EncodedBatch& batch,
                                       const ForwardOptions<T>& opts) {
  using Id = typename Tape<T>::Id;
  const std::size_t k_layers = opts.k_layers.value_or(config_.layers);
  if (k_layers < 1 || k_layers > config_.layers) {
    throw std::runtime_error("k_layers out of range");
  }
  const Id emb = embed(tape, batch, opts);

  std::vector<Id> per_example;
  per_example.reserve(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    Id h = tape.slice_rows(emb, b * batch.seq, (b + 1) * batch.seq);
    Tensor<T> mask({batch.seq});
    for (std::size_t s = 0; s < batch.seq; ++s) {
      mask[s] = batch.attn_mask[batch.index(b, s)] != 0
                    ? T{0}
                    : static_cast<T>(kAttnMaskValue);
    }
    const Id col_mask = tape.leaf(std::move(mask));
    for (std::size_t l = 0; l < k_layers; ++l) {
      h = encoder_layer(tape, h, col_mask, layers_[l], opts);
    }
    per_example.push_back(h);
  }
  return tape.concat_rows(per_example);
}

template <typename T>
typename Tape<T>::Id Model<T>::mlm_logits(Tape<T>& tape,
                                          typename Tape<T>::Id hidden) {
  return tape.add_rowvec(tape.matmul(hidden, tape.param(mlm_w_)),
                         tape.param(mlm_b_));
}

template <typename T>
typename Tape<T>::Id Model<T>::ner_logits(Tape<T>& tape,
                                          typename Tape<T>::Id hidden) {
  if (ner_tags_ == 0) throw std::runtime_error("model has no NER head");
  return tape.add_rowvec(tape.matmul(hidden, tape.param(ner_w_)),
                         tape.param(ner_b_));
}

template <typename T>
Tensor<T> Model<T>::encode(const EncodedBatch& batch,
                           std::optional<std::size_t> k_layers) {
  Tape<T> tape(/*recording=*/false);
  ForwardOptions<T> opts;
  opts.k_layers = k_layers;
  return tape.value(forward(tape, batch, opts));
}

template class Model<float>;
template class Model<double>;

}  // namespace layoutlab
