#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "layoutlab/checkpoint.hpp"
#include "layoutlab/model.hpp"
#include "layoutlab/synthgen.hpp"
#include "layoutlab/trainer.hpp"

using namespace layoutlab;

namespace {

ModelConfig small_config(std::size_t vocab, std::size_t layers = 2) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.hidden = 16;
  c.layers = layers;
  c.heads = 2;
  c.ff_dim = 32;
  c.max_seq = 16;
  c.dropout = 0.0;
  return c;
}

Vocab tiny_vocab() {
  std::vector<std::string> tokens(Vocab::reserved_tokens().begin(),
                                  Vocab::reserved_tokens().end());
  for (int i = 0; i < 15; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocab(std::move(tokens), true);
}

Page tiny_page(std::initializer_list<const char*> words) {
  Page p;
  p.doc_id = "p";
  p.width = 1000;
  p.height = 1000;
  std::int64_t x = 0;
  for (const char* w : words) {
    p.words.push_back({w, {x, 5, x + 40, 25}});
    x += 50;
  }
  return p;
}

EncodedBatch batch_of(std::initializer_list<Page> pages, const Vocab& vocab,
                      std::size_t max_seq = 16) {
  std::vector<EncodedPage> encoded;
  for (const Page& p : pages) encoded.push_back(encode_page(p, vocab, max_seq));
  return EncodedBatch::pad(encoded);
}

std::string temp_file(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("embed matches the table-sum-then-norm definition") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(1);
  Model<double> model = Model<double>::random_init(small_config(vocab.size()), rng);
  const EncodedBatch batch = batch_of({tiny_page({"w0", "w3"})}, vocab);

  Tape<double> tape;
  const auto out_id = model.embed(tape, batch);
  const Tensor<double>& out = tape.value(out_id);
  REQUIRE(out.shape() == std::vector<std::size_t>{4, 16});

  // recompute row 1 (token w0) by hand
  const std::size_t h = 16;
  const int tok = batch.token_ids[1];
  const BBox& box = batch.boxes[1];
  std::vector<double> sum(h);
  for (std::size_t c = 0; c < h; ++c) {
    sum[c] = model.tok_emb_.value.at(static_cast<std::size_t>(tok), c) +
             model.pos_emb_.value.at(1, c) +
             model.x_emb_.value.at(static_cast<std::size_t>(box.x0), c) +
             model.x_emb_.value.at(static_cast<std::size_t>(box.x1), c) +
             model.y_emb_.value.at(static_cast<std::size_t>(box.y0), c) +
             model.y_emb_.value.at(static_cast<std::size_t>(box.y1), c) +
             model.w_emb_.value.at(static_cast<std::size_t>(box.width()), c) +
             model.h_emb_.value.at(static_cast<std::size_t>(box.height()), c);
  }
  double mean = 0.0;
  for (const double v : sum) mean += v;
  mean /= static_cast<double>(h);
  double var = 0.0;
  for (const double v : sum) var += (v - mean) * (v - mean);
  var /= static_cast<double>(h);
  for (std::size_t c = 0; c < h; ++c) {
    const double expect =
        model.emb_norm_gain_.value[c] * (sum[c] - mean) /
            std::sqrt(var + model.config().layer_norm_eps) +
        model.emb_norm_bias_.value[c];
    CHECK(out.at(1, c) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("identical tokens with identical boxes embed identically") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(2);
  Model<float> model = Model<float>::random_init(small_config(vocab.size()), rng);
  Page p = tiny_page({"w1", "w1"});
  p.words[1].box = p.words[0].box;
  const EncodedBatch batch = batch_of({p}, vocab);
  Tape<float> tape;
  const Tensor<float>& out = tape.value(model.embed(tape, batch));
  for (std::size_t c = 0; c < 16; ++c) {
    CHECK(out.at(1, c) == out.at(2, c));
  }
}

TEST_CASE("forward output shape is [B*S, hidden]") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(3);
  Model<float> model = Model<float>::random_init(small_config(vocab.size()), rng);
  const EncodedBatch batch =
      batch_of({tiny_page({"w0", "w1", "w2"}), tiny_page({"w5"})}, vocab);
  const Tensor<float> out = model.encode(batch);
  CHECK(out.shape() == std::vector<std::size_t>{2 * batch.seq, 16});
}

TEST_CASE("pad positions cannot influence non-pad outputs") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(4);
  Model<float> model = Model<float>::random_init(small_config(vocab.size()), rng);
  EncodedBatch batch =
      batch_of({tiny_page({"w0", "w1"}), tiny_page({"w2", "w3", "w4", "w5"})},
               vocab);
  const Tensor<float> base = model.encode(batch);

  // scribble over every masked position of example 0
  for (std::size_t s = 0; s < batch.seq; ++s) {
    const std::size_t i = batch.index(0, s);
    if (batch.attn_mask[i] == 0) {
      batch.token_ids[i] = 7;
      batch.boxes[i] = BBox{3, 3, 900, 900};
    }
  }
  const Tensor<float> poked = model.encode(batch);
  for (std::size_t s = 0; s < batch.seq; ++s) {
    const std::size_t i = batch.index(0, s);
    if (batch.attn_mask[i] == 0) continue;
    for (std::size_t c = 0; c < 16; ++c) {
      CHECK(poked.at(i, c) == base.at(i, c));  // bit-identical
    }
  }
  // the other example is untouched entirely
  for (std::size_t s = 0; s < batch.seq; ++s) {
    const std::size_t i = batch.index(1, s);
    for (std::size_t c = 0; c < 16; ++c) {
      CHECK(poked.at(i, c) == base.at(i, c));
    }
  }
}

TEST_CASE("batch order permutes outputs without cross-example leakage") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(5);
  Model<float> model = Model<float>::random_init(small_config(vocab.size()), rng);
  const Page a = tiny_page({"w0", "w1", "w2"});
  const Page b = tiny_page({"w3", "w4", "w5"});
  const EncodedBatch ab = batch_of({a, b}, vocab);
  const EncodedBatch ba = batch_of({b, a}, vocab);
  const Tensor<float> out_ab = model.encode(ab);
  const Tensor<float> out_ba = model.encode(ba);
  const std::size_t rows = ab.seq;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < 16; ++c) {
      CHECK(out_ab.at(r, c) == out_ba.at(rows + r, c));
      CHECK(out_ab.at(rows + r, c) == out_ba.at(r, c));
    }
  }
}

TEST_CASE("k_layers runs a prefix of the stack") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(6);
  Model<float> model =
      Model<float>::random_init(small_config(vocab.size(), 3), rng);
  const EncodedBatch batch = batch_of({tiny_page({"w0", "w9", "w4"})}, vocab);

  const Tensor<float> full = model.encode(batch);
  const Tensor<float> def = model.encode(batch, 3);
  for (std::size_t i = 0; i < full.size(); ++i) CHECK(full[i] == def[i]);

  CHECK_THROWS(model.encode(batch, 0));
  CHECK_THROWS(model.encode(batch, 4));
}

TEST_CASE("mlm and ner heads are affine maps of the right shape") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(7);
  Model<float> model = Model<float>::random_init(small_config(vocab.size()), rng);
  const EncodedBatch batch = batch_of({tiny_page({"w0", "w1"})}, vocab);
  Tape<float> tape(false);
  const auto hidden = model.forward(tape, batch);
  const auto mlm = model.mlm_logits(tape, hidden);
  CHECK(tape.value(mlm).shape() ==
        std::vector<std::size_t>{batch.seq, vocab.size()});
  CHECK(tape.value(mlm).all_finite());

  CHECK_THROWS(model.ner_logits(tape, hidden));  // head not initialized yet
  const LabelSet labels = payslip_labels();
  RngStream head_rng(8);
  model.init_ner_head(labels.labels(), head_rng);
  CHECK(model.ner_tags() == 19);  // nine labels
  const auto ner = model.ner_logits(tape, hidden);
  CHECK(tape.value(ner).shape() == std::vector<std::size_t>{batch.seq, 19});
}

TEST_CASE("gradient reaches all six spatial embedding tables") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(9);
  Model<float> model = Model<float>::random_init(small_config(vocab.size()), rng);
  // non-degenerate boxes so width/height lookups vary
  Page p = tiny_page({"w0", "w1", "w2", "w3"});
  const EncodedBatch batch = batch_of({p}, vocab);
  MaskedBatch masked;
  masked.batch = batch;
  masked.targets.assign(batch.token_ids.size(), -1);
  masked.targets[1] = batch.token_ids[1];
  masked.targets[3] = batch.token_ids[3];

  model.zero_grads();
  Tape<float> tape;
  const auto hidden = model.forward(tape, masked.batch);
  const auto logits = model.mlm_logits(tape, hidden);
  const auto loss = tape.cross_entropy(logits, masked.targets);
  tape.backward(loss);

  const auto norm = [](const Parameter<float>& p) {
    double n = 0.0;
    for (const float g : p.grad.values()) n += static_cast<double>(g) * g;
    return n;
  };
  CHECK(norm(model.x_emb_) > 0.0);
  CHECK(norm(model.y_emb_) > 0.0);
  CHECK(norm(model.w_emb_) > 0.0);
  CHECK(norm(model.h_emb_) > 0.0);
  CHECK(norm(model.tok_emb_) > 0.0);
  CHECK(norm(model.pos_emb_) > 0.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(10);
  Model<float> model = Model<float>::random_init(small_config(vocab.size()), rng);
  const Checkpoint ckpt = to_checkpoint(model, vocab);
  const std::string path = temp_file("layoutlab_ckpt_test.bin");
  ckpt.save(path);
  const Checkpoint loaded = Checkpoint::load(path);

  CHECK(loaded.config == ckpt.config);
  CHECK(loaded.vocab_hash == ckpt.vocab_hash);
  CHECK(loaded.vocab_size == ckpt.vocab_size);
  REQUIRE(loaded.tensors.size() == ckpt.tensors.size());
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    CHECK(loaded.tensors[i].first == ckpt.tensors[i].first);
    REQUIRE(loaded.tensors[i].second.size() == ckpt.tensors[i].second.size());
    CHECK(std::memcmp(loaded.tensors[i].second.data(),
                      ckpt.tensors[i].second.data(),
                      ckpt.tensors[i].second.size() * sizeof(float)) == 0);
  }

  // and the same bytes again after a second save
  const std::string path2 = temp_file("layoutlab_ckpt_test2.bin");
  loaded.save(path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {});
  const std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("checkpoint refuses a mismatched vocabulary") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(11);
  Model<float> model = Model<float>::random_init(small_config(vocab.size()), rng);
  const Checkpoint ckpt = to_checkpoint(model, vocab);
  std::vector<std::string> other_tokens(Vocab::reserved_tokens().begin(),
                                        Vocab::reserved_tokens().end());
  for (int i = 0; i < 15; ++i) other_tokens.push_back("q" + std::to_string(i));
  const Vocab other(std::move(other_tokens), true);
  CHECK_THROWS_WITH_AS(ckpt.require_vocab(other),
                       doctest::Contains("fingerprint"), std::runtime_error);
  CHECK_NOTHROW(ckpt.require_vocab(vocab));
}

TEST_CASE("checkpoint load detects missing and extra tensors") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(12);
  Model<float> model = Model<float>::random_init(small_config(vocab.size()), rng);
  Checkpoint ckpt = to_checkpoint(model, vocab);

  Checkpoint missing = ckpt;
  missing.tensors.erase(missing.tensors.begin() + 3);
  CHECK_THROWS_WITH_AS(model_from_checkpoint<float>(missing),
                       doctest::Contains("missing"), std::runtime_error);

  Checkpoint extra = ckpt;
  extra.tensors.emplace_back("layer9.unknown", Tensor<float>({2, 2}));
  CHECK_THROWS_WITH_AS(model_from_checkpoint<float>(extra),
                       doctest::Contains("extra"), std::runtime_error);

  Checkpoint bad_dims = ckpt;
  bad_dims.tensors[0].second = Tensor<float>({1, 1});
  CHECK_THROWS_WITH_AS(model_from_checkpoint<float>(bad_dims),
                       doctest::Contains("dimensions"), std::runtime_error);
}

TEST_CASE("truncate_layers drops exactly the top layers") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(13);
  Model<float> model =
      Model<float>::random_init(small_config(vocab.size(), 2), rng);
  const Checkpoint full = to_checkpoint(model, vocab);

  const Checkpoint same = truncate_layers(full, 2);
  CHECK(same.tensors.size() == full.tensors.size());
  CHECK(same.config.layers == 2);

  const Checkpoint one = truncate_layers(full, 1);
  CHECK(one.config.layers == 1);
  CHECK(full.tensors.size() - one.tensors.size() == 16);  // one layer's tensors
  for (const auto& [name, tensor] : one.tensors) {
    CHECK(name.rfind("layer1.", 0) == std::string::npos);
  }
  CHECK_THROWS(truncate_layers(full, 0));
  CHECK_THROWS(truncate_layers(full, 3));
}

TEST_CASE("forward of a truncated checkpoint equals k_layers forward") {
  const Vocab vocab = tiny_vocab();
  RngStream rng(14);
  Model<float> model =
      Model<float>::random_init(small_config(vocab.size(), 3), rng);
  const Checkpoint full = to_checkpoint(model, vocab);
  const EncodedBatch batch =
      batch_of({tiny_page({"w0", "w8", "w2", "w7"})}, vocab);
  for (std::size_t k = 1; k <= 3; ++k) {
    Model<float> truncated = model_from_checkpoint<float>(truncate_layers(full, k));
    const Tensor<float> a = truncated.encode(batch);
    Model<float> original = model_from_checkpoint<float>(full);
    const Tensor<float> b = original.encode(batch, k);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("model config file parsing") {
  const ModelConfig c = parse_model_config_text(
      "# comment\nvocab_size = 100\nhidden = 32\nlayers = 2\nheads = 4\n"
      "ff_dim = 64\nmax_seq = 10\ndropout = 0.2\n",
      "inline");
  CHECK(c.vocab_size == 100);
  CHECK(c.hidden == 32);
  CHECK(c.heads == 4);
  CHECK(c.dropout == 0.2);
  CHECK_THROWS_WITH_AS(parse_model_config_text("nope = 3\n", "inline"),
                       doctest::Contains("unknown key"), std::runtime_error);
  CHECK_THROWS(parse_model_config_text("hidden\n", "inline"));

  ModelConfig bad;
  bad.vocab_size = 100;
  bad.hidden = 30;
  bad.heads = 4;
  CHECK_THROWS(bad.validate());
}
