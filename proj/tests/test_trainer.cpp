#include <doctest.h>

#include <cmath>

#include "layoutlab/synthgen.hpp"
#include "layoutlab/trainer.hpp"

using namespace layoutlab;

namespace {

Vocab vocab_for(std::span<const Page> pages) {
  return build_vocab(pages, 4000, 1, true);
}

ModelConfig toy_model(std::size_t vocab, std::size_t layers = 2) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.hidden = 32;
  c.layers = layers;
  c.heads = 2;
  c.ff_dim = 64;
  c.max_seq = 64;
  c.dropout = 0.1;
  return c;
}

}  // namespace

TEST_CASE("lr_schedule endpoints and midpoint") {
  const std::size_t total = 1000;
  const double base = 5e-5;
  const double frac = 0.05;
  const std::size_t w = 50;  // round(0.05 * 1000)
  CHECK(lr_schedule(0, total, frac, base) == 0.0);
  CHECK(lr_schedule(w, total, frac, base) == doctest::Approx(base));
  CHECK(lr_schedule(total, total, frac, base) == doctest::Approx(0.0));
  CHECK(lr_schedule(w + (total - w) / 2, total, frac, base) ==
        doctest::Approx(base / 2));
}

TEST_CASE("lr_schedule is continuous at warmup end and non-negative") {
  const std::size_t total = 777;
  const double base = 3e-4;
  const double frac = 0.1;
  double prev = lr_schedule(0, total, frac, base);
  for (std::size_t step = 1; step <= total; ++step) {
    const double lr = lr_schedule(step, total, frac, base);
    CHECK(lr >= 0.0);
    CHECK(std::abs(lr - prev) < base * 0.05);  // no jumps
    prev = lr;
  }
  CHECK_THROWS(lr_schedule(0, 0, frac, base));
  CHECK_THROWS(lr_schedule(11, 10, frac, base));
}

TEST_CASE("lr_schedule warmup is at least one step") {
  // round(0.05 * 4) = 0, clamped to 1
  CHECK(lr_schedule(0, 4, 0.05, 1.0) == 0.0);
  CHECK(lr_schedule(1, 4, 0.05, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("mask_batch selects round(rate * candidates) with floor of one") {
  const auto pages = make_mlm_toy(3, 2, 10, 1);  // 20 words per page
  const Vocab vocab = vocab_for(pages);
  std::vector<EncodedPage> encoded;
  for (const Page& p : pages) encoded.push_back(encode_page(p, vocab, 64));
  const EncodedBatch batch = EncodedBatch::pad({&encoded[0], 1});

  SUBCASE("20 candidates at 0.15 select exactly 3") {
    RngStream rng = derive_stream(1, "mask", 0);
    const MaskedBatch masked = mask_batch(batch, 0.15, vocab.size(), rng);
    CHECK(masked.selected == 3);
    std::size_t targets = 0;
    for (const int t : masked.targets) {
      if (t >= 0) ++targets;
    }
    CHECK(targets == 3);
  }
  SUBCASE("tiny rate still selects one") {
    RngStream rng = derive_stream(1, "mask", 0);
    const MaskedBatch masked = mask_batch(batch, 0.001, vocab.size(), rng);
    CHECK(masked.selected == 1);
  }
  SUBCASE("same stream gives identical selections") {
    RngStream rng_a = derive_stream(9, "mask", 5);
    RngStream rng_b = derive_stream(9, "mask", 5);
    const MaskedBatch a = mask_batch(batch, 0.3, vocab.size(), rng_a);
    const MaskedBatch b = mask_batch(batch, 0.3, vocab.size(), rng_b);
    CHECK(a.targets == b.targets);
    CHECK(a.batch.token_ids == b.batch.token_ids);
  }
}

TEST_CASE("mask_batch never touches boxes, positions or specials") {
  const auto pages = make_mlm_toy(4, 3, 12, 2);
  const Vocab vocab = vocab_for(pages);
  std::vector<EncodedPage> encoded;
  for (const Page& p : pages) encoded.push_back(encode_page(p, vocab, 64));
  const EncodedBatch batch = EncodedBatch::pad(encoded);
  RngStream rng = derive_stream(2, "mask", 0);
  const MaskedBatch masked = mask_batch(batch, 0.4, vocab.size(), rng);

  CHECK(masked.batch.boxes == batch.boxes);
  CHECK(masked.batch.positions == batch.positions);
  CHECK(masked.batch.attn_mask == batch.attn_mask);
  for (std::size_t i = 0; i < batch.token_ids.size(); ++i) {
    if (batch.word_index[i] < 0) {
      CHECK(masked.batch.token_ids[i] == batch.token_ids[i]);
      CHECK(masked.targets[i] == -1);
    }
    if (masked.batch.token_ids[i] != batch.token_ids[i]) {
      CHECK(masked.targets[i] == batch.token_ids[i]);  // original preserved
    }
  }
}

TEST_CASE("mask_batch skips pages with no candidates") {
  Page empty;
  empty.doc_id = "e";
  empty.width = 10;
  empty.height = 10;
  const Vocab vocab = vocab_for(make_mlm_toy(1, 1, 4, 1));
  const EncodedPage enc = encode_page(empty, vocab, 8);
  const EncodedBatch batch = EncodedBatch::pad({&enc, 1});
  RngStream rng = derive_stream(1, "mask", 0);
  const MaskedBatch masked = mask_batch(batch, 0.15, vocab.size(), rng);
  CHECK(masked.selected == 0);
  for (const int t : masked.targets) CHECK(t == -1);
}

TEST_CASE("adam single hand-computed step") {
  // g = 1, lr = 0.1, t = 1: update = -0.1 * 1 / (1 + 1e-8)
  Parameter<double> p{"p", Tensor<double>({1})};
  p.value[0] = 0.5;
  p.grad[0] = 1.0;
  AdamState<double> adam;
  std::vector<Parameter<double>*> params = {&p};
  adam.step(params, 0.1);
  const double expect = 0.5 - 0.1 * (1.0 / (1.0 + 1e-8));
  CHECK(p.value[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adam with zero gradient leaves the value alone") {
  Parameter<double> p{"p", Tensor<double>({4})};
  for (std::size_t i = 0; i < 4; ++i) p.value[i] = 1.0 + static_cast<double>(i);
  AdamState<double> adam;
  std::vector<Parameter<double>*> params = {&p};
  adam.step(params, 0.1);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(p.value[i] == 1.0 + static_cast<double>(i));
  }
}

TEST_CASE("adam steady state update magnitude approaches lr") {
  Parameter<double> p{"p", Tensor<double>({1})};
  AdamState<double> adam;
  std::vector<Parameter<double>*> params = {&p};
  double prev = 0.0;
  double delta = 0.0;
  for (int t = 0; t < 400; ++t) {
    p.grad[0] = 2.5;  // constant gradient
    prev = p.value[0];
    adam.step(params, 0.01);
    delta = prev - p.value[0];
  }
  CHECK(delta == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("adam aborts on non-finite gradients") {
  Parameter<double> p{"p", Tensor<double>({1})};
  p.grad[0] = std::numeric_limits<double>::quiet_NaN();
  AdamState<double> adam;
  std::vector<Parameter<double>*> params = {&p};
  CHECK_THROWS_WITH_AS(adam.step(params, 0.1), doctest::Contains("non-finite"),
                       std::runtime_error);
}

TEST_CASE("pretrain validates inputs") {
  const auto pages = make_mlm_toy(5, 4, 8, 2);
  const Vocab vocab = vocab_for(pages);
  PretrainConfig config;
  config.batch_size = 2;
  config.epochs = 1;
  CHECK_THROWS_WITH_AS(
      pretrain(std::vector<Page>{}, vocab, toy_model(vocab.size()), config),
      doctest::Contains("empty"), std::runtime_error);
  ModelConfig wrong = toy_model(vocab.size() + 5);
  CHECK_THROWS_WITH_AS(pretrain(pages, vocab, wrong, config),
                       doctest::Contains("vocab"), std::runtime_error);
}

TEST_CASE("pretrain loss trends down and the loss log lines up") {
  const auto pages = make_mlm_toy(6, 12, 10, 3);
  const Vocab vocab = vocab_for(pages);
  PretrainConfig config;
  config.batch_size = 4;
  config.epochs = 4;
  config.base_lr = 3e-4;
  config.seed = 11;
  const PretrainResult result =
      pretrain(pages, vocab, toy_model(vocab.size()), config);

  const std::size_t steps_per_epoch = 3;
  REQUIRE(result.loss_curve.size() == config.epochs * steps_per_epoch);
  double first_epoch = 0.0;
  double last_epoch = 0.0;
  for (std::size_t i = 0; i < steps_per_epoch; ++i) {
    first_epoch += result.loss_curve[i].loss;
    last_epoch += result.loss_curve[result.loss_curve.size() - 1 - i].loss;
  }
  CHECK(last_epoch < first_epoch);
  CHECK(result.checkpoint.config.vocab_size == vocab.size());
  CHECK(result.checkpoint.vocab_hash == vocab.fingerprint());
}

TEST_CASE("pretrain twice with one seed is bit-identical") {
  const auto pages = make_mlm_toy(7, 6, 8, 2);
  const Vocab vocab = vocab_for(pages);
  PretrainConfig config;
  config.batch_size = 3;
  config.epochs = 2;
  config.seed = 21;
  const PretrainResult a = pretrain(pages, vocab, toy_model(vocab.size()), config);
  const PretrainResult b = pretrain(pages, vocab, toy_model(vocab.size()), config);
  REQUIRE(a.checkpoint.tensors.size() == b.checkpoint.tensors.size());
  for (std::size_t i = 0; i < a.checkpoint.tensors.size(); ++i) {
    const auto& ta = a.checkpoint.tensors[i].second;
    const auto& tb = b.checkpoint.tensors[i].second;
    REQUIRE(ta.size() == tb.size());
    for (std::size_t j = 0; j < ta.size(); ++j) CHECK(ta[j] == tb[j]);
  }
}

TEST_CASE("finetune rejects unlabeled corpora and foreign tagsets") {
  const auto labeled = make_ner_toy(8, 4, 3);
  const Vocab vocab = vocab_for(labeled);
  RngStream rng(1);
  Model<float> model = Model<float>::random_init(toy_model(vocab.size(), 1), rng);
  const Checkpoint start = to_checkpoint(model, vocab);
  FinetuneConfig config;
  config.batch_size = 2;
  config.epochs = 1;

  std::vector<Page> unlabeled = labeled;
  for (Page& p : unlabeled) p.tags.reset();
  CHECK_THROWS_WITH_AS(
      finetune(start, unlabeled, payslip_labels(), config, vocab),
      doctest::Contains("unlabeled"), std::runtime_error);

  const LabelSet other({"SOMETHING_ELSE"});
  CHECK_THROWS_WITH_AS(finetune(start, labeled, other, config, vocab),
                       doctest::Contains("tagset"), std::runtime_error);
}

TEST_CASE("finetune is deterministic and multirun reports zero std for equal seeds") {
  const auto pages = make_ner_toy(9, 6, 3);
  const Vocab vocab = vocab_for(pages);
  RngStream rng(2);
  Model<float> model = Model<float>::random_init(toy_model(vocab.size(), 1), rng);
  const Checkpoint start = to_checkpoint(model, vocab);
  FinetuneConfig config;
  config.batch_size = 3;
  config.epochs = 2;
  config.lr = 3e-4;
  config.seed = 7;

  const FinetuneResult a = finetune(start, pages, payslip_labels(), config, vocab);
  const FinetuneResult b = finetune(start, pages, payslip_labels(), config, vocab);
  REQUIRE(a.checkpoint.tensors.size() == b.checkpoint.tensors.size());
  for (std::size_t i = 0; i < a.checkpoint.tensors.size(); ++i) {
    const auto& ta = a.checkpoint.tensors[i].second;
    const auto& tb = b.checkpoint.tensors[i].second;
    for (std::size_t j = 0; j < ta.size(); ++j) REQUIRE(ta[j] == tb[j]);
  }
  CHECK(a.summary.micro_f1() == b.summary.micro_f1());

  const std::vector<std::uint64_t> seeds = {7, 7};
  const MultiRunSummary mr =
      multi_run(start, pages, payslip_labels(), config, seeds, vocab);
  REQUIRE(mr.runs.size() == 2);
  CHECK(mr.std_f1 == 0.0);
  CHECK(mr.runs[0].micro_f1() == mr.runs[1].micro_f1());
  CHECK(mr.failures.empty());

  CHECK_THROWS(multi_run(start, pages, payslip_labels(), config,
                         std::vector<std::uint64_t>{1}, vocab));
}

TEST_CASE("finetune summary carries per-document scores for significance") {
  const auto pages = make_ner_toy(10, 5, 2);
  const Vocab vocab = vocab_for(pages);
  RngStream rng(3);
  Model<float> model = Model<float>::random_init(toy_model(vocab.size(), 1), rng);
  const Checkpoint start = to_checkpoint(model, vocab);
  FinetuneConfig config;
  config.batch_size = 5;
  config.epochs = 1;
  const FinetuneResult result =
      finetune(start, pages, payslip_labels(), config, vocab);
  CHECK(result.summary.per_document_f1.size() == pages.size());
  REQUIRE(result.summary.eval.has_value());
  CHECK(result.checkpoint.ner_labels == payslip_labels().labels());
}
