// Command-line surface tying the corpus, training, evaluation, significance
// and benchmarking pieces together. Every command exits nonzero with a
// one-line diagnostic on stderr when something is wrong.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "layoutlab/bench.hpp"
#include "layoutlab/checkpoint.hpp"
#include "layoutlab/corpus.hpp"
#include "layoutlab/metrics.hpp"
#include "layoutlab/model.hpp"
#include "layoutlab/trainer.hpp"
#include "layoutlab/vocab.hpp"

namespace {

using namespace layoutlab;

std::string vocab_sidecar(const std::string& ckpt_path) {
  return ckpt_path + ".vocab";
}

Vocab load_sidecar_vocab(const std::string& ckpt_path) {
  return Vocab::load(vocab_sidecar(ckpt_path));
}

// "7", "1,2,3" or "0..99" (inclusive).
std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  const auto dots = spec.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t lo = std::stoull(spec.substr(0, dots));
    const std::uint64_t hi = std::stoull(spec.substr(dots + 2));
    if (hi < lo) throw std::runtime_error("bad seed range " + spec);
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const std::string item =
        spec.substr(start, comma == std::string::npos ? comma : comma - start);
    if (!item.empty()) seeds.push_back(std::stoull(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (seeds.empty()) throw std::runtime_error("no seeds in \"" + spec + "\"");
  return seeds;
}

std::vector<std::size_t> parse_depths(const std::string& spec) {
  std::vector<std::size_t> depths;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const std::string item =
        spec.substr(start, comma == std::string::npos ? comma : comma - start);
    if (!item.empty()) depths.push_back(std::stoull(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (depths.empty()) throw std::runtime_error("no depths in \"" + spec + "\"");
  return depths;
}

int run_ingest(const std::string& input, const std::string& format,
               const std::string& labels_path, const std::string& out) {
  if (format != "jsonl") {
    throw std::runtime_error("unsupported corpus format \"" + format + "\"");
  }
  const LabelSet labels = LabelSet::load(labels_path);
  const std::vector<Page> pages = parse_corpus(input, labels);
  write_corpus(pages, out);
  std::cout << "ingested " << pages.size() << " pages -> " << out << "\n";
  return 0;
}

int run_stats(const std::string& data, const std::string& labels_path) {
  const LabelSet labels = LabelSet::load(labels_path);
  const std::vector<Page> pages = parse_corpus(data, labels);
  const LabelStats stats = label_stats(pages, labels);
  std::cout << std::left << std::setw(30) << "Label" << std::right
            << std::setw(10) << "Words" << "\n";
  for (const auto& [label, count] : stats.per_label) {
    std::cout << std::left << std::setw(30) << label << std::right
              << std::setw(10) << count << "\n";
  }
  std::cout << std::left << std::setw(30) << "O" << std::right << std::setw(10)
            << stats.outside << "\n";
  std::cout << std::left << std::setw(30) << "Total" << std::right
            << std::setw(10) << stats.total << "\n";
  std::cout << std::left << std::setw(30) << "Pages" << std::right
            << std::setw(10) << pages.size() << "\n";
  return 0;
}

int run_build_vocab(const std::string& data, std::size_t max_size,
                    std::size_t min_freq, bool lowercase,
                    const std::string& out) {
  const std::vector<Page> pages = parse_corpus(data);
  const Vocab vocab = build_vocab(pages, max_size, min_freq, lowercase);
  vocab.save(out);
  std::cout << "vocabulary of " << vocab.size() << " tokens -> " << out << "\n";
  return 0;
}

int run_pretrain(const std::string& data, const std::string& vocab_path,
                 const std::string& config_path, const PretrainConfig& config,
                 const std::string& out) {
  const std::vector<Page> pages = parse_corpus(data);
  const Vocab vocab = Vocab::load(vocab_path);
  ModelConfig model_config =
      config_path.empty() ? ModelConfig{} : parse_model_config(config_path);
  if (model_config.vocab_size == 0) model_config.vocab_size = vocab.size();

  PretrainResult result = pretrain(pages, vocab, model_config, config);
  result.checkpoint.save(out);
  vocab.save(vocab_sidecar(out));
  write_loss_log(result.loss_curve, out + ".loss.tsv");
  const double final_loss =
      result.loss_curve.empty() ? 0.0 : result.loss_curve.back().loss;
  std::cout << "pretrained " << result.checkpoint.config.layers
            << "-layer model on " << pages.size() << " pages, final loss "
            << final_loss << " -> " << out << "\n";
  return 0;
}

int run_finetune(const std::string& ckpt_path, const std::string& data,
                 const std::string& labels_path, const FinetuneConfig& config,
                 const std::string& out) {
  const Checkpoint start = Checkpoint::load(ckpt_path);
  const Vocab vocab = load_sidecar_vocab(ckpt_path);
  const LabelSet labels = LabelSet::load(labels_path);
  const std::vector<Page> pages = parse_corpus(data, labels);

  FinetuneResult result = finetune(start, pages, labels, config, vocab);
  result.checkpoint.save(out);
  vocab.save(vocab_sidecar(out));
  std::cout << run_summary_json(result.summary) << "\n";
  return 0;
}

int run_multirun(const std::string& ckpt_path, const std::string& data,
                 const std::string& labels_path, const std::string& seeds_spec,
                 const std::string& out_dir, const std::string& eval_data) {
  const Checkpoint start = Checkpoint::load(ckpt_path);
  const Vocab vocab = load_sidecar_vocab(ckpt_path);
  const LabelSet labels = LabelSet::load(labels_path);
  const std::vector<Page> pages = parse_corpus(data, labels);
  std::optional<std::vector<Page>> eval_pages;
  if (!eval_data.empty()) eval_pages = parse_corpus(eval_data, labels);
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_spec);

  std::filesystem::create_directories(out_dir);
  FinetuneConfig base;
  const MultiRunSummary summary =
      multi_run(start, pages, labels, base, seeds, vocab,
                eval_pages ? &*eval_pages : nullptr);

  for (const RunSummary& run : summary.runs) {
    const std::string stem = out_dir + "/run_" + std::to_string(run.seed);
    std::ofstream json_out(stem + ".json");
    json_out << run_summary_json(run) << "\n";
    save_scores(run.per_document_f1, out_dir + "/scores_" +
                                         std::to_string(run.seed) + ".txt");
  }
  std::ostringstream os;
  os << "{\"runs\":" << summary.runs.size() << ",\"mean_f1\":" << summary.mean_f1
     << ",\"std_f1\":" << summary.std_f1 << ",\"min_f1\":" << summary.min_f1
     << ",\"max_f1\":" << summary.max_f1 << ",\"failures\":"
     << summary.failures.size() << "}";
  std::ofstream summary_out(out_dir + "/summary.json");
  summary_out << os.str() << "\n";
  std::cout << os.str() << "\n";
  for (const std::string& failure : summary.failures) {
    std::cerr << "run failed: " << failure << "\n";
  }
  return summary.failures.empty() ? 0 : 1;
}

int run_eval(const std::string& ckpt_path, const std::string& data,
             const std::string& labels_path,
             std::optional<std::size_t> k_layers) {
  const Checkpoint ckpt = Checkpoint::load(ckpt_path);
  const Vocab vocab = load_sidecar_vocab(ckpt_path);
  ckpt.require_vocab(vocab);
  const LabelSet labels = LabelSet::load(labels_path);
  const std::vector<Page> pages = parse_corpus(data, labels);

  Model<float> model = model_from_checkpoint<float>(ckpt);
  std::vector<std::vector<std::string>> gold;
  gold.reserve(pages.size());
  for (const Page& page : pages) {
    if (!page.tags) {
      throw std::runtime_error("page \"" + page.doc_id + "\" has no tags");
    }
    gold.push_back(*page.tags);
  }
  const auto pred = predict_tags(model, pages, vocab, labels, k_layers);
  const EvalReport report = evaluate(pred, gold, labels);
  std::cout << format_report(report);
  std::cout << report_json(report) << "\n";
  return 0;
}

int run_significance(const std::string& scores_a_path,
                     const std::string& scores_b_path, std::size_t iterations,
                     std::uint64_t seed, bool exact) {
  const std::vector<double> a = load_scores(scores_a_path);
  const std::vector<double> b = load_scores(scores_b_path);
  const SignificanceResult result =
      exact ? exact_rand_test(a, b) : approx_rand_test(a, b, iterations, seed);
  std::cout << "observed |mean F1 diff| = " << result.observed_diff << "\n"
            << "iterations             = " << result.iterations << "\n"
            << "exceed count           = " << result.exceed_count << "\n"
            << "significance level     = " << result.significance_level << "\n";
  if (result.highly_significant()) {
    std::cout << "verdict: highly significant (level < 0.01)\n";
  } else {
    std::cout << "verdict: not highly significant (level >= 0.01)\n";
  }
  std::cout << significance_json(result) << "\n";
  return 0;
}

int run_bench(const std::string& ckpt_path, const std::string& data,
              const std::string& layers_spec, std::size_t warmup,
              std::size_t reps, const std::string& labels_path) {
  const Checkpoint ckpt = Checkpoint::load(ckpt_path);
  const Vocab vocab = load_sidecar_vocab(ckpt_path);
  ckpt.require_vocab(vocab);
  const std::vector<std::size_t> depths = parse_depths(layers_spec);

  std::optional<LabelSet> labels;
  std::vector<Page> pages;
  if (!labels_path.empty()) {
    labels = LabelSet::load(labels_path);
    pages = parse_corpus(data, *labels);
  } else {
    pages = parse_corpus(data);
  }
  const std::vector<DepthRow> rows =
      depth_sweep(ckpt, pages, vocab, labels ? &*labels : nullptr, depths,
                  warmup, reps);
  std::cout << format_timing_table(rows);
  std::cout << timing_json(rows) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale layout-aware document NER laboratory"};
  app.require_subcommand(1);

  // ingest
  std::string in_input, in_format = "jsonl", in_labels, in_out;
  auto* ingest = app.add_subcommand("ingest", "validate and rewrite a corpus");
  ingest->add_option("--input", in_input)->required();
  ingest->add_option("--format", in_format)->check(CLI::IsMember({"jsonl"}));
  ingest->add_option("--labels", in_labels)->required();
  ingest->add_option("--out", in_out)->required();

  // stats
  std::string st_data, st_labels;
  auto* stats = app.add_subcommand("stats", "word-level label distribution");
  stats->add_option("--data", st_data)->required();
  stats->add_option("--labels", st_labels)->required();

  // build-vocab
  std::string bv_data, bv_out;
  std::size_t bv_max_size = 30000, bv_min_freq = 1;
  bool bv_lowercase = true;
  auto* build_vocab_cmd =
      app.add_subcommand("build-vocab", "frequency-ranked vocabulary");
  build_vocab_cmd->add_option("--data", bv_data)->required();
  build_vocab_cmd->add_option("--max-size", bv_max_size);
  build_vocab_cmd->add_option("--min-freq", bv_min_freq);
  build_vocab_cmd->add_flag("--lowercase,!--no-lowercase", bv_lowercase);
  build_vocab_cmd->add_option("--out", bv_out)->required();

  // pretrain
  std::string pt_data, pt_vocab, pt_config, pt_out;
  PretrainConfig pt;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "masked-LM pre-training");
  pretrain_cmd->add_option("--data", pt_data)->required();
  pretrain_cmd->add_option("--vocab", pt_vocab)->required();
  pretrain_cmd->add_option("--model-config", pt_config);
  pretrain_cmd->add_option("--batch", pt.batch_size);
  pretrain_cmd->add_option("--epochs", pt.epochs);
  pretrain_cmd->add_option("--lr", pt.base_lr);
  pretrain_cmd->add_option("--warmup-frac", pt.warmup_fraction);
  pretrain_cmd->add_option("--mask-rate", pt.mask_rate);
  pretrain_cmd->add_option("--seed", pt.seed);
  pretrain_cmd->add_option("--out", pt_out)->required();

  // finetune
  std::string ft_ckpt, ft_data, ft_labels, ft_out;
  FinetuneConfig ft;
  auto* finetune_cmd = app.add_subcommand("finetune", "BIO tagging fine-tune");
  finetune_cmd->add_option("--ckpt", ft_ckpt)->required();
  finetune_cmd->add_option("--data", ft_data)->required();
  finetune_cmd->add_option("--labels", ft_labels)->required();
  finetune_cmd->add_option("--batch", ft.batch_size);
  finetune_cmd->add_option("--epochs", ft.epochs);
  finetune_cmd->add_option("--lr", ft.lr);
  finetune_cmd->add_option("--seed", ft.seed);
  finetune_cmd->add_option("--out", ft_out)->required();

  // multirun
  std::string mr_ckpt, mr_data, mr_labels, mr_seeds, mr_out, mr_eval;
  auto* multirun_cmd =
      app.add_subcommand("multirun", "repeated fine-tuning across seeds");
  multirun_cmd->add_option("--ckpt", mr_ckpt)->required();
  multirun_cmd->add_option("--data", mr_data)->required();
  multirun_cmd->add_option("--labels", mr_labels)->required();
  multirun_cmd->add_option("--seeds", mr_seeds)->required();
  multirun_cmd->add_option("--out", mr_out)->required();
  multirun_cmd->add_option("--eval-data", mr_eval,
                           "score on this corpus instead of --data");

  // eval
  std::string ev_ckpt, ev_data, ev_labels;
  std::size_t ev_layers = 0;
  auto* eval_cmd = app.add_subcommand("eval", "mention-level P/R/F1");
  eval_cmd->add_option("--ckpt", ev_ckpt)->required();
  eval_cmd->add_option("--data", ev_data)->required();
  eval_cmd->add_option("--labels", ev_labels)->required();
  eval_cmd->add_option("--layers", ev_layers, "run only the bottom K layers");

  // significance
  std::string sg_a, sg_b;
  std::size_t sg_iterations = kDefaultSignificanceIterations;
  std::uint64_t sg_seed = 0;
  bool sg_exact = false;
  auto* signif_cmd =
      app.add_subcommand("significance", "approximate randomization test");
  signif_cmd->add_option("--scores-a", sg_a)->required();
  signif_cmd->add_option("--scores-b", sg_b)->required();
  signif_cmd->add_option("--iterations", sg_iterations);
  signif_cmd->add_option("--seed", sg_seed);
  signif_cmd->add_flag("--exact", sg_exact, "enumerate all 2^n assignments");

  // bench
  std::string bn_ckpt, bn_data, bn_layers, bn_labels;
  std::size_t bn_warmup = 3, bn_reps = 20;
  auto* bench_cmd =
      app.add_subcommand("bench", "per-page inference latency by depth");
  bench_cmd->add_option("--ckpt", bn_ckpt)->required();
  bench_cmd->add_option("--data", bn_data)->required();
  bench_cmd->add_option("--layers", bn_layers)->required();
  bench_cmd->add_option("--warmup", bn_warmup);
  bench_cmd->add_option("--reps", bn_reps);
  bench_cmd->add_option("--labels", bn_labels,
                        "labeled corpus adds an F1 column");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return run_ingest(in_input, in_format, in_labels, in_out);
    if (*stats) return run_stats(st_data, st_labels);
    if (*build_vocab_cmd) {
      return run_build_vocab(bv_data, bv_max_size, bv_min_freq, bv_lowercase,
                             bv_out);
    }
    if (*pretrain_cmd) return run_pretrain(pt_data, pt_vocab, pt_config, pt, pt_out);
    if (*finetune_cmd) return run_finetune(ft_ckpt, ft_data, ft_labels, ft, ft_out);
    if (*multirun_cmd) {
      return run_multirun(mr_ckpt, mr_data, mr_labels, mr_seeds, mr_out, mr_eval);
    }
    if (*eval_cmd) {
      return run_eval(ev_ckpt, ev_data, ev_labels,
                      ev_layers == 0 ? std::nullopt
                                     : std::optional<std::size_t>(ev_layers));
    }
    if (*signif_cmd) {
      return run_significance(sg_a, sg_b, sg_iterations, sg_seed, sg_exact);
    }
    if (*bench_cmd) {
      return run_bench(bn_ckpt, bn_data, bn_layers, bn_warmup, bn_reps,
                       bn_labels);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
