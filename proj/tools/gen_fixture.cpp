// Regenerates the bundled synthetic payslip fixture: train/test corpora
// whose word-level label counts match data/synthetic/manifest.json exactly.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "layoutlab/corpus.hpp"
#include "layoutlab/synthgen.hpp"

namespace {

using namespace layoutlab;

nlohmann::json split_manifest(const SplitTargets& targets) {
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [label, count] : targets.label_words) labels[label] = count;
  return {{"pages", targets.pages},
          {"total", targets.total_words},
          {"outside", targets.outside_words()},
          {"labels", std::move(labels)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generate the synthetic payslip fixture"};
  std::string out_dir = "data/synthetic";
  std::uint64_t seed = 20240601;
  app.add_option("--out-dir", out_dir);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out_dir);
    const SplitTargets train_targets = payslip_train_targets();
    const SplitTargets test_targets = payslip_test_targets();

    const auto train = make_payslip_split(train_targets, seed, "train");
    const auto test = make_payslip_split(test_targets, seed + 1, "test");
    write_corpus(train, out_dir + "/payslips_train.jsonl");
    write_corpus(test, out_dir + "/payslips_test.jsonl");

    const LabelSet labels = payslip_labels();
    std::ofstream label_file(out_dir + "/labels.txt");
    for (const auto& label : labels.labels()) label_file << label << "\n";

    nlohmann::json manifest;
    manifest["train"] = split_manifest(train_targets);
    manifest["test"] = split_manifest(test_targets);
    std::ofstream manifest_file(out_dir + "/manifest.json");
    manifest_file << manifest.dump(2) << "\n";

    std::cout << "fixture written to " << out_dir << " (" << train.size()
              << " train pages, " << test.size() << " test pages)\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
