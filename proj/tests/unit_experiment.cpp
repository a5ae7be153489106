#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nmt/error.hpp"
#include "nmt/experiment.hpp"

using namespace nmt;

namespace {

namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<ArmResult> two_rows() {
  ExperimentReport a;
  a.curve = {{100, 3.0}, {200, 9.5}};
  a.best_step = 200;
  a.best_bleu = 9.5;
  a.averaged_bleu = 9.25;
  ExperimentReport b;
  b.curve = {{100, 4.125}};
  b.best_step = 100;
  b.best_bleu = 4.125;
  b.averaged_bleu = 4.0;
  return {{"baseline", a}, {"mix", b}};
}

}  // namespace

TEST_CASE("comparison tables format fixed-point columns") {
  const std::string table = comparison_table(two_rows());
  // 4.125 is exactly representable and rounds half-to-even under %.2f.
  CHECK(table ==
        "arm\tbest_step\tbest_bleu\taveraged_bleu\n"
        "baseline\t200\t9.50\t9.25\n"
        "mix\t100\t4.12\t4.00\n");
  CHECK(comparison_table({}) == "arm\tbest_step\tbest_bleu\taveraged_bleu\n");
}

TEST_CASE("emit_curves writes one series per arm plus an index") {
  const fs::path dir = fs::temp_directory_path() / "nmt_curves_test";
  fs::remove_all(dir);
  emit_curves(two_rows(), dir.string());

  CHECK(read_file((dir / "index.tsv").string()) == "baseline\tbaseline.tsv\nmix\tmix.tsv\n");
  CHECK(read_file((dir / "baseline.tsv").string()) == "100\t3.000000\n200\t9.500000\n");
  CHECK(read_file((dir / "mix.tsv").string()) == "100\t4.125000\n");

  CHECK_THROWS_AS(emit_curves({}, dir.string()), DataError);
  fs::remove_all(dir);
}

TEST_CASE("experiments run every arm and rerun byte-identically") {
  const fs::path root = fs::temp_directory_path() / "nmt_experiment_test";
  fs::remove_all(root);

  ExperimentConfig config;
  config.use_toy = true;
  config.toy.task = ToyTask::kCopy;
  config.toy.vocab_size = 10;
  config.toy.min_length = 2;
  config.toy.max_length = 4;
  config.toy.train_pairs = 120;
  config.toy.dev_pairs = 16;
  config.toy.test_pairs = 16;
  config.toy.monolingual = 120;
  config.toy.seed = 3;
  config.pipeline.model = ModelConfig::desk();
  config.pipeline.model.hidden_size = 48;
  config.pipeline.model.batch_size = 16;
  config.pipeline.model.dropout_prob = 0.0;
  config.pipeline.model.learning_rate = 1e-2;
  config.pipeline.model.max_decode_length = 12;
  config.pipeline.schedule = TrainingSchedule::desk();
  config.pipeline.schedule.eval_interval_steps = 100;
  config.pipeline.schedule.max_steps = 400;
  config.pipeline.averaging = AveragingWindow::last_k(3);
  config.pipeline.bpe_merges = 8;
  config.pipeline.vocab_max = 500;
  config.arms = {"mix", "baseline", "tagged"};  // baseline is hoisted first
  config.output_dir = (root / "run1").string();
  config.seed = 5;

  const std::vector<ArmResult> rows = run_experiment(config);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].name == "baseline");
  CHECK(rows[1].name == "mix");
  CHECK(rows[2].name == "tagged");
  for (const auto& row : rows) CHECK_FALSE(row.report.curve.empty());

  for (const char* rel :
       {"shared/bpe.src", "shared/synth.src", "arm-baseline/report.tsv",
        "arm-baseline/checkpoint.bin", "arm-mix/report.tsv", "arm-tagged/checkpoint.bin",
        "curves/index.tsv", "curves/baseline.tsv", "curves/mix.tsv", "curves/tagged.tsv",
        "comparison.tsv"})
    CHECK(fs::exists(root / "run1" / rel));

  // The written table matches the returned rows, and curve files mirror
  // the report curves.
  CHECK(read_file((root / "run1" / "comparison.tsv").string()) == comparison_table(rows));
  {
    const ExperimentReport mix =
        ExperimentReport::load((root / "run1" / "arm-mix/report.tsv").string());
    std::string expect;
    for (const auto& [step, bleu] : mix.curve) {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%llu\t%.6f\n", static_cast<unsigned long long>(step), bleu);
      expect += buf;
    }
    CHECK(read_file((root / "run1" / "curves/mix.tsv").string()) == expect);
  }

  ExperimentConfig rerun = config;
  rerun.output_dir = (root / "run2").string();
  run_experiment(rerun);
  for (const char* rel : {"comparison.tsv", "arm-baseline/report.tsv", "arm-mix/report.tsv",
                          "arm-tagged/report.tsv", "curves/mix.tsv", "shared/synth.src"})
    CHECK(read_file((root / "run1" / rel).string()) == read_file((root / "run2" / rel).string()));

  fs::remove_all(root);
}
