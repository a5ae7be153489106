#include "nmt/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nmt/error.hpp"
#include "nmt/rng.hpp"

namespace nmt {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kBackwardStream = 11;
constexpr uint64_t kSelfTrainStream = 13;

std::string format_fixed(double value, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

std::vector<Sentence> side_of(const ParallelCorpus& corpus, bool source) {
  std::vector<Sentence> side;
  side.reserve(corpus.size());
  for (const auto& pair : corpus.pairs) side.push_back(source ? pair.source : pair.target);
  return side;
}

}  // namespace

std::string comparison_table(const std::vector<ArmResult>& rows) {
  std::string out = "arm\tbest_step\tbest_bleu\taveraged_bleu\n";
  for (const auto& row : rows) {
    out += row.name;
    out += '\t';
    out += std::to_string(row.report.best_step);
    out += '\t';
    out += format_fixed(row.report.best_bleu, 2);
    out += '\t';
    out += format_fixed(row.report.averaged_bleu, 2);
    out += '\n';
  }
  return out;
}

void emit_curves(const std::vector<ArmResult>& reports, const std::string& dir) {
  if (reports.empty()) throw DataError("emit_curves: no reports");
  fs::create_directories(dir);
  std::ofstream index(dir + "/index.tsv", std::ios::binary);
  if (!index) throw DataError("cannot write curve index in " + dir);
  for (const auto& arm : reports) {
    const std::string file = arm.name + ".tsv";
    std::ofstream series(dir + "/" + file, std::ios::binary);
    if (!series) throw DataError("cannot write curve series " + file);
    for (const auto& [step, bleu] : arm.report.curve)
      series << step << '\t' << format_fixed(bleu, 6) << '\n';
    index << arm.name << '\t' << file << '\n';
  }
}

std::vector<ArmResult> run_experiment(const ExperimentConfig& config) {
  config.validate();

  ParallelCorpus train, dev;
  MonolingualCorpus mono;
  if (config.use_toy) {
    ToyData data = gen_toy_corpus(config.toy);
    train = std::move(data.train);
    dev = std::move(data.dev);
    mono = std::move(data.monolingual);
  } else {
    train = load_corpus(config.train_src, config.train_tgt, Origin::kAuthentic);
    dev = load_corpus(config.dev_src, config.dev_tgt, Origin::kAuthentic);
    mono = load_monolingual(config.mono_path);
  }

  std::vector<std::string> arms{"baseline"};
  for (const auto& arm : config.arms)
    if (std::find(arms.begin(), arms.end(), arm) == arms.end()) arms.push_back(arm);

  const std::string out_dir = config.output_dir;
  const std::string shared_dir = out_dir + "/shared";
  fs::create_directories(shared_dir);

  BpeModel bpe_source, bpe_target;
  if (config.pipeline.joint_bpe) {
    std::vector<Sentence> both = side_of(train, true);
    const std::vector<Sentence> targets = side_of(train, false);
    both.insert(both.end(), targets.begin(), targets.end());
    bpe_source = learn_bpe(both, config.pipeline.bpe_merges);
    bpe_target = bpe_source;
  } else {
    bpe_source = learn_bpe(side_of(train, true), config.pipeline.bpe_merges);
    bpe_target = learn_bpe(side_of(train, false), config.pipeline.bpe_merges);
  }
  bpe_source.save(shared_dir + "/bpe.src");
  bpe_target.save(shared_dir + "/bpe.tgt");

  const ParallelCorpus train_bpe = bpe_encode_corpus(train, bpe_source, bpe_target);
  const ParallelCorpus dev_bpe = bpe_encode_corpus(dev, bpe_source, bpe_target);

  std::vector<ArmResult> rows;

  TrainingSchedule backward_schedule = config.pipeline.schedule;
  backward_schedule.seed = derive_seed(config.seed, kBackwardStream);
  StageResult baseline = train_backward(train_bpe, dev_bpe, config.pipeline.model,
                                        backward_schedule, config.pipeline.averaging,
                                        config.pipeline.vocab_max);
  {
    const std::string arm_dir = out_dir + "/arm-baseline";
    fs::create_directories(arm_dir);
    save_checkpoint(baseline.checkpoint, arm_dir + "/checkpoint.bin");
    baseline.report.save(arm_dir + "/report.tsv");
    rows.push_back({"baseline", baseline.report});
  }

  SyntheticResult synth = generate_synthetic(baseline.checkpoint, mono, bpe_target);
  save_corpus(synth.corpus, shared_dir + "/synth.src", shared_dir + "/synth.tgt");
  const ParallelCorpus synth_bpe = bpe_encode_corpus(synth.corpus, bpe_source, bpe_target);

  TrainingSchedule arm_schedule = config.pipeline.schedule;
  arm_schedule.seed = derive_seed(config.seed, kSelfTrainStream);
  for (const auto& arm : arms) {
    if (arm == "baseline") continue;
    StageResult result =
        self_train(baseline.checkpoint, train_bpe, synth_bpe, dev_bpe, parse_strategy(arm),
                   arm_schedule, config.pipeline.averaging, config.pipeline.vocab_max);
    const std::string arm_dir = out_dir + "/arm-" + arm;
    fs::create_directories(arm_dir);
    save_checkpoint(result.checkpoint, arm_dir + "/checkpoint.bin");
    result.report.save(arm_dir + "/report.tsv");
    rows.push_back({arm, result.report});
  }

  emit_curves(rows, out_dir + "/curves");
  std::ofstream table(out_dir + "/comparison.tsv", std::ios::binary);
  if (!table) throw DataError("cannot write comparison table in " + out_dir);
  table << comparison_table(rows);
  return rows;
}

}  // namespace nmt
