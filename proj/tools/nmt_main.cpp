// Command-line front end: data generation, BPE, training, translation,
// scoring, checkpoint averaging, the full back-translation pipeline and
// report rendering. Every run is seeded; reruns reproduce outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nmt/bleu.hpp"
#include "nmt/bpe.hpp"
#include "nmt/checkpoint.hpp"
#include "nmt/config.hpp"
#include "nmt/corpus.hpp"
#include "nmt/error.hpp"
#include "nmt/experiment.hpp"
#include "nmt/pipeline.hpp"
#include "nmt/toy.hpp"
#include "nmt/training.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
};

nmt::ExperimentConfig load_experiment(const CommonOpts& opts) {
  if (opts.config_path.empty()) throw nmt::ConfigError("--config FILE is required");
  nmt::ExperimentConfig config = nmt::ExperimentConfig::from_file(opts.config_path);
  config.apply_env();
  if (opts.seed) config.override_seed(*opts.seed);
  return config;
}

struct LoadedData {
  nmt::ParallelCorpus train, dev, test;
  nmt::MonolingualCorpus mono;
};

LoadedData resolve_data(const nmt::ExperimentConfig& config) {
  LoadedData data;
  if (config.use_toy) {
    nmt::ToyData toy = nmt::gen_toy_corpus(config.toy);
    data.train = std::move(toy.train);
    data.dev = std::move(toy.dev);
    data.test = std::move(toy.test);
    data.mono = std::move(toy.monolingual);
  } else {
    data.train = nmt::load_corpus(config.train_src, config.train_tgt, nmt::Origin::kAuthentic);
    data.dev = nmt::load_corpus(config.dev_src, config.dev_tgt, nmt::Origin::kAuthentic);
    data.mono = nmt::load_monolingual(config.mono_path);
  }
  return data;
}

std::vector<nmt::Sentence> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw nmt::DataError("cannot open file: " + path);
  std::vector<nmt::Sentence> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(nmt::split_tokens(line));
  return lines;
}

void write_lines(const std::vector<nmt::Sentence>& lines, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw nmt::DataError("cannot write file: " + path);
  for (const auto& s : lines) out << nmt::join_tokens(s) << '\n';
}

void print_report_summary(const std::string& label, const nmt::ExperimentReport& report) {
  std::printf("%s: best %.2f BLEU at step %llu, averaged %.2f BLEU (k=%d, %.1fs)\n", label.c_str(),
              report.best_bleu, static_cast<unsigned long long>(report.best_step),
              report.averaged_bleu, report.averaged_k, report.wall_time_seconds);
}

int cmd_toy_gen(const CommonOpts& opts, const std::string& out_dir) {
  nmt::ExperimentConfig config = load_experiment(opts);
  nmt::ToyData data = nmt::gen_toy_corpus(config.toy);
  fs::create_directories(out_dir);
  nmt::save_corpus(data.train, out_dir + "/train.src", out_dir + "/train.tgt");
  nmt::save_corpus(data.dev, out_dir + "/dev.src", out_dir + "/dev.tgt");
  nmt::save_corpus(data.test, out_dir + "/test.src", out_dir + "/test.tgt");
  nmt::save_monolingual(data.monolingual, out_dir + "/mono.tgt");
  std::printf("wrote %zu train / %zu dev / %zu test pairs and %zu monolingual sentences to %s\n",
              data.train.size(), data.dev.size(), data.test.size(), data.monolingual.size(),
              out_dir.c_str());
  return 0;
}

int cmd_bpe_learn(int merges, const std::string& model_path,
                  const std::vector<std::string>& inputs) {
  std::vector<nmt::Sentence> corpus;
  for (const auto& path : inputs)
    for (auto& line : read_lines(path)) corpus.push_back(std::move(line));
  const nmt::BpeModel model = nmt::learn_bpe(corpus, merges);
  model.save(model_path);
  std::printf("learned %zu merges from %zu lines -> %s\n", model.merges.size(), corpus.size(),
              model_path.c_str());
  return 0;
}

int cmd_bpe_apply(const std::string& model_path, const std::string& input,
                  const std::string& output) {
  const nmt::BpeModel model = nmt::BpeModel::load(model_path);
  std::vector<nmt::Sentence> lines = read_lines(input);
  for (auto& line : lines) line = nmt::apply_bpe(model, line);
  write_lines(lines, output);
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  nmt::ExperimentConfig config = load_experiment(opts);
  LoadedData data = resolve_data(config);
  fs::create_directories(config.output_dir);

  nmt::BpeModel bpe_source, bpe_target;
  std::vector<nmt::Sentence> src_side, tgt_side;
  for (const auto& pair : data.train.pairs) {
    src_side.push_back(pair.source);
    tgt_side.push_back(pair.target);
  }
  if (config.pipeline.joint_bpe) {
    std::vector<nmt::Sentence> both = src_side;
    both.insert(both.end(), tgt_side.begin(), tgt_side.end());
    bpe_source = nmt::learn_bpe(both, config.pipeline.bpe_merges);
    bpe_target = bpe_source;
  } else {
    bpe_source = nmt::learn_bpe(src_side, config.pipeline.bpe_merges);
    bpe_target = nmt::learn_bpe(tgt_side, config.pipeline.bpe_merges);
  }
  bpe_source.save(config.output_dir + "/bpe.src");
  bpe_target.save(config.output_dir + "/bpe.tgt");

  const nmt::ParallelCorpus train_bpe = bpe_encode_corpus(data.train, bpe_source, bpe_target);
  const nmt::ParallelCorpus dev_bpe = bpe_encode_corpus(data.dev, bpe_source, bpe_target);
  const nmt::StageResult result = nmt::train_forward(
      train_bpe, nmt::ParallelCorpus{}, dev_bpe, nmt::Strategy::kMix, config.pipeline.model,
      config.pipeline.schedule, config.pipeline.averaging, config.pipeline.vocab_max);
  nmt::save_checkpoint(result.checkpoint, config.output_dir + "/checkpoint.bin");
  result.report.save(config.output_dir + "/report.tsv");
  print_report_summary("train", result.report);
  return 0;
}

int cmd_translate(const std::string& ckpt_path, const std::string& bpe_path,
                  const std::string& input, const std::string& output, int max_length) {
  const nmt::Checkpoint ckpt = nmt::load_checkpoint(ckpt_path);
  const nmt::BpeModel bpe = nmt::BpeModel::load(bpe_path);
  const std::vector<nmt::Sentence> lines = read_lines(input);
  if (lines.empty()) throw nmt::DataError("translate: empty input " + input);
  const int cap = max_length > 0 ? max_length : ckpt.config.max_decode_length;

  std::vector<nmt::Sentence> out;
  out.reserve(lines.size());
  const size_t chunk = static_cast<size_t>(ckpt.config.batch_size);
  for (size_t begin = 0; begin < lines.size(); begin += chunk) {
    const size_t end = std::min(lines.size(), begin + chunk);
    std::vector<nmt::Sentence> sources;
    for (size_t i = begin; i < end; ++i) sources.push_back(nmt::apply_bpe(bpe, lines[i]));
    for (auto& hyp : nmt::greedy_decode_batch(ckpt, sources, cap))
      out.push_back(nmt::decode_bpe(hyp).sentence);
  }
  write_lines(out, output);
  return 0;
}

int cmd_bleu(const std::string& hyp_path, const std::string& ref_path, bool add1) {
  const std::vector<nmt::Sentence> hyps = read_lines(hyp_path);
  const std::vector<nmt::Sentence> refs = read_lines(ref_path);
  const nmt::BleuScore result = nmt::bleu_corpus(
      hyps, refs, add1 ? nmt::BleuSmoothing::kAdd1 : nmt::BleuSmoothing::kNone);
  std::printf("%s\n", result.summary().c_str());
  return 0;
}

int cmd_avg_ckpt(const std::string& output, const std::vector<std::string>& inputs, int last_k,
                 uint64_t ending_at) {
  std::vector<nmt::Checkpoint> snapshots;
  snapshots.reserve(inputs.size());
  for (const auto& path : inputs) snapshots.push_back(nmt::load_checkpoint(path));
  const int k = last_k > 0 ? last_k : static_cast<int>(snapshots.size());
  const nmt::AveragingWindow window = ending_at > 0 ? nmt::AveragingWindow::ending_at(ending_at, k)
                                                    : nmt::AveragingWindow::last_k(k);
  const nmt::Checkpoint averaged = nmt::average_checkpoints(snapshots, window);
  nmt::save_checkpoint(averaged, output);
  std::printf("averaged %zu checkpoints -> %s (step %llu)\n", snapshots.size(), output.c_str(),
              static_cast<unsigned long long>(averaged.step));
  return 0;
}

int cmd_pipeline(const CommonOpts& opts) {
  nmt::ExperimentConfig config = load_experiment(opts);
  LoadedData data = resolve_data(config);
  nmt::PipelineConfig pipeline = config.pipeline;
  pipeline.run_dir = config.output_dir;
  const nmt::StageArtifacts art = nmt::run_full_pipeline(data.train, data.dev, data.mono, pipeline);
  print_report_summary("backward", art.report_backward);
  print_report_summary("self_train", art.report_self_train);
  print_report_summary("forward", art.report_forward);
  std::printf("synthetic: %zu + %zu pairs (skipped %zu + %zu)\n", art.synth_a.size(),
              art.synth_b.size(), art.synth_a_skipped, art.synth_b_skipped);
  return 0;
}

int cmd_experiment(const CommonOpts& opts) {
  nmt::ExperimentConfig config = load_experiment(opts);
  const std::vector<nmt::ArmResult> rows = nmt::run_experiment(config);
  std::printf("%s", nmt::comparison_table(rows).c_str());
  return 0;
}

int cmd_report(const std::vector<std::string>& files, const std::string& curves_dir) {
  std::vector<nmt::ArmResult> rows;
  for (const auto& path : files)
    rows.push_back({fs::path(path).stem().string(), nmt::ExperimentReport::load(path)});
  std::printf("%s", nmt::comparison_table(rows).c_str());
  if (!curves_dir.empty()) nmt::emit_curves(rows, curves_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSTM translation toolkit with self-training-enhanced back-translation"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string out_dir, model_path, input, output, ckpt_path, bpe_path, hyp_path, ref_path;
  std::string curves_dir;
  std::vector<std::string> inputs;
  int merges = 100, max_length = 0, last_k = 0;
  uint64_t ending_at = 0;
  bool add1 = false;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    cmd->add_option("--config", opts.config_path, "configuration file")->required(config_required);
    auto* seed_opt = cmd->add_option("--seed", "override every seed in the config");
    seed_opt->check(CLI::NonNegativeNumber);
    seed_opt->each([&](const std::string& v) { opts.seed = std::stoull(v); });
    return cmd;
  };

  auto* toy_gen = add_common(app.add_subcommand("toy-gen", "generate a toy corpus"), true);
  toy_gen->add_option("outdir", out_dir, "output directory")->required();

  auto* bpe_learn = app.add_subcommand("bpe-learn", "learn a BPE merge table");
  bpe_learn->add_option("--merges", merges, "number of merges")->required();
  bpe_learn->add_option("--output", model_path, "model file to write")->required();
  bpe_learn->add_option("inputs", inputs, "training text files")->required();

  auto* bpe_apply = app.add_subcommand("bpe-apply", "segment text with a BPE model");
  bpe_apply->add_option("model", model_path, "BPE model file")->required();
  bpe_apply->add_option("input", input, "text file to segment")->required();
  bpe_apply->add_option("output", output, "segmented output file")->required();

  auto* train = add_common(app.add_subcommand("train", "train a forward model"), true);

  auto* translate = app.add_subcommand("translate", "greedy-decode a text file");
  translate->add_option("checkpoint", ckpt_path, "model checkpoint")->required();
  translate->add_option("bpe", bpe_path, "source-side BPE model")->required();
  translate->add_option("input", input, "source text file")->required();
  translate->add_option("output", output, "translation output file")->required();
  translate->add_option("--max-length", max_length, "decode length cap");

  auto* bleu = app.add_subcommand("bleu", "score a hypothesis file");
  bleu->add_option("hypothesis", hyp_path, "hypothesis text file")->required();
  bleu->add_option("reference", ref_path, "reference text file")->required();
  bleu->add_flag("--add1", add1, "add-1 smoothing for n >= 2");

  auto* avg = app.add_subcommand("avg-ckpt", "average checkpoints");
  avg->add_option("--output", output, "averaged checkpoint to write")->required();
  avg->add_option("--last-k", last_k, "window size (default: all inputs)");
  avg->add_option("--ending-at", ending_at, "cap the window at this step");
  avg->add_option("inputs", inputs, "checkpoint files")->required();

  auto* pipeline = add_common(app.add_subcommand("pipeline", "run the back-translation pipeline"), true);

  auto* experiment =
      add_common(app.add_subcommand("experiment", "compare self-training strategies"), true);

  auto* report = app.add_subcommand("report", "render report files as a table");
  report->add_option("files", inputs, "report files")->required();
  report->add_option("--curves", curves_dir, "also write curve series here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (toy_gen->parsed()) return cmd_toy_gen(opts, out_dir);
    if (bpe_learn->parsed()) return cmd_bpe_learn(merges, model_path, inputs);
    if (bpe_apply->parsed()) return cmd_bpe_apply(model_path, input, output);
    if (train->parsed()) return cmd_train(opts);
    if (translate->parsed()) return cmd_translate(ckpt_path, bpe_path, input, output, max_length);
    if (bleu->parsed()) return cmd_bleu(hyp_path, ref_path, add1);
    if (avg->parsed()) return cmd_avg_ckpt(output, inputs, last_k, ending_at);
    if (pipeline->parsed()) return cmd_pipeline(opts);
    if (experiment->parsed()) return cmd_experiment(opts);
    if (report->parsed()) return cmd_report(inputs, curves_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  std::fprintf(stderr, "error: no subcommand\n");
  return 1;
}
