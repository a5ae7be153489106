#include "nmt/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <utility>

#include "nmt/error.hpp"
#include "nmt/hash.hpp"
#include "nmt/rng.hpp"

namespace nmt {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kInitStream = 0x1417;
constexpr uint64_t kPhaseStream = 0x9a5e;
constexpr uint64_t kExtendStream = 0xe77e;
constexpr uint64_t kMixStream = 0x3f1c5;
constexpr uint64_t kStageBackward = 11;
constexpr uint64_t kStageSelfTrain = 13;
constexpr uint64_t kStageForward = 15;

std::vector<Sentence> source_side(const ParallelCorpus& corpus) {
  std::vector<Sentence> side;
  side.reserve(corpus.size());
  for (const auto& pair : corpus.pairs) side.push_back(pair.source);
  return side;
}

std::vector<Sentence> target_side(const ParallelCorpus& corpus) {
  std::vector<Sentence> side;
  side.reserve(corpus.size());
  for (const auto& pair : corpus.pairs) side.push_back(pair.target);
  return side;
}

// Runs the phases in order: fresh model for phase 0, then continued
// training after a vocabulary extension for each later phase. The stage
// checkpoint is the snapshot average of the last phase.
StageResult run_strategy(const std::vector<Phase>& phases, const ParallelCorpus& dev,
                         ModelConfig model, const TrainingSchedule& schedule,
                         const AveragingWindow& averaging, int vocab_max) {
  if (phases.empty()) throw ConfigError("training strategy produced no phases");
  TrainResult result;
  Checkpoint ckpt;
  for (size_t i = 0; i < phases.size(); ++i) {
    const ParallelCorpus& corpus = phases[i].corpus;
    TrainingSchedule phase_schedule = schedule;
    phase_schedule.seed = derive_seed(schedule.seed, kPhaseStream + i);
    if (i == 0) {
      model.seed = derive_seed(schedule.seed, kInitStream);
      ckpt = init_model(model, build_vocab(source_side(corpus), vocab_max),
                        build_vocab(target_side(corpus), vocab_max));
    } else {
      const Vocabulary src = merge_vocab(ckpt.src_vocab, build_vocab(source_side(corpus), vocab_max));
      const Vocabulary tgt = merge_vocab(ckpt.tgt_vocab, build_vocab(target_side(corpus), vocab_max));
      ckpt = extend_checkpoint_vocab(ckpt, src, tgt, derive_seed(schedule.seed, kExtendStream + i));
    }
    result = train(std::move(ckpt), corpus, dev, phase_schedule);
    ckpt = result.final_checkpoint;
  }

  StageResult out;
  out.report = result.report;
  if (result.snapshots.empty()) {
    out.checkpoint = std::move(result.final_checkpoint);
    return out;
  }
  out.checkpoint = average_checkpoints(result.snapshots, averaging);
  out.report.averaged_bleu = evaluate_dev(out.checkpoint, dev);
  out.report.averaged_end_step = out.checkpoint.step;
  int in_window = 0;
  for (const auto& snapshot : result.snapshots)
    if (averaging.kind == AveragingWindow::Kind::kLastK || snapshot.step <= averaging.end_step)
      ++in_window;
  out.report.averaged_k = std::min(in_window, averaging.k);
  return out;
}

bool stage_done(const std::string& dir) { return fs::exists(dir + "/done"); }

void mark_done(const std::string& dir) {
  std::ofstream out(dir + "/done", std::ios::binary);
  out << "ok\n";
  if (!out) throw DataError("cannot write stage marker in " + dir);
}

// Accumulates relative artifact paths and rewrites the manifest after
// every completed stage so an aborted run still describes what it kept.
struct ArtifactLog {
  std::string root;
  std::vector<std::string> rel_paths;

  void add(std::initializer_list<std::string> paths) {
    rel_paths.insert(rel_paths.end(), paths.begin(), paths.end());
  }

  void write_manifest() const {
    std::vector<std::string> sorted = rel_paths;
    std::sort(sorted.begin(), sorted.end());
    std::ofstream out(root + "/manifest", std::ios::binary);
    if (!out) throw DataError("cannot write manifest in " + root);
    for (const auto& rel : sorted) out << hash_file_hex(root + "/" + rel) << "  " << rel << '\n';
  }
};

template <class Body>
void run_stage(const std::string& name, Body&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    throw TrainError("pipeline stage " + name + " failed: " + e.what());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  schedule.validate();
  if (model.hidden_size <= 0) throw ConfigError("hidden_size must be positive");
  if (model.batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (bpe_merges < 0) throw ConfigError("bpe_merges must be nonnegative");
  if (vocab_max < Vocabulary::kNumSpecials)
    throw ConfigError("vocab_max must cover the reserved specials");
  if (averaging.k < 1) throw ConfigError("averaging window k must be at least 1");
  if (run_dir.empty()) throw ConfigError("run_dir must be set");
}

StageResult train_backward(const ParallelCorpus& parallel, const ParallelCorpus& dev,
                           const ModelConfig& model, const TrainingSchedule& schedule,
                           const AveragingWindow& averaging, int vocab_max) {
  const std::vector<Phase> phases{{swap_sides(parallel), "authentic"}};
  return run_strategy(phases, swap_sides(dev), model, schedule, averaging, vocab_max);
}

SyntheticResult generate_synthetic(const Checkpoint& backward,
                                   const MonolingualCorpus& monolingual, const BpeModel& mono_bpe) {
  if (monolingual.empty()) throw DataError("generate_synthetic: empty monolingual corpus");

  std::unordered_map<std::string, Sentence> word_cache;
  const auto encode = [&](const Sentence& sentence) {
    Sentence tokens;
    for (const auto& word : sentence) {
      auto it = word_cache.find(word);
      if (it == word_cache.end()) it = word_cache.emplace(word, apply_bpe(mono_bpe, {word})).first;
      tokens.insert(tokens.end(), it->second.begin(), it->second.end());
    }
    return tokens;
  };

  std::vector<Sentence> decoded;
  decoded.reserve(monolingual.size());
  const size_t chunk = static_cast<size_t>(backward.config.batch_size);
  for (size_t begin = 0; begin < monolingual.size(); begin += chunk) {
    const size_t end = std::min(monolingual.size(), begin + chunk);
    std::vector<Sentence> sources;
    sources.reserve(end - begin);
    for (size_t i = begin; i < end; ++i) sources.push_back(encode(monolingual.sentences[i]));
    std::vector<Sentence> out =
        greedy_decode_batch(backward, sources, backward.config.max_decode_length);
    for (auto& s : out) decoded.push_back(std::move(s));
  }

  SyntheticResult result;
  result.corpus.pairs.reserve(monolingual.size());
  for (size_t i = 0; i < monolingual.size(); ++i) {
    Sentence machine = decode_bpe(decoded[i]).sentence;
    if (machine.empty()) {
      ++result.skipped;
      continue;
    }
    result.corpus.pairs.push_back(
        {std::move(machine), monolingual.sentences[i], Origin::kSynthetic});
  }
  if (result.skipped * 100 > monolingual.size())
    throw DataError("generate_synthetic: skipped " + std::to_string(result.skipped) + " of " +
                    std::to_string(monolingual.size()) + " sentences");
  return result;
}

StageResult self_train(const Checkpoint& backward, const ParallelCorpus& authentic,
                       const ParallelCorpus& synthetic, const ParallelCorpus& dev,
                       Strategy strategy, const TrainingSchedule& schedule,
                       const AveragingWindow& averaging, int vocab_max) {
  const std::vector<Phase> phases =
      prepare_strategy(swap_sides(authentic), swap_sides(synthetic), strategy, TagSide::kTarget,
                       derive_seed(schedule.seed, kMixStream));
  return run_strategy(phases, swap_sides(dev), backward.config, schedule, averaging, vocab_max);
}

StageResult train_forward(const ParallelCorpus& authentic, const ParallelCorpus& synthetic,
                          const ParallelCorpus& dev, Strategy strategy, const ModelConfig& model,
                          const TrainingSchedule& schedule, const AveragingWindow& averaging,
                          int vocab_max) {
  const std::vector<Phase> phases = prepare_strategy(
      authentic, synthetic, strategy, TagSide::kSource, derive_seed(schedule.seed, kMixStream));
  return run_strategy(phases, dev, model, schedule, averaging, vocab_max);
}

StageArtifacts run_full_pipeline(const ParallelCorpus& parallel, const ParallelCorpus& dev,
                                 const MonolingualCorpus& monolingual,
                                 const PipelineConfig& config) {
  config.validate();
  if (parallel.empty()) throw DataError("pipeline: empty parallel corpus");
  if (dev.empty()) throw DataError("pipeline: empty dev corpus");

  fs::create_directories(config.run_dir);
  ArtifactLog log{config.run_dir, {}};
  StageArtifacts art;

  const std::string d0 = config.run_dir + "/stage-0-data";
  run_stage("data", [&] {
    fs::create_directories(d0);
    if (stage_done(d0)) {
      art.bpe_source = BpeModel::load(d0 + "/bpe.src");
      art.bpe_target = BpeModel::load(d0 + "/bpe.tgt");
      return;
    }
    if (config.joint_bpe) {
      std::vector<Sentence> both = source_side(parallel);
      const std::vector<Sentence> targets = target_side(parallel);
      both.insert(both.end(), targets.begin(), targets.end());
      art.bpe_source = learn_bpe(both, config.bpe_merges);
      art.bpe_target = art.bpe_source;
    } else {
      art.bpe_source = learn_bpe(source_side(parallel), config.bpe_merges);
      art.bpe_target = learn_bpe(target_side(parallel), config.bpe_merges);
    }
    art.bpe_source.save(d0 + "/bpe.src");
    art.bpe_target.save(d0 + "/bpe.tgt");
    mark_done(d0);
  });
  log.add({"stage-0-data/bpe.src", "stage-0-data/bpe.tgt"});
  log.write_manifest();

  const ParallelCorpus auth_bpe = bpe_encode_corpus(parallel, art.bpe_source, art.bpe_target);
  const ParallelCorpus dev_bpe = bpe_encode_corpus(dev, art.bpe_source, art.bpe_target);

  const std::string d1 = config.run_dir + "/stage-1-backward";
  run_stage("backward", [&] {
    fs::create_directories(d1);
    if (stage_done(d1)) {
      art.backward_baseline = load_checkpoint(d1 + "/checkpoint.bin");
      art.report_backward = ExperimentReport::load(d1 + "/report.tsv");
      return;
    }
    TrainingSchedule sched = config.schedule;
    sched.seed = derive_seed(config.seed, kStageBackward);
    StageResult r =
        train_backward(auth_bpe, dev_bpe, config.model, sched, config.averaging, config.vocab_max);
    art.backward_baseline = std::move(r.checkpoint);
    art.report_backward = std::move(r.report);
    save_checkpoint(art.backward_baseline, d1 + "/checkpoint.bin");
    art.report_backward.save(d1 + "/report.tsv");
    mark_done(d1);
  });
  log.add({"stage-1-backward/checkpoint.bin", "stage-1-backward/report.tsv"});
  log.write_manifest();

  const std::string d2 = config.run_dir + "/stage-2-synth-a";
  run_stage("synth_A", [&] {
    fs::create_directories(d2);
    if (stage_done(d2)) {
      art.synth_a = load_corpus(d2 + "/synth.src", d2 + "/synth.tgt", Origin::kSynthetic);
      return;
    }
    SyntheticResult r = generate_synthetic(art.backward_baseline, monolingual, art.bpe_target);
    art.synth_a = std::move(r.corpus);
    art.synth_a_skipped = r.skipped;
    save_corpus(art.synth_a, d2 + "/synth.src", d2 + "/synth.tgt");
    mark_done(d2);
  });
  log.add({"stage-2-synth-a/synth.src", "stage-2-synth-a/synth.tgt"});
  log.write_manifest();

  const std::string d3 = config.run_dir + "/stage-3-self-train";
  run_stage("self_train", [&] {
    fs::create_directories(d3);
    if (stage_done(d3)) {
      art.backward_improved = load_checkpoint(d3 + "/checkpoint.bin");
      art.report_self_train = ExperimentReport::load(d3 + "/report.tsv");
      return;
    }
    const ParallelCorpus synth_bpe = bpe_encode_corpus(art.synth_a, art.bpe_source, art.bpe_target);
    TrainingSchedule sched = config.schedule;
    sched.seed = derive_seed(config.seed, kStageSelfTrain);
    StageResult r = self_train(art.backward_baseline, auth_bpe, synth_bpe, dev_bpe,
                               config.strategy_backward, sched, config.averaging, config.vocab_max);
    art.backward_improved = std::move(r.checkpoint);
    art.report_self_train = std::move(r.report);
    save_checkpoint(art.backward_improved, d3 + "/checkpoint.bin");
    art.report_self_train.save(d3 + "/report.tsv");
    mark_done(d3);
  });
  log.add({"stage-3-self-train/checkpoint.bin", "stage-3-self-train/report.tsv"});
  log.write_manifest();

  const std::string d4 = config.run_dir + "/stage-4-synth-b";
  run_stage("synth_B", [&] {
    fs::create_directories(d4);
    if (stage_done(d4)) {
      art.synth_b = load_corpus(d4 + "/synth.src", d4 + "/synth.tgt", Origin::kSynthetic);
      return;
    }
    SyntheticResult r = generate_synthetic(art.backward_improved, monolingual, art.bpe_target);
    art.synth_b = std::move(r.corpus);
    art.synth_b_skipped = r.skipped;
    save_corpus(art.synth_b, d4 + "/synth.src", d4 + "/synth.tgt");
    mark_done(d4);
  });
  log.add({"stage-4-synth-b/synth.src", "stage-4-synth-b/synth.tgt"});
  log.write_manifest();

  const std::string d5 = config.run_dir + "/stage-5-forward";
  run_stage("forward", [&] {
    fs::create_directories(d5);
    if (stage_done(d5)) {
      art.forward_model = load_checkpoint(d5 + "/checkpoint.bin");
      art.report_forward = ExperimentReport::load(d5 + "/report.tsv");
      return;
    }
    const ParallelCorpus synth_bpe = bpe_encode_corpus(art.synth_b, art.bpe_source, art.bpe_target);
    TrainingSchedule sched = config.schedule;
    sched.seed = derive_seed(config.seed, kStageForward);
    StageResult r = train_forward(auth_bpe, synth_bpe, dev_bpe, config.strategy_forward,
                                  config.model, sched, config.averaging, config.vocab_max);
    art.forward_model = std::move(r.checkpoint);
    art.report_forward = std::move(r.report);
    save_checkpoint(art.forward_model, d5 + "/checkpoint.bin");
    art.report_forward.save(d5 + "/report.tsv");
    mark_done(d5);
  });
  log.add({"stage-5-forward/checkpoint.bin", "stage-5-forward/report.tsv"});
  log.write_manifest();

  return art;
}

}  // namespace nmt
