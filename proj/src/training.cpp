#include "nmt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "nmt/bleu.hpp"
#include "nmt/bpe.hpp"
#include "nmt/error.hpp"
#include "nmt/rng.hpp"

namespace nmt {

namespace {

constexpr uint64_t kEpochStream = 0xba7c4;
constexpr uint64_t kStepStream = 0xd80b;

std::string format_bleu(double bleu) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", bleu);
  return buf;
}

}  // namespace

std::string strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::kMix:
      return "mix";
    case Strategy::kTagged:
      return "tagged";
    case Strategy::kPretrainSynthThenAuth:
      return "pretrain_synth_then_auth";
    case Strategy::kPretrainAuthThenSynth:
      return "pretrain_auth_then_synth";
  }
  throw ConfigError("unknown strategy value");
}

Strategy parse_strategy(const std::string& name) {
  if (name == "mix") return Strategy::kMix;
  if (name == "tagged") return Strategy::kTagged;
  if (name == "pretrain_synth_then_auth") return Strategy::kPretrainSynthThenAuth;
  if (name == "pretrain_auth_then_synth") return Strategy::kPretrainAuthThenSynth;
  throw ConfigError("unknown strategy: " + name);
}

void TrainingSchedule::validate() const {
  if (eval_interval_steps <= 0) throw ConfigError("eval_interval_steps must be positive");
  if (max_steps < 0) throw ConfigError("max_steps must be nonnegative");
  if (patience_evals < 1) throw ConfigError("patience_evals must be at least 1");
  if (min_improvement_bleu < 0.0) throw ConfigError("min_improvement_bleu must be nonnegative");
  if (checkpoint_keep < 1) throw ConfigError("checkpoint_keep must be at least 1");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
}

TrainingSchedule TrainingSchedule::desk() {
  TrainingSchedule s;
  s.eval_interval_steps = 200;
  s.max_steps = 8000;
  // Desk runs start from BLEU 0 and cross their breakthrough late; the
  // default patience stops them mid-climb.
  s.patience_evals = 10;
  return s;
}

void ExperimentReport::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report: " + path);
  for (const auto& [step, bleu] : curve) out << step << '\t' << format_bleu(bleu) << '\n';
  out << "best\t" << best_step << '\t' << format_bleu(best_bleu) << '\n';
  out << "averaged\t" << averaged_end_step << '\t' << averaged_k << '\t'
      << format_bleu(averaged_bleu) << '\n';
}

ExperimentReport ExperimentReport::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open report: " + path);
  ExperimentReport report;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string head;
    std::getline(fields, head, '\t');
    if (head == "best") {
      fields >> report.best_step >> report.best_bleu;
    } else if (head == "averaged") {
      fields >> report.averaged_end_step >> report.averaged_k >> report.averaged_bleu;
    } else {
      if (head.empty() || head.find_first_not_of("0123456789") != std::string::npos)
        throw DataError("malformed report line in " + path + ": " + line);
      uint64_t step = std::stoull(head);
      double bleu = 0.0;
      fields >> bleu;
      report.curve.emplace_back(step, bleu);
    }
    if (fields.fail()) throw DataError("malformed report line in " + path + ": " + line);
  }
  return report;
}

IdCorpus encode_corpus(const ParallelCorpus& corpus, const Vocabulary& src_vocab,
                       const Vocabulary& tgt_vocab) {
  IdCorpus ids;
  ids.src.reserve(corpus.size());
  ids.tgt.reserve(corpus.size());
  for (const auto& pair : corpus.pairs) {
    ids.src.push_back(src_vocab.encode(pair.source));
    ids.tgt.push_back(tgt_vocab.encode(pair.target));
  }
  return ids;
}

std::vector<Batch> make_batches(const IdCorpus& corpus, int batch_size, uint64_t seed) {
  if (corpus.size() == 0) throw DataError("make_batches: empty corpus");
  if (batch_size <= 0) throw ConfigError("make_batches: batch_size must be positive");

  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return corpus.src[a].size() < corpus.src[b].size();
  });

  const size_t n_chunks = (order.size() + static_cast<size_t>(batch_size) - 1) /
                          static_cast<size_t>(batch_size);
  std::vector<size_t> chunk_order(n_chunks);
  std::iota(chunk_order.begin(), chunk_order.end(), size_t{0});
  rng.shuffle(chunk_order);

  std::vector<Batch> batches;
  batches.reserve(n_chunks);
  for (size_t chunk : chunk_order) {
    const size_t begin = chunk * static_cast<size_t>(batch_size);
    const size_t end = std::min(order.size(), begin + static_cast<size_t>(batch_size));
    std::vector<std::vector<int>> src, tgt;
    src.reserve(end - begin);
    tgt.reserve(end - begin);
    for (size_t i = begin; i < end; ++i) {
      src.push_back(corpus.src[order[i]]);
      tgt.push_back(corpus.tgt[order[i]]);
    }
    batches.push_back(make_batch(src, tgt));
  }
  return batches;
}

bool should_stop(const std::vector<double>& eval_history, int patience, double min_improvement) {
  if (patience < 1) throw ConfigError("should_stop: patience must be at least 1");
  if (static_cast<int>(eval_history.size()) < patience) return false;
  std::vector<bool> failed;
  failed.reserve(eval_history.size());
  double best = -std::numeric_limits<double>::infinity();
  for (double score : eval_history) {
    failed.push_back(score <= best + min_improvement);
    best = std::max(best, score);
  }
  for (size_t i = failed.size() - static_cast<size_t>(patience); i < failed.size(); ++i)
    if (!failed[i]) return false;
  return true;
}

double evaluate_dev(const Checkpoint& checkpoint, const ParallelCorpus& dev_corpus) {
  if (dev_corpus.empty()) throw DataError("evaluate_dev: empty dev corpus");
  std::vector<Sentence> hyps, refs;
  hyps.reserve(dev_corpus.size());
  refs.reserve(dev_corpus.size());
  const size_t chunk = static_cast<size_t>(checkpoint.config.batch_size);
  for (size_t begin = 0; begin < dev_corpus.size(); begin += chunk) {
    const size_t end = std::min(dev_corpus.size(), begin + chunk);
    std::vector<Sentence> sources;
    sources.reserve(end - begin);
    for (size_t i = begin; i < end; ++i) sources.push_back(dev_corpus.pairs[i].source);
    std::vector<Sentence> decoded =
        greedy_decode_batch(checkpoint, sources, checkpoint.config.max_decode_length);
    for (auto& h : decoded) hyps.push_back(decode_bpe(h).sentence);
  }
  for (const auto& pair : dev_corpus.pairs) refs.push_back(decode_bpe(pair.target).sentence);
  return bleu_corpus(hyps, refs, BleuSmoothing::kNone).score;
}

TrainResult train(Checkpoint checkpoint, const ParallelCorpus& train_corpus,
                  const ParallelCorpus& dev_corpus, const TrainingSchedule& schedule) {
  schedule.validate();
  checkpoint.config.validate();
  if (train_corpus.empty()) throw DataError("train: empty training corpus");
  if (dev_corpus.empty()) throw DataError("train: empty dev corpus");

  const auto t_start = std::chrono::steady_clock::now();
  const IdCorpus ids = encode_corpus(train_corpus, checkpoint.src_vocab, checkpoint.tgt_vocab);
  const uint64_t epoch_root = derive_seed(schedule.seed, kEpochStream);
  const uint64_t step_root = derive_seed(schedule.seed, kStepStream);

  std::deque<Checkpoint> snapshots;
  std::vector<double> history;
  ExperimentReport report;
  Params grads;

  int steps_taken = 0;
  bool stop = schedule.max_steps == 0;
  for (uint64_t epoch = 0; !stop; ++epoch) {
    const std::vector<Batch> batches =
        make_batches(ids, checkpoint.config.batch_size, derive_seed(epoch_root, epoch));
    for (const Batch& batch : batches) {
      const uint64_t step_seed = derive_seed(step_root, checkpoint.step);
      const LossResult loss =
          batch_loss_and_grad(checkpoint.config, checkpoint.params, batch, true, step_seed, grads);
      if (!std::isfinite(loss.loss))
        throw TrainError("training diverged at step " + std::to_string(checkpoint.step + 1));
      clip_global_norm(grads, schedule.clip_norm);
      adam_step(checkpoint, grads);
      ++steps_taken;

      if (checkpoint.step % static_cast<uint64_t>(schedule.eval_interval_steps) == 0) {
        const double bleu = evaluate_dev(checkpoint, dev_corpus);
        report.curve.emplace_back(checkpoint.step, bleu);
        history.push_back(bleu);
        snapshots.push_back(checkpoint);
        while (snapshots.size() > static_cast<size_t>(schedule.checkpoint_keep))
          snapshots.pop_front();
        if (should_stop(history, schedule.patience_evals, schedule.min_improvement_bleu)) {
          stop = true;
          break;
        }
      }
      if (steps_taken >= schedule.max_steps) {
        stop = true;
        break;
      }
    }
  }

  if (!report.curve.empty()) {
    report.best_step = report.curve.front().first;
    report.best_bleu = report.curve.front().second;
    for (const auto& [step, bleu] : report.curve) {
      if (bleu > report.best_bleu) {
        report.best_bleu = bleu;
        report.best_step = step;
      }
    }
  }

  TrainResult result;
  result.snapshots.assign(snapshots.begin(), snapshots.end());
  if (!result.snapshots.empty()) {
    const Checkpoint averaged = average_checkpoints(
        result.snapshots, AveragingWindow::last_k(schedule.checkpoint_keep));
    report.averaged_bleu = evaluate_dev(averaged, dev_corpus);
    report.averaged_end_step = averaged.step;
    report.averaged_k = static_cast<int>(result.snapshots.size());
  }
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  result.report = report;
  result.final_checkpoint = std::move(checkpoint);
  return result;
}

std::vector<Phase> prepare_strategy(const ParallelCorpus& authentic,
                                    const ParallelCorpus& synthetic, Strategy strategy,
                                    TagSide machine_side, uint64_t seed) {
  // An empty side degrades every strategy to plain training on the other,
  // so a pipeline without synthetic data is exactly the baseline.
  std::vector<Phase> phases;
  switch (strategy) {
    case Strategy::kMix:
      phases.push_back({mix_corpora(authentic, synthetic, seed), "mix"});
      break;
    case Strategy::kTagged:
      phases.push_back({mix_corpora(authentic, tag_synthetic(synthetic, machine_side), seed), "tagged"});
      break;
    case Strategy::kPretrainSynthThenAuth:
      if (!synthetic.empty()) phases.push_back({synthetic, "synthetic"});
      if (!authentic.empty()) phases.push_back({authentic, "authentic"});
      break;
    case Strategy::kPretrainAuthThenSynth:
      if (!authentic.empty()) phases.push_back({authentic, "authentic"});
      if (!synthetic.empty()) phases.push_back({synthetic, "synthetic"});
      break;
  }
  if (phases.empty()) throw DataError("prepare_strategy: no training data");
  return phases;
}

}  // namespace nmt
