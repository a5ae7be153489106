#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nmt/checkpoint.hpp"
#include "nmt/corpus.hpp"
#include "nmt/model.hpp"

namespace nmt {

enum class Strategy { kMix, kTagged, kPretrainSynthThenAuth, kPretrainAuthThenSynth };

std::string strategy_name(Strategy strategy);
Strategy parse_strategy(const std::string& name);

struct TrainingSchedule {
  Strategy strategy = Strategy::kMix;
  int eval_interval_steps = 5000;
  int max_steps = 200000;
  int patience_evals = 4;
  double min_improvement_bleu = 0.2;
  int checkpoint_keep = 8;
  double clip_norm = 5.0;
  uint64_t seed = 1;

  void validate() const;

  // Short cadence for desk-scale runs; the rules stay the same.
  static TrainingSchedule desk();
};

struct ExperimentReport {
  std::vector<std::pair<uint64_t, double>> curve;  // (step, dev BLEU)
  uint64_t best_step = 0;
  double best_bleu = 0.0;
  double averaged_bleu = 0.0;
  uint64_t averaged_end_step = 0;
  int averaged_k = 0;
  // Console diagnostics only; never written to report files, which must
  // be byte-stable across reruns.
  double wall_time_seconds = 0.0;

  // Tab-separated step/dev_bleu rows plus best/averaged footer rows.
  void save(const std::string& path) const;
  static ExperimentReport load(const std::string& path);
};

// Token sequences mapped to ids (unknowns already folded to <unk>).
struct IdCorpus {
  std::vector<std::vector<int>> src;
  std::vector<std::vector<int>> tgt;

  size_t size() const { return src.size(); }
};

IdCorpus encode_corpus(const ParallelCorpus& corpus, const Vocabulary& src_vocab,
                       const Vocabulary& tgt_vocab);

// Epoch batching: seeded shuffle, stable sort by source length, chunks of
// batch_size, then seeded shuffle of the chunk order. Keeps padding small
// without fixing the batch sequence.
std::vector<Batch> make_batches(const IdCorpus& corpus, int batch_size, uint64_t seed);

// Early stopping against the running best: an evaluation fails when its
// score is at most best-so-far + min_improvement; true once the most
// recent `patience` evaluations all failed.
bool should_stop(const std::vector<double>& eval_history, int patience, double min_improvement);

struct TrainResult {
  std::vector<Checkpoint> snapshots;  // last checkpoint_keep eval-time snapshots
  ExperimentReport report;
  Checkpoint final_checkpoint;
};

// Optimizer loop with periodic dev evaluation (greedy decode, BPE-decoded
// unsmoothed corpus BLEU), snapshotting at eval boundaries, early
// stopping, and a relative max_steps budget. Corpora arrive BPE-encoded;
// ids come from the checkpoint's vocabularies.
TrainResult train(Checkpoint checkpoint, const ParallelCorpus& train_corpus,
                  const ParallelCorpus& dev_corpus, const TrainingSchedule& schedule);

// Dev-set score of one checkpoint: decode greedily, undo BPE, strip tags,
// unsmoothed corpus BLEU.
double evaluate_dev(const Checkpoint& checkpoint, const ParallelCorpus& dev_corpus);

struct Phase {
  ParallelCorpus corpus;
  std::string label;
};

// Expands a strategy into ordered training phases over corpora already
// oriented for the training direction; machine_side names the pair side
// holding machine-generated text (the tag side for TAGGED).
std::vector<Phase> prepare_strategy(const ParallelCorpus& authentic,
                                    const ParallelCorpus& synthetic, Strategy strategy,
                                    TagSide machine_side, uint64_t seed);

}  // namespace nmt
