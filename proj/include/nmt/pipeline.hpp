#pragma once

#include <cstdint>
#include <string>

#include "nmt/bpe.hpp"
#include "nmt/checkpoint.hpp"
#include "nmt/corpus.hpp"
#include "nmt/training.hpp"

namespace nmt {

// One round of self-training-enhanced back-translation:
//   1. train the backward (target -> source) model on the parallel data,
//   2. back-translate the monolingual target data into synth A,
//   3. self-train an improved backward model on parallel + synth A,
//   4. regenerate the synthetic corpus (synth B) with the improved model,
//   5. train the forward model on parallel + synth B.
struct PipelineConfig {
  ModelConfig model;            // architecture template shared by all stages
  TrainingSchedule schedule;    // cadence shared by all stages; per-stage seeds derived
  Strategy strategy_backward = Strategy::kMix;  // how self-training mixes synth A
  Strategy strategy_forward = Strategy::kMix;   // how back-translation mixes synth B
  AveragingWindow averaging = AveragingWindow::last_k(8);
  int bpe_merges = 100;
  int vocab_max = 10000;  // per-side vocabulary cap, specials included
  bool joint_bpe = false;         // learn one merge table over both sides
  uint64_t seed = 1;
  std::string run_dir;  // artifact root; every stage persists under stage-N-*/

  void validate() const;
};

struct StageArtifacts {
  BpeModel bpe_source;
  BpeModel bpe_target;
  Checkpoint backward_baseline;
  Checkpoint backward_improved;
  Checkpoint forward_model;
  ParallelCorpus synth_a;  // surface text, origin SYNTHETIC, targets verbatim monolingual
  ParallelCorpus synth_b;
  ExperimentReport report_backward;
  ExperimentReport report_self_train;
  ExperimentReport report_forward;
  size_t synth_a_skipped = 0;
  size_t synth_b_skipped = 0;
};

struct StageResult {
  Checkpoint checkpoint;  // averaged over the stage's snapshot window
  ExperimentReport report;
};

// Trains the target -> source direction on the (forward-oriented,
// BPE-encoded) parallel corpus; vocabularies are built from the swapped
// sides. Returns the averaged checkpoint.
StageResult train_backward(const ParallelCorpus& parallel, const ParallelCorpus& dev,
                           const ModelConfig& model, const TrainingSchedule& schedule,
                           const AveragingWindow& averaging, int vocab_max);

struct SyntheticResult {
  ParallelCorpus corpus;  // (machine source, verbatim target), order preserved
  size_t skipped = 0;     // sentences whose decode came back empty
};

// Back-translates each monolingual sentence with the backward model. The
// monolingual text is segmented with the target-side BPE model stored
// next to the backward checkpoint; outputs are BPE-decoded back to
// surface words. Errors if more than 1% of sentences are skipped.
SyntheticResult generate_synthetic(const Checkpoint& backward,
                                   const MonolingualCorpus& monolingual, const BpeModel& mono_bpe);

// Trains the improved backward model on parallel + synth A per the
// strategy. Corpora arrive forward-oriented and BPE-encoded; sides are
// swapped here, so the machine-generated text lands on the target side.
// MIX/TAGGED train from scratch; pre-train variants run two phases with
// a vocabulary extension in between. `backward` supplies the
// architecture.
StageResult self_train(const Checkpoint& backward, const ParallelCorpus& authentic,
                       const ParallelCorpus& synthetic, const ParallelCorpus& dev,
                       Strategy strategy, const TrainingSchedule& schedule,
                       const AveragingWindow& averaging, int vocab_max);

// Trains the forward model on parallel + synthetic (both forward-
// oriented, BPE-encoded; the machine-generated text sits on the source
// side). An empty synthetic corpus yields plain baseline training.
StageResult train_forward(const ParallelCorpus& authentic, const ParallelCorpus& synthetic,
                          const ParallelCorpus& dev, Strategy strategy, const ModelConfig& model,
                          const TrainingSchedule& schedule, const AveragingWindow& averaging,
                          int vocab_max);

// Runs all five stages over surface-text corpora, persisting artifacts
// under config.run_dir (stage-N-*/ plus a `manifest` of content hashes).
// A failing stage aborts with its name; artifacts of completed stages
// stay on disk, and a rerun over the same directory reuses them bitwise
// instead of recomputing.
StageArtifacts run_full_pipeline(const ParallelCorpus& parallel, const ParallelCorpus& dev,
                                 const MonolingualCorpus& monolingual,
                                 const PipelineConfig& config);

}  // namespace nmt
