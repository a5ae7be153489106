#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nmt/model.hpp"
#include "nmt/text.hpp"
#include "nmt/vocab.hpp"

namespace nmt {

// A model frozen in time: parameters, Adam moments, step counter and the
// vocabularies the ids refer to. Immutable by convention once written;
// the training loop owns one mutable instance exclusively.
struct Checkpoint {
  ModelConfig config;
  uint64_t step = 0;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  Params params;
  Params m;  // first Adam moment, shapes mirror params
  Params v;  // second Adam moment

  static constexpr uint32_t kFormatVersion = 1;
};

// Seeded uniform [-0.1, 0.1] weights, zero biases, zero moments, step 0.
// Vocabulary sizes in the config are overwritten from the vocabularies.
Checkpoint init_model(const ModelConfig& config, const Vocabulary& src_vocab,
                      const Vocabulary& tgt_vocab);

// In-place Adam update (beta1 0.9, beta2 0.999, eps 1e-8, bias
// correction); increments step. Throws CheckpointError on shape mismatch.
void adam_step(Checkpoint& checkpoint, const Params& grads);

// Scales gradients so their global L2 norm is at most max_norm; returns
// the pre-clip norm.
double clip_global_norm(Params& grads, double max_norm);

struct AveragingWindow {
  enum class Kind { kLastK, kEndingAt };
  Kind kind = Kind::kLastK;
  int k = 8;
  uint64_t end_step = 0;  // only for kEndingAt

  static AveragingWindow last_k(int k) { return {Kind::kLastK, k, 0}; }
  static AveragingWindow ending_at(uint64_t step, int k) { return {Kind::kEndingAt, k, step}; }
};

// Element-wise mean of parameters over the selected snapshots (sorted by
// step; kLastK takes the most recent k, kEndingAt the last k at or below
// end_step). Moments are zeroed; step becomes the window's maximum.
Checkpoint average_checkpoints(const std::vector<Checkpoint>& snapshots,
                               const AveragingWindow& window);

// Grows embedding/output matrices for superset vocabularies. Appended
// rows are seeded uniform [-0.1, 0.1]; existing rows stay bit-identical;
// appended moment rows are zero.
Checkpoint extend_checkpoint_vocab(const Checkpoint& checkpoint, const Vocabulary& new_src,
                                   const Vocabulary& new_tgt, uint64_t seed);

// Versioned binary container; layout documented in the README.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Greedy decoding from <s>: argmax token per step (ties to the lowest
// id), stop at </s> or the length cap. Unknown source tokens map to
// <unk>; <SYN> is stripped from the output.
Sentence greedy_decode(const Checkpoint& checkpoint, const Sentence& src, int max_decode_length);

// Same, over many sentences at once (columns decode independently).
std::vector<Sentence> greedy_decode_batch(const Checkpoint& checkpoint,
                                          const std::vector<Sentence>& sources,
                                          int max_decode_length);

}  // namespace nmt
