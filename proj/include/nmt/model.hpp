#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nmt/tensor.hpp"

namespace nmt {

// Two-layer unidirectional LSTM encoder-decoder with bilinear ("general")
// attention, input feeding, and a tanh attentional combination layer.
// Training math runs in 32-bit floats; the same code instantiated on
// double backs the finite-difference gradient oracle.
struct ModelConfig {
  int hidden_size = 512;  // embedding width equals hidden_size
  int num_layers = 2;
  double dropout_prob = 0.3;
  double learning_rate = 2e-4;
  int batch_size = 64;
  int src_vocab_size = 0;
  int tgt_vocab_size = 0;
  int max_decode_length = 64;
  uint64_t seed = 1;
  bool input_feeding = true;

  // Throws ConfigError on nonpositive sizes, dropout outside [0,1) or
  // nonpositive learning rate.
  void validate() const;

  // Small defaults for desk-scale experiments; same rules, scaled sizes.
  static ModelConfig desk();
};

// Fused-gate LSTM weights. Rows of the 4H-high matrices hold the input,
// forget, cell-candidate and output gates in that order.
template <class Scalar>
struct LstmWeights {
  Mat<Scalar> w_in;   // 4H x input_width
  Mat<Scalar> w_rec;  // 4H x H
  Mat<Scalar> bias;   // 4H x 1
};

template <class Scalar>
struct ParamsT {
  Mat<Scalar> src_embed;  // src_vocab x H, one row per token id
  Mat<Scalar> tgt_embed;  // tgt_vocab x H
  std::vector<LstmWeights<Scalar>> enc;
  std::vector<LstmWeights<Scalar>> dec;
  Mat<Scalar> w_att;   // H x H, score = s . (w_att h_j)
  Mat<Scalar> w_comb;  // H x 2H, attentional = tanh(w_comb [c; s])
  Mat<Scalar> w_out;   // tgt_vocab x H, no bias

  // Visits every tensor in a fixed order with a stable name; that order
  // defines initialization draws and checkpoint layout.
  template <class F>
  void for_each_tensor(F&& f) {
    f("src_embed", src_embed);
    f("tgt_embed", tgt_embed);
    for (size_t l = 0; l < enc.size(); ++l) {
      const std::string p = "enc" + std::to_string(l) + ".";
      f(p + "w_in", enc[l].w_in);
      f(p + "w_rec", enc[l].w_rec);
      f(p + "bias", enc[l].bias);
    }
    for (size_t l = 0; l < dec.size(); ++l) {
      const std::string p = "dec" + std::to_string(l) + ".";
      f(p + "w_in", dec[l].w_in);
      f(p + "w_rec", dec[l].w_rec);
      f(p + "bias", dec[l].bias);
    }
    f("w_att", w_att);
    f("w_comb", w_comb);
    f("w_out", w_out);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    const_cast<ParamsT*>(this)->for_each_tensor(
        [&](const std::string& name, Mat<Scalar>& t) { f(name, static_cast<const Mat<Scalar>&>(t)); });
  }
};

using Params = ParamsT<float>;

// Column b of every matrix belongs to batch element b.
template <class Scalar>
struct EncoderOutputT {
  std::vector<Mat<Scalar>> annotations;  // top-layer state per source step, H x B
  std::vector<Mat<Scalar>> h_final;      // per layer, H x B
  std::vector<Mat<Scalar>> c_final;      // per layer, H x B
  Mat<Scalar> valid;                     // T_src x B, 1 where the position is real
};

template <class Scalar>
struct DecoderStateT {
  std::vector<Mat<Scalar>> h;  // per layer, H x B
  std::vector<Mat<Scalar>> c;  // per layer, H x B
  Mat<Scalar> attentional;     // previous attentional vector, H x B
  int step = 0;
};

template <class Scalar>
struct AttentionResult {
  Mat<Scalar> context;  // H x B
  Mat<Scalar> weights;  // T_src x B, zero on masked positions
};

// Padded id batch with teacher-forcing views of the target side.
struct Batch {
  MatI src;       // T_src x B, <blank> padded
  MatI tgt_in;    // (T_tgt + 1) x B, row 0 is <s>
  MatI tgt_gold;  // (T_tgt + 1) x B, ends with </s> then padding
  std::vector<int> src_len;
  std::vector<int> tgt_len;  // gold tokens scored per column = tgt_len + 1

  int size() const { return static_cast<int>(src.cols()); }
};

// Pads raw id sequences into a batch. Sources must be nonempty; targets
// are given without <s>/</s>.
Batch make_batch(const std::vector<std::vector<int>>& src,
                 const std::vector<std::vector<int>>& tgt);

struct LossResult {
  double loss = 0.0;      // mean over sentences of summed token NLL
  double loss_sum = 0.0;  // total NLL over all scored tokens
  long long token_count = 0;

  double per_token() const { return token_count ? loss_sum / token_count : 0.0; }
};

// Seeded uniform [-0.1, 0.1] weights, zero biases.
template <class Scalar>
ParamsT<Scalar> init_params(const ModelConfig& config);

template <class Scalar>
EncoderOutputT<Scalar> encode(const ModelConfig& config, const ParamsT<Scalar>& params,
                              const MatI& src, const std::vector<int>& src_len);

template <class Scalar>
AttentionResult<Scalar> attend(const ParamsT<Scalar>& params, const Mat<Scalar>& decoder_top,
                               const EncoderOutputT<Scalar>& enc_out);

template <class Scalar>
DecoderStateT<Scalar> initial_decoder_state(const EncoderOutputT<Scalar>& enc_out);

// One teacher-forced / decoding step: embeds prev tokens, advances the
// stacked cells, attends, combines. Returns logits (tgt_vocab x B).
template <class Scalar>
Mat<Scalar> decode_step(const ModelConfig& config, const ParamsT<Scalar>& params,
                        DecoderStateT<Scalar>& state, const std::vector<int>& prev_ids,
                        const EncoderOutputT<Scalar>& enc_out);

// Teacher-forced loss over a batch. Dropout (inverted, on non-recurrent
// connections) is applied only when dropout_on; masks derive from seed.
template <class Scalar>
LossResult batch_loss(const ModelConfig& config, const ParamsT<Scalar>& params, const Batch& batch,
                      bool dropout_on, uint64_t seed);

// Loss plus exact analytic gradients of `loss` for every tensor.
template <class Scalar>
LossResult batch_loss_and_grad(const ModelConfig& config, const ParamsT<Scalar>& params,
                               const Batch& batch, bool dropout_on, uint64_t seed,
                               ParamsT<Scalar>& grads);

// Gradients of batch_loss with dropout off.
template <class Scalar>
ParamsT<Scalar> gradients(const ModelConfig& config, const ParamsT<Scalar>& params,
                          const Batch& batch);

// Zero-filled tensor set with the same shapes.
template <class Scalar>
ParamsT<Scalar> zeros_like(const ParamsT<Scalar>& params);

}  // namespace nmt
