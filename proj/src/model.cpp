#include "nmt/model.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "nmt/error.hpp"
#include "nmt/rng.hpp"
#include "nmt/vocab.hpp"

namespace nmt {

void ModelConfig::validate() const {
  if (hidden_size <= 0) throw ConfigError("hidden_size must be positive");
  if (num_layers < 1) throw ConfigError("num_layers must be at least 1");
  if (dropout_prob < 0.0 || dropout_prob >= 1.0) throw ConfigError("dropout must lie in [0,1)");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (src_vocab_size <= 0 || tgt_vocab_size <= 0)
    throw ConfigError("vocabulary sizes must be positive");
  if (max_decode_length <= 0) throw ConfigError("max_decode_length must be positive");
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.hidden_size = 64;
  c.dropout_prob = 0.1;
  c.learning_rate = 2e-3;
  c.batch_size = 64;
  c.max_decode_length = 32;
  return c;
}

Batch make_batch(const std::vector<std::vector<int>>& src,
                 const std::vector<std::vector<int>>& tgt) {
  if (src.empty() || src.size() != tgt.size())
    throw DataError("make_batch: need equally many source and target sequences");
  const int b_size = static_cast<int>(src.size());
  int max_src = 0, max_tgt = 0;
  for (int b = 0; b < b_size; ++b) {
    if (src[static_cast<size_t>(b)].empty()) throw DataError("make_batch: empty source sequence");
    max_src = std::max(max_src, static_cast<int>(src[static_cast<size_t>(b)].size()));
    max_tgt = std::max(max_tgt, static_cast<int>(tgt[static_cast<size_t>(b)].size()));
  }
  Batch batch;
  batch.src = MatI::Constant(max_src, b_size, Vocabulary::kBlankId);
  batch.tgt_in = MatI::Constant(max_tgt + 1, b_size, Vocabulary::kBlankId);
  batch.tgt_gold = MatI::Constant(max_tgt + 1, b_size, Vocabulary::kBlankId);
  batch.src_len.resize(static_cast<size_t>(b_size));
  batch.tgt_len.resize(static_cast<size_t>(b_size));
  for (int b = 0; b < b_size; ++b) {
    const auto& s = src[static_cast<size_t>(b)];
    const auto& t = tgt[static_cast<size_t>(b)];
    batch.src_len[static_cast<size_t>(b)] = static_cast<int>(s.size());
    batch.tgt_len[static_cast<size_t>(b)] = static_cast<int>(t.size());
    for (size_t i = 0; i < s.size(); ++i) batch.src(static_cast<int>(i), b) = s[i];
    batch.tgt_in(0, b) = Vocabulary::kBosId;
    for (size_t i = 0; i < t.size(); ++i) {
      batch.tgt_in(static_cast<int>(i) + 1, b) = t[i];
      batch.tgt_gold(static_cast<int>(i), b) = t[i];
    }
    batch.tgt_gold(static_cast<int>(t.size()), b) = Vocabulary::kEosId;
  }
  return batch;
}

namespace {

constexpr uint64_t kDropoutStream = 0x64726f70;  // mask draws for one loss call

template <class Scalar>
Mat<Scalar> sigmoid(const Mat<Scalar>& z) {
  return ((-z.array()).exp() + Scalar(1)).inverse().matrix();
}

// Dropout state for one forward pass. Masks are drawn in execution order,
// so loss and loss+grad see identical noise for one seed.
template <class Scalar>
struct DropoutPlan {
  bool on = false;
  double p = 0.0;
  Rng rng{0};

  // Applies a fresh inverted-dropout mask to x in place; returns the mask
  // (empty when dropout is inactive).
  Mat<Scalar> apply(Mat<Scalar>& x) {
    if (!on || p <= 0.0) return Mat<Scalar>();
    Mat<Scalar> mask(x.rows(), x.cols());
    const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - p));
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      for (Eigen::Index i = 0; i < mask.rows(); ++i)
        mask(i, j) = rng.next_unit() < p ? Scalar(0) : keep;
    x = x.cwiseProduct(mask);
    return mask;
  }
};

// One LSTM step for one layer; gate activations kept for the backward
// pass. tanh_c belongs to the unfrozen candidate cell.
template <class Scalar>
struct LstmStepCache {
  Mat<Scalar> x;  // post-dropout input
  Mat<Scalar> drop_mask;
  Mat<Scalar> h_prev, c_prev;
  Mat<Scalar> i, f, g, o, tanh_c;
};

template <class Scalar>
void lstm_step(const LstmWeights<Scalar>& w, const Mat<Scalar>& x, const Mat<Scalar>& h_prev,
               const Mat<Scalar>& c_prev, LstmStepCache<Scalar>& cache, Mat<Scalar>& h_new,
               Mat<Scalar>& c_new) {
  const Eigen::Index h_dim = w.w_rec.cols();
  Mat<Scalar> z = w.w_in * x + w.w_rec * h_prev;
  z.colwise() += w.bias.col(0);
  cache.i = sigmoid<Scalar>(z.middleRows(0, h_dim));
  cache.f = sigmoid<Scalar>(z.middleRows(h_dim, h_dim));
  cache.g = z.middleRows(2 * h_dim, h_dim).array().tanh().matrix();
  cache.o = sigmoid<Scalar>(z.middleRows(3 * h_dim, h_dim));
  c_new = cache.f.cwiseProduct(c_prev) + cache.i.cwiseProduct(cache.g);
  cache.tanh_c = c_new.array().tanh().matrix();
  h_new = cache.o.cwiseProduct(cache.tanh_c);
  cache.h_prev = h_prev;
  cache.c_prev = c_prev;
}

// Backward of lstm_step. dh/dc are deltas of the unfrozen candidate
// outputs; emits dx plus previous-state deltas and accumulates weight
// gradients into gw.
template <class Scalar>
void lstm_step_backward(const LstmWeights<Scalar>& w, const LstmStepCache<Scalar>& cache,
                        const Mat<Scalar>& dh, const Mat<Scalar>& dc, LstmWeights<Scalar>& gw,
                        Mat<Scalar>& dx, Mat<Scalar>& dh_prev, Mat<Scalar>& dc_prev) {
  const Eigen::Index h_dim = w.w_rec.cols();
  using Arr = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Arr d_o = dh.array() * cache.tanh_c.array();
  const Arr dc_all =
      dc.array() + dh.array() * cache.o.array() * (Scalar(1) - cache.tanh_c.array().square());
  const Arr d_i = dc_all * cache.g.array();
  const Arr d_g = dc_all * cache.i.array();
  const Arr d_f = dc_all * cache.c_prev.array();
  dc_prev = (dc_all * cache.f.array()).matrix();

  Mat<Scalar> dz(4 * h_dim, dh.cols());
  dz.middleRows(0, h_dim) = (d_i * cache.i.array() * (Scalar(1) - cache.i.array())).matrix();
  dz.middleRows(h_dim, h_dim) = (d_f * cache.f.array() * (Scalar(1) - cache.f.array())).matrix();
  dz.middleRows(2 * h_dim, h_dim) = (d_g * (Scalar(1) - cache.g.array().square())).matrix();
  dz.middleRows(3 * h_dim, h_dim) = (d_o * cache.o.array() * (Scalar(1) - cache.o.array())).matrix();

  gw.w_in.noalias() += dz * cache.x.transpose();
  gw.w_rec.noalias() += dz * cache.h_prev.transpose();
  gw.bias.col(0) += dz.rowwise().sum();
  dx.noalias() = w.w_in.transpose() * dz;
  dh_prev.noalias() = w.w_rec.transpose() * dz;
}

template <class Scalar>
struct EncoderCache {
  std::vector<std::vector<LstmStepCache<Scalar>>> steps;  // [t][layer]
  EncoderOutputT<Scalar> out;
};

template <class Scalar>
Mat<Scalar> embed_columns(const Mat<Scalar>& table, const MatI& ids, Eigen::Index row) {
  Mat<Scalar> x(table.cols(), ids.cols());
  for (Eigen::Index b = 0; b < ids.cols(); ++b) x.col(b) = table.row(ids(row, b)).transpose();
  return x;
}

void check_ids(const MatI& ids, int vocab_size, const char* side) {
  if (ids.size() == 0) return;
  if (ids.minCoeff() < 0 || ids.maxCoeff() >= vocab_size)
    throw DataError(std::string(side) + " token id out of vocabulary range");
}

template <class Scalar>
EncoderCache<Scalar> run_encoder(const ModelConfig& config, const ParamsT<Scalar>& params,
                                 const MatI& src, const std::vector<int>& src_len,
                                 DropoutPlan<Scalar>& dropout, bool record) {
  const Eigen::Index b_size = src.cols();
  const Eigen::Index t_src = src.rows();
  const Eigen::Index h_dim = config.hidden_size;
  const int layers = config.num_layers;
  if (b_size == 0 || t_src == 0) throw DataError("encode: empty batch");
  if (static_cast<Eigen::Index>(src_len.size()) != b_size)
    throw DataError("encode: length list does not match batch");
  for (int len : src_len)
    if (len < 1 || len > t_src) throw DataError("encode: zero-length or overlong sequence");
  check_ids(src, config.src_vocab_size, "source");

  EncoderCache<Scalar> cache;
  cache.out.valid = Mat<Scalar>::Zero(t_src, b_size);
  for (Eigen::Index b = 0; b < b_size; ++b)
    for (int t = 0; t < src_len[static_cast<size_t>(b)]; ++t) cache.out.valid(t, b) = Scalar(1);

  std::vector<Mat<Scalar>> h(static_cast<size_t>(layers), Mat<Scalar>::Zero(h_dim, b_size));
  std::vector<Mat<Scalar>> c(static_cast<size_t>(layers), Mat<Scalar>::Zero(h_dim, b_size));
  if (record) cache.steps.resize(static_cast<size_t>(t_src));
  cache.out.annotations.reserve(static_cast<size_t>(t_src));

  std::vector<LstmStepCache<Scalar>> scratch(static_cast<size_t>(layers));
  for (Eigen::Index t = 0; t < t_src; ++t) {
    if (record) cache.steps[static_cast<size_t>(t)].resize(static_cast<size_t>(layers));
    Mat<Scalar> x = embed_columns(params.src_embed, src, t);
    for (int l = 0; l < layers; ++l) {
      LstmStepCache<Scalar>& sc =
          record ? cache.steps[static_cast<size_t>(t)][static_cast<size_t>(l)]
                 : scratch[static_cast<size_t>(l)];
      sc.drop_mask = dropout.apply(x);
      sc.x = x;
      auto& h_l = h[static_cast<size_t>(l)];
      auto& c_l = c[static_cast<size_t>(l)];
      Mat<Scalar> h_new, c_new;
      lstm_step(params.enc[static_cast<size_t>(l)], x, h_l, c_l, sc, h_new, c_new);
      // Finished columns hold their last real state.
      for (Eigen::Index b = 0; b < b_size; ++b) {
        if (cache.out.valid(t, b) == Scalar(0)) {
          h_new.col(b) = h_l.col(b);
          c_new.col(b) = c_l.col(b);
        }
      }
      h_l = std::move(h_new);
      c_l = std::move(c_new);
      x = h_l;
    }
    cache.out.annotations.push_back(h[static_cast<size_t>(layers - 1)]);
  }
  cache.out.h_final = h;
  cache.out.c_final = c;
  return cache;
}

template <class Scalar>
struct AttentionCache {
  Mat<Scalar> alpha;    // T_src x B, zero on masked positions
  Mat<Scalar> context;  // H x B
};

// Bilinear scores of one decoder state against precomputed w_att * h_j,
// masked softmax per column, convex combination of annotations.
template <class Scalar>
AttentionCache<Scalar> run_attention(const Mat<Scalar>& s, const std::vector<Mat<Scalar>>& wh,
                                     const EncoderOutputT<Scalar>& enc) {
  const Eigen::Index t_src = static_cast<Eigen::Index>(enc.annotations.size());
  const Eigen::Index b_size = s.cols();
  Mat<Scalar> scores(t_src, b_size);
  for (Eigen::Index j = 0; j < t_src; ++j)
    scores.row(j) = (s.array() * wh[static_cast<size_t>(j)].array()).colwise().sum().matrix();

  AttentionCache<Scalar> att;
  att.alpha = Mat<Scalar>::Zero(t_src, b_size);
  for (Eigen::Index b = 0; b < b_size; ++b) {
    Scalar max_score = Scalar(0);
    bool any = false;
    for (Eigen::Index j = 0; j < t_src; ++j) {
      if (enc.valid(j, b) == Scalar(0)) continue;
      if (!any || scores(j, b) > max_score) max_score = scores(j, b);
      any = true;
    }
    if (!any) throw DataError("attention: every source position is masked");
    Scalar denom = Scalar(0);
    for (Eigen::Index j = 0; j < t_src; ++j) {
      if (enc.valid(j, b) == Scalar(0)) continue;
      const Scalar e = std::exp(scores(j, b) - max_score);
      att.alpha(j, b) = e;
      denom += e;
    }
    att.alpha.col(b) /= denom;
  }
  att.context = Mat<Scalar>::Zero(s.rows(), b_size);
  for (Eigen::Index j = 0; j < t_src; ++j)
    att.context += enc.annotations[static_cast<size_t>(j)] *
                   att.alpha.row(j).transpose().asDiagonal();
  return att;
}

template <class Scalar>
std::vector<Mat<Scalar>> precompute_wh(const ParamsT<Scalar>& params,
                                       const EncoderOutputT<Scalar>& enc) {
  std::vector<Mat<Scalar>> wh;
  wh.reserve(enc.annotations.size());
  for (const auto& ann : enc.annotations) wh.push_back(params.w_att * ann);
  return wh;
}

template <class Scalar>
struct DecoderStepCache {
  std::vector<LstmStepCache<Scalar>> layers;
  Mat<Scalar> s;          // top state
  Mat<Scalar> alpha;      // T_src x B
  Mat<Scalar> context;    // H x B
  Mat<Scalar> attn;       // tanh output, feeds the next step
  Mat<Scalar> attn_mask;  // dropout mask ahead of the output projection
  Mat<Scalar> softmax;    // V x B
};

template <class Scalar>
struct ForwardCache {
  EncoderCache<Scalar> enc;
  std::vector<Mat<Scalar>> wh;
  std::vector<DecoderStepCache<Scalar>> dec;  // per target step
};

// Teacher-forced forward pass; fills loss and, when fwd is given,
// everything the backward pass needs.
template <class Scalar>
LossResult run_forward(const ModelConfig& config, const ParamsT<Scalar>& params,
                       const Batch& batch, bool dropout_on, uint64_t seed,
                       ForwardCache<Scalar>* fwd) {
  config.validate();
  const Eigen::Index b_size = batch.src.cols();
  if (b_size == 0) throw DataError("batch_loss: empty batch");
  if (batch.tgt_in.cols() != b_size || batch.tgt_gold.cols() != b_size ||
      batch.tgt_in.rows() != batch.tgt_gold.rows() || batch.tgt_in.rows() == 0 ||
      batch.tgt_len.size() != static_cast<size_t>(b_size))
    throw DataError("batch_loss: inconsistent batch tensors");
  check_ids(batch.tgt_in, config.tgt_vocab_size, "target");
  check_ids(batch.tgt_gold, config.tgt_vocab_size, "target");

  const bool record = fwd != nullptr;
  const Eigen::Index h_dim = config.hidden_size;
  const int layers = config.num_layers;

  DropoutPlan<Scalar> dropout;
  dropout.on = dropout_on && config.dropout_prob > 0.0;
  dropout.p = config.dropout_prob;
  dropout.rng = Rng(derive_seed(seed, kDropoutStream));

  ForwardCache<Scalar> local;
  ForwardCache<Scalar>& fc = record ? *fwd : local;
  fc.enc = run_encoder(config, params, batch.src, batch.src_len, dropout, record);
  fc.wh = precompute_wh(params, fc.enc.out);

  std::vector<Mat<Scalar>> h = fc.enc.out.h_final;
  std::vector<Mat<Scalar>> c = fc.enc.out.c_final;
  Mat<Scalar> attn_prev = Mat<Scalar>::Zero(h_dim, b_size);

  const Eigen::Index t_dec = batch.tgt_in.rows();
  if (record) fc.dec.resize(static_cast<size_t>(t_dec));

  LossResult loss;
  DecoderStepCache<Scalar> scratch;
  for (Eigen::Index t = 0; t < t_dec; ++t) {
    DecoderStepCache<Scalar>& dc = record ? fc.dec[static_cast<size_t>(t)] : scratch;
    dc.layers.resize(static_cast<size_t>(layers));

    Mat<Scalar> x;
    if (config.input_feeding) {
      x.resize(2 * h_dim, b_size);
      x.topRows(h_dim) = embed_columns(params.tgt_embed, batch.tgt_in, t);
      x.bottomRows(h_dim) = attn_prev;
    } else {
      x = embed_columns(params.tgt_embed, batch.tgt_in, t);
    }
    for (int l = 0; l < layers; ++l) {
      LstmStepCache<Scalar>& sc = dc.layers[static_cast<size_t>(l)];
      sc.drop_mask = dropout.apply(x);
      sc.x = x;
      Mat<Scalar> h_new, c_new;
      lstm_step(params.dec[static_cast<size_t>(l)], x, h[static_cast<size_t>(l)],
                c[static_cast<size_t>(l)], sc, h_new, c_new);
      h[static_cast<size_t>(l)] = std::move(h_new);
      c[static_cast<size_t>(l)] = std::move(c_new);
      x = h[static_cast<size_t>(l)];
    }
    dc.s = h[static_cast<size_t>(layers - 1)];

    AttentionCache<Scalar> att = run_attention(dc.s, fc.wh, fc.enc.out);
    dc.alpha = std::move(att.alpha);
    dc.context = std::move(att.context);

    Mat<Scalar> comb_in(2 * h_dim, b_size);
    comb_in.topRows(h_dim) = dc.context;
    comb_in.bottomRows(h_dim) = dc.s;
    dc.attn = (params.w_comb * comb_in).array().tanh().matrix();

    Mat<Scalar> attn_out = dc.attn;
    dc.attn_mask = dropout.apply(attn_out);
    Mat<Scalar> logits = params.w_out * attn_out;

    // Column-wise softmax; the log runs in double for loss precision.
    dc.softmax.resize(logits.rows(), b_size);
    for (Eigen::Index b = 0; b < b_size; ++b) {
      const Scalar max_logit = logits.col(b).maxCoeff();
      Vec<Scalar> e = (logits.col(b).array() - max_logit).exp().matrix();
      const Scalar denom = e.sum();
      dc.softmax.col(b) = e / denom;
      if (t < batch.tgt_len[static_cast<size_t>(b)] + 1) {
        const int gold = batch.tgt_gold(t, b);
        loss.loss_sum += -(static_cast<double>(logits(gold, b)) - static_cast<double>(max_logit) -
                           std::log(static_cast<double>(denom)));
        ++loss.token_count;
      }
    }
    attn_prev = dc.attn;
  }
  loss.loss = loss.loss_sum / static_cast<double>(b_size);
  return loss;
}

template <class Scalar>
void accumulate_embedding_grad(Mat<Scalar>& table_grad, const MatI& ids, Eigen::Index row,
                               const Mat<Scalar>& dx) {
  for (Eigen::Index b = 0; b < dx.cols(); ++b)
    table_grad.row(ids(row, b)) += dx.col(b).transpose();
}

template <class Scalar>
void run_backward(const ModelConfig& config, const ParamsT<Scalar>& params, const Batch& batch,
                  const ForwardCache<Scalar>& fc, ParamsT<Scalar>& grads) {
  const Eigen::Index b_size = batch.src.cols();
  const Eigen::Index h_dim = config.hidden_size;
  const int layers = config.num_layers;
  const Eigen::Index t_dec = batch.tgt_in.rows();
  const Eigen::Index t_src = batch.src.rows();
  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(b_size);

  std::vector<Mat<Scalar>> dann(static_cast<size_t>(t_src), Mat<Scalar>::Zero(h_dim, b_size));
  std::vector<Mat<Scalar>> dh(static_cast<size_t>(layers), Mat<Scalar>::Zero(h_dim, b_size));
  std::vector<Mat<Scalar>> dc(static_cast<size_t>(layers), Mat<Scalar>::Zero(h_dim, b_size));
  Mat<Scalar> dattn_feed = Mat<Scalar>::Zero(h_dim, b_size);

  for (Eigen::Index t = t_dec - 1; t >= 0; --t) {
    const DecoderStepCache<Scalar>& dcache = fc.dec[static_cast<size_t>(t)];

    // d loss / d logits = (softmax - onehot) / B on scored positions.
    Mat<Scalar> dlogits = Mat<Scalar>::Zero(config.tgt_vocab_size, b_size);
    for (Eigen::Index b = 0; b < b_size; ++b) {
      if (t >= batch.tgt_len[static_cast<size_t>(b)] + 1) continue;
      dlogits.col(b) = dcache.softmax.col(b) * inv_batch;
      dlogits(batch.tgt_gold(t, b), b) -= inv_batch;
    }

    Mat<Scalar> attn_out =
        dcache.attn_mask.size() ? dcache.attn.cwiseProduct(dcache.attn_mask) : dcache.attn;
    grads.w_out.noalias() += dlogits * attn_out.transpose();
    Mat<Scalar> dattn_out = params.w_out.transpose() * dlogits;
    if (dcache.attn_mask.size()) dattn_out = dattn_out.cwiseProduct(dcache.attn_mask);
    Mat<Scalar> dattn = dattn_out + dattn_feed;

    Mat<Scalar> dpre =
        dattn.cwiseProduct((Scalar(1) - dcache.attn.array().square()).matrix());
    Mat<Scalar> comb_in(2 * h_dim, b_size);
    comb_in.topRows(h_dim) = dcache.context;
    comb_in.bottomRows(h_dim) = dcache.s;
    grads.w_comb.noalias() += dpre * comb_in.transpose();
    Mat<Scalar> dcomb = params.w_comb.transpose() * dpre;
    Mat<Scalar> dcontext = dcomb.topRows(h_dim);
    Mat<Scalar> ds = dcomb.bottomRows(h_dim);

    // Attention backward: context combination, softmax, bilinear score.
    Mat<Scalar> dalpha(t_src, b_size);
    for (Eigen::Index j = 0; j < t_src; ++j) {
      const Mat<Scalar>& ann = fc.enc.out.annotations[static_cast<size_t>(j)];
      dalpha.row(j) = (dcontext.array() * ann.array()).colwise().sum().matrix();
      dann[static_cast<size_t>(j)] += dcontext * dcache.alpha.row(j).transpose().asDiagonal();
    }
    Mat<Scalar> colsum =
        (dcache.alpha.array() * dalpha.array()).colwise().sum().matrix();  // 1 x B
    Mat<Scalar> dscore =
        (dcache.alpha.array() * (dalpha.array().rowwise() - colsum.row(0).array())).matrix();
    for (Eigen::Index j = 0; j < t_src; ++j) {
      const Mat<Scalar>& ann = fc.enc.out.annotations[static_cast<size_t>(j)];
      Mat<Scalar> dwh = dcache.s * dscore.row(j).transpose().asDiagonal();
      ds += fc.wh[static_cast<size_t>(j)] * dscore.row(j).transpose().asDiagonal();
      grads.w_att.noalias() += dwh * ann.transpose();
      dann[static_cast<size_t>(j)].noalias() += params.w_att.transpose() * dwh;
    }

    dh[static_cast<size_t>(layers - 1)] += ds;

    // Down the decoder stack; no freezing on this side.
    Mat<Scalar> dx;
    for (int l = layers - 1; l >= 0; --l) {
      const LstmStepCache<Scalar>& sc = dcache.layers[static_cast<size_t>(l)];
      Mat<Scalar> dh_prev, dc_prev;
      lstm_step_backward(params.dec[static_cast<size_t>(l)], sc, dh[static_cast<size_t>(l)],
                         dc[static_cast<size_t>(l)], grads.dec[static_cast<size_t>(l)], dx,
                         dh_prev, dc_prev);
      if (sc.drop_mask.size()) dx = dx.cwiseProduct(sc.drop_mask);
      dh[static_cast<size_t>(l)] = std::move(dh_prev);
      dc[static_cast<size_t>(l)] = std::move(dc_prev);
      if (l > 0) dh[static_cast<size_t>(l - 1)] += dx;
    }
    if (config.input_feeding) {
      accumulate_embedding_grad(grads.tgt_embed, batch.tgt_in, t,
                                Mat<Scalar>(dx.topRows(h_dim)));
      dattn_feed = dx.bottomRows(h_dim);
    } else {
      accumulate_embedding_grad(grads.tgt_embed, batch.tgt_in, t, dx);
      dattn_feed.setZero();
    }
  }
  // dh/dc now sit on the encoder final states; dattn_feed dies on the
  // constant zero initial attentional vector.

  for (Eigen::Index t = t_src - 1; t >= 0; --t) {
    dh[static_cast<size_t>(layers - 1)] += dann[static_cast<size_t>(t)];
    Mat<Scalar> dx;
    for (int l = layers - 1; l >= 0; --l) {
      const LstmStepCache<Scalar>& sc =
          fc.enc.steps[static_cast<size_t>(t)][static_cast<size_t>(l)];
      // Frozen columns pass their deltas straight through to t-1.
      Mat<Scalar> dh_cell = dh[static_cast<size_t>(l)];
      Mat<Scalar> dc_cell = dc[static_cast<size_t>(l)];
      for (Eigen::Index b = 0; b < b_size; ++b) {
        if (fc.enc.out.valid(t, b) == Scalar(0)) {
          dh_cell.col(b).setZero();
          dc_cell.col(b).setZero();
        }
      }
      Mat<Scalar> dh_prev, dc_prev;
      lstm_step_backward(params.enc[static_cast<size_t>(l)], sc, dh_cell, dc_cell,
                         grads.enc[static_cast<size_t>(l)], dx, dh_prev, dc_prev);
      if (sc.drop_mask.size()) dx = dx.cwiseProduct(sc.drop_mask);
      for (Eigen::Index b = 0; b < b_size; ++b) {
        if (fc.enc.out.valid(t, b) == Scalar(0)) {
          dh_prev.col(b) += dh[static_cast<size_t>(l)].col(b);
          dc_prev.col(b) += dc[static_cast<size_t>(l)].col(b);
        }
      }
      dh[static_cast<size_t>(l)] = std::move(dh_prev);
      dc[static_cast<size_t>(l)] = std::move(dc_prev);
      if (l > 0) dh[static_cast<size_t>(l - 1)] += dx;
    }
    accumulate_embedding_grad(grads.src_embed, batch.src, t, dx);
  }
}

}  // namespace

template <class Scalar>
ParamsT<Scalar> init_params(const ModelConfig& config) {
  config.validate();
  const int h_dim = config.hidden_size;
  ParamsT<Scalar> p;
  p.src_embed.resize(config.src_vocab_size, h_dim);
  p.tgt_embed.resize(config.tgt_vocab_size, h_dim);
  p.enc.resize(static_cast<size_t>(config.num_layers));
  p.dec.resize(static_cast<size_t>(config.num_layers));
  for (int l = 0; l < config.num_layers; ++l) {
    const int dec_in0 = config.input_feeding ? 2 * h_dim : h_dim;
    p.enc[static_cast<size_t>(l)].w_in.resize(4 * h_dim, h_dim);
    p.enc[static_cast<size_t>(l)].w_rec.resize(4 * h_dim, h_dim);
    p.enc[static_cast<size_t>(l)].bias.resize(4 * h_dim, 1);
    p.dec[static_cast<size_t>(l)].w_in.resize(4 * h_dim, l == 0 ? dec_in0 : h_dim);
    p.dec[static_cast<size_t>(l)].w_rec.resize(4 * h_dim, h_dim);
    p.dec[static_cast<size_t>(l)].bias.resize(4 * h_dim, 1);
  }
  p.w_att.resize(h_dim, h_dim);
  p.w_comb.resize(h_dim, 2 * h_dim);
  p.w_out.resize(config.tgt_vocab_size, h_dim);

  Rng rng(config.seed);
  p.for_each_tensor([&](const std::string& name, Mat<Scalar>& t) {
    if (name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0) {
      t.setZero();
      return;
    }
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      for (Eigen::Index i = 0; i < t.rows(); ++i)
        t(i, j) = static_cast<Scalar>(rng.next_real(-0.1, 0.1));
  });
  return p;
}

template <class Scalar>
ParamsT<Scalar> zeros_like(const ParamsT<Scalar>& params) {
  ParamsT<Scalar> z = params;
  z.for_each_tensor([](const std::string&, Mat<Scalar>& t) { t.setZero(); });
  return z;
}

template <class Scalar>
EncoderOutputT<Scalar> encode(const ModelConfig& config, const ParamsT<Scalar>& params,
                              const MatI& src, const std::vector<int>& src_len) {
  DropoutPlan<Scalar> dropout;  // off
  return run_encoder(config, params, src, src_len, dropout, false).out;
}

template <class Scalar>
AttentionResult<Scalar> attend(const ParamsT<Scalar>& params, const Mat<Scalar>& decoder_top,
                               const EncoderOutputT<Scalar>& enc_out) {
  const std::vector<Mat<Scalar>> wh = precompute_wh(params, enc_out);
  AttentionCache<Scalar> att = run_attention(decoder_top, wh, enc_out);
  return {std::move(att.context), std::move(att.alpha)};
}

template <class Scalar>
DecoderStateT<Scalar> initial_decoder_state(const EncoderOutputT<Scalar>& enc_out) {
  DecoderStateT<Scalar> state;
  state.h = enc_out.h_final;
  state.c = enc_out.c_final;
  state.attentional =
      Mat<Scalar>::Zero(enc_out.h_final.front().rows(), enc_out.h_final.front().cols());
  state.step = 0;
  return state;
}

template <class Scalar>
Mat<Scalar> decode_step(const ModelConfig& config, const ParamsT<Scalar>& params,
                        DecoderStateT<Scalar>& state, const std::vector<int>& prev_ids,
                        const EncoderOutputT<Scalar>& enc_out) {
  const Eigen::Index b_size = state.h.front().cols();
  const Eigen::Index h_dim = config.hidden_size;
  if (static_cast<Eigen::Index>(prev_ids.size()) != b_size)
    throw DataError("decode_step: wrong number of previous tokens");
  MatI ids(1, b_size);
  for (Eigen::Index b = 0; b < b_size; ++b) ids(0, b) = prev_ids[static_cast<size_t>(b)];
  check_ids(ids, config.tgt_vocab_size, "target");

  Mat<Scalar> x;
  if (config.input_feeding) {
    x.resize(2 * h_dim, b_size);
    x.topRows(h_dim) = embed_columns(params.tgt_embed, ids, 0);
    x.bottomRows(h_dim) = state.attentional;
  } else {
    x = embed_columns(params.tgt_embed, ids, 0);
  }
  LstmStepCache<Scalar> scratch;
  for (int l = 0; l < config.num_layers; ++l) {
    Mat<Scalar> h_new, c_new;
    lstm_step(params.dec[static_cast<size_t>(l)], x, state.h[static_cast<size_t>(l)],
              state.c[static_cast<size_t>(l)], scratch, h_new, c_new);
    state.h[static_cast<size_t>(l)] = std::move(h_new);
    state.c[static_cast<size_t>(l)] = std::move(c_new);
    x = state.h[static_cast<size_t>(l)];
  }
  const Mat<Scalar>& s = state.h[static_cast<size_t>(config.num_layers - 1)];
  AttentionResult<Scalar> att = attend(params, s, enc_out);
  Mat<Scalar> comb_in(2 * h_dim, b_size);
  comb_in.topRows(h_dim) = att.context;
  comb_in.bottomRows(h_dim) = s;
  state.attentional = (params.w_comb * comb_in).array().tanh().matrix();
  ++state.step;
  return params.w_out * state.attentional;
}

template <class Scalar>
LossResult batch_loss(const ModelConfig& config, const ParamsT<Scalar>& params, const Batch& batch,
                      bool dropout_on, uint64_t seed) {
  return run_forward<Scalar>(config, params, batch, dropout_on, seed, nullptr);
}

template <class Scalar>
LossResult batch_loss_and_grad(const ModelConfig& config, const ParamsT<Scalar>& params,
                               const Batch& batch, bool dropout_on, uint64_t seed,
                               ParamsT<Scalar>& grads) {
  ForwardCache<Scalar> cache;
  LossResult loss = run_forward(config, params, batch, dropout_on, seed, &cache);
  grads = zeros_like(params);
  run_backward(config, params, batch, cache, grads);
  return loss;
}

template <class Scalar>
ParamsT<Scalar> gradients(const ModelConfig& config, const ParamsT<Scalar>& params,
                          const Batch& batch) {
  ParamsT<Scalar> grads;
  batch_loss_and_grad(config, params, batch, false, 0, grads);
  return grads;
}

template ParamsT<float> init_params<float>(const ModelConfig&);
template ParamsT<double> init_params<double>(const ModelConfig&);
template ParamsT<float> zeros_like<float>(const ParamsT<float>&);
template ParamsT<double> zeros_like<double>(const ParamsT<double>&);
template EncoderOutputT<float> encode<float>(const ModelConfig&, const ParamsT<float>&, const MatI&,
                                             const std::vector<int>&);
template EncoderOutputT<double> encode<double>(const ModelConfig&, const ParamsT<double>&,
                                               const MatI&, const std::vector<int>&);
template AttentionResult<float> attend<float>(const ParamsT<float>&, const Mat<float>&,
                                              const EncoderOutputT<float>&);
template AttentionResult<double> attend<double>(const ParamsT<double>&, const Mat<double>&,
                                                const EncoderOutputT<double>&);
template DecoderStateT<float> initial_decoder_state<float>(const EncoderOutputT<float>&);
template DecoderStateT<double> initial_decoder_state<double>(const EncoderOutputT<double>&);
template Mat<float> decode_step<float>(const ModelConfig&, const ParamsT<float>&,
                                       DecoderStateT<float>&, const std::vector<int>&,
                                       const EncoderOutputT<float>&);
template Mat<double> decode_step<double>(const ModelConfig&, const ParamsT<double>&,
                                         DecoderStateT<double>&, const std::vector<int>&,
                                         const EncoderOutputT<double>&);
template LossResult batch_loss<float>(const ModelConfig&, const ParamsT<float>&, const Batch&, bool,
                                      uint64_t);
template LossResult batch_loss<double>(const ModelConfig&, const ParamsT<double>&, const Batch&,
                                       bool, uint64_t);
template LossResult batch_loss_and_grad<float>(const ModelConfig&, const ParamsT<float>&,
                                               const Batch&, bool, uint64_t, ParamsT<float>&);
template LossResult batch_loss_and_grad<double>(const ModelConfig&, const ParamsT<double>&,
                                                const Batch&, bool, uint64_t, ParamsT<double>&);
template ParamsT<float> gradients<float>(const ModelConfig&, const ParamsT<float>&, const Batch&);
template ParamsT<double> gradients<double>(const ModelConfig&, const ParamsT<double>&,
                                           const Batch&);

}  // namespace nmt
