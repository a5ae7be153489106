#include "nmt/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "nmt/error.hpp"
#include "nmt/rng.hpp"

namespace nmt {

namespace {

constexpr char kMagic[4] = {'N', 'M', 'T', '1'};
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
constexpr uint64_t kExtendStream = 0xe7e4d;

void require(bool ok, const std::string& what) {
  if (!ok) throw CheckpointError(what);
}

bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
  return a.hidden_size == b.hidden_size && a.num_layers == b.num_layers &&
         a.src_vocab_size == b.src_vocab_size && a.tgt_vocab_size == b.tgt_vocab_size &&
         a.input_feeding == b.input_feeding;
}

template <class T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const char* what) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw CheckpointError(std::string("corrupt checkpoint: truncated ") + what);
  return value;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const char* what) {
  const uint32_t len = read_pod<uint32_t>(in, what);
  if (len > (1u << 24)) throw CheckpointError(std::string("corrupt checkpoint: huge ") + what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw CheckpointError(std::string("corrupt checkpoint: truncated ") + what);
  return s;
}

void write_tensor(std::ostream& out, const std::string& name, const MatF& t) {
  write_string(out, name);
  write_pod<uint32_t>(out, static_cast<uint32_t>(t.rows()));
  write_pod<uint32_t>(out, static_cast<uint32_t>(t.cols()));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.size())));
}

void write_vocab(std::ostream& out, const Vocabulary& vocab) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(vocab.size()));
  for (const auto& tok : vocab.tokens()) write_string(out, tok);
}

Vocabulary read_vocab(std::istream& in) {
  const uint32_t count = read_pod<uint32_t>(in, "vocabulary");
  require(count >= static_cast<uint32_t>(Vocabulary::kNumSpecials),
          "corrupt checkpoint: vocabulary misses the reserved tokens");
  Vocabulary vocab;
  for (uint32_t i = 0; i < count; ++i) {
    const std::string tok = read_string(in, "vocabulary token");
    if (i < static_cast<uint32_t>(Vocabulary::kNumSpecials)) {
      require(tok == vocab.token(static_cast<int>(i)),
              "corrupt checkpoint: reserved tokens out of order");
    } else {
      vocab.add(tok);
    }
  }
  require(vocab.size() == static_cast<int>(count),
          "corrupt checkpoint: duplicate vocabulary entries");
  return vocab;
}

}  // namespace

Checkpoint init_model(const ModelConfig& config, const Vocabulary& src_vocab,
                      const Vocabulary& tgt_vocab) {
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.config.src_vocab_size = src_vocab.size();
  ckpt.config.tgt_vocab_size = tgt_vocab.size();
  ckpt.config.validate();
  ckpt.src_vocab = src_vocab;
  ckpt.tgt_vocab = tgt_vocab;
  ckpt.params = init_params<float>(ckpt.config);
  ckpt.m = zeros_like(ckpt.params);
  ckpt.v = zeros_like(ckpt.params);
  ckpt.step = 0;
  return ckpt;
}

void adam_step(Checkpoint& ckpt, const Params& grads) {
  const uint64_t t = ckpt.step + 1;
  const float corr1 = static_cast<float>(1.0 - std::pow(kBeta1, static_cast<double>(t)));
  const float corr2 = static_cast<float>(1.0 - std::pow(kBeta2, static_cast<double>(t)));
  const float lr = static_cast<float>(ckpt.config.learning_rate);

  std::vector<MatF*> ps, ms, vs;
  std::vector<const MatF*> gs;
  ckpt.params.for_each_tensor([&](const std::string&, MatF& x) { ps.push_back(&x); });
  ckpt.m.for_each_tensor([&](const std::string&, MatF& x) { ms.push_back(&x); });
  ckpt.v.for_each_tensor([&](const std::string&, MatF& x) { vs.push_back(&x); });
  grads.for_each_tensor([&](const std::string&, const MatF& x) { gs.push_back(&x); });
  require(ps.size() == gs.size() && ms.size() == gs.size() && vs.size() == gs.size(),
          "adam_step: gradient tensor set does not match the model");
  for (size_t i = 0; i < ps.size(); ++i) {
    MatF& p = *ps[i];
    MatF& m = *ms[i];
    MatF& v = *vs[i];
    const MatF& g = *gs[i];
    require(p.rows() == g.rows() && p.cols() == g.cols(), "adam_step: gradient shape mismatch");
    m.array() =
        static_cast<float>(kBeta1) * m.array() + static_cast<float>(1.0 - kBeta1) * g.array();
    v.array() = static_cast<float>(kBeta2) * v.array() +
                static_cast<float>(1.0 - kBeta2) * g.array().square();
    p.array() -=
        lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + static_cast<float>(kEps));
  }
  ckpt.step = t;
}

double clip_global_norm(Params& grads, double max_norm) {
  double sum_sq = 0.0;
  grads.for_each_tensor([&](const std::string&, const MatF& g) {
    sum_sq += static_cast<double>(g.cast<double>().squaredNorm());
  });
  const double norm = std::sqrt(sum_sq);
  if (norm > max_norm && norm > 0.0) {
    const float scale = static_cast<float>(max_norm / norm);
    grads.for_each_tensor([&](const std::string&, MatF& g) { g *= scale; });
  }
  return norm;
}

Checkpoint average_checkpoints(const std::vector<Checkpoint>& snapshots,
                               const AveragingWindow& window) {
  require(!snapshots.empty(), "average_checkpoints: no snapshots");
  require(window.k >= 1, "average_checkpoints: window must hold at least one checkpoint");

  std::vector<size_t> order(snapshots.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return snapshots[a].step < snapshots[b].step; });
  if (window.kind == AveragingWindow::Kind::kEndingAt) {
    while (!order.empty() && snapshots[order.back()].step > window.end_step) order.pop_back();
    require(!order.empty(), "average_checkpoints: no snapshot at or below the window end");
  }
  if (order.size() > static_cast<size_t>(window.k))
    order.erase(order.begin(), order.end() - window.k);

  const Checkpoint& first = snapshots[order.front()];
  for (size_t idx : order) {
    require(same_architecture(snapshots[idx].config, first.config),
            "average_checkpoints: mismatched configurations");
    require(snapshots[idx].src_vocab == first.src_vocab &&
                snapshots[idx].tgt_vocab == first.tgt_vocab,
            "average_checkpoints: mismatched vocabularies");
  }

  Checkpoint avg = first;
  std::vector<MatD> sums;
  avg.params.for_each_tensor([&](const std::string&, const MatF& t) {
    sums.push_back(MatD::Zero(t.rows(), t.cols()));
  });
  for (size_t idx : order) {
    size_t i = 0;
    snapshots[idx].params.for_each_tensor([&](const std::string&, const MatF& t) {
      require(sums[i].rows() == t.rows() && sums[i].cols() == t.cols(),
              "average_checkpoints: mismatched tensor shapes");
      sums[i] += t.cast<double>();
      ++i;
    });
  }
  const double inv = 1.0 / static_cast<double>(order.size());
  size_t i = 0;
  avg.params.for_each_tensor([&](const std::string&, MatF& t) {
    t = (sums[i] * inv).cast<float>();
    ++i;
  });
  avg.m = zeros_like(avg.params);
  avg.v = zeros_like(avg.params);
  avg.step = snapshots[order.back()].step;
  return avg;
}

Checkpoint extend_checkpoint_vocab(const Checkpoint& ckpt, const Vocabulary& new_src,
                                   const Vocabulary& new_tgt, uint64_t seed) {
  require(new_src.extends(ckpt.src_vocab) && new_tgt.extends(ckpt.tgt_vocab),
          "extend_checkpoint_vocab: new vocabularies must extend the old ones in place");
  Checkpoint out = ckpt;
  out.src_vocab = new_src;
  out.tgt_vocab = new_tgt;
  out.config.src_vocab_size = new_src.size();
  out.config.tgt_vocab_size = new_tgt.size();

  Rng rng(derive_seed(seed, kExtendStream));
  auto grow = [&](MatF& t, MatF& m, MatF& v, int new_rows) {
    const Eigen::Index old_rows = t.rows();
    if (new_rows == old_rows) return;
    t.conservativeResize(new_rows, Eigen::NoChange);
    m.conservativeResize(new_rows, Eigen::NoChange);
    v.conservativeResize(new_rows, Eigen::NoChange);
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      for (Eigen::Index i = old_rows; i < new_rows; ++i)
        t(i, j) = static_cast<float>(rng.next_real(-0.1, 0.1));
    m.bottomRows(new_rows - old_rows).setZero();
    v.bottomRows(new_rows - old_rows).setZero();
  };
  grow(out.params.src_embed, out.m.src_embed, out.v.src_embed, new_src.size());
  grow(out.params.tgt_embed, out.m.tgt_embed, out.v.tgt_embed, new_tgt.size());
  grow(out.params.w_out, out.m.w_out, out.v.w_out, new_tgt.size());
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(out, Checkpoint::kFormatVersion);
  const ModelConfig& c = ckpt.config;
  write_pod<int32_t>(out, c.hidden_size);
  write_pod<int32_t>(out, c.num_layers);
  write_pod<double>(out, c.dropout_prob);
  write_pod<double>(out, c.learning_rate);
  write_pod<int32_t>(out, c.batch_size);
  write_pod<int32_t>(out, c.src_vocab_size);
  write_pod<int32_t>(out, c.tgt_vocab_size);
  write_pod<int32_t>(out, c.max_decode_length);
  write_pod<uint64_t>(out, c.seed);
  write_pod<uint8_t>(out, c.input_feeding ? 1 : 0);
  write_pod<uint64_t>(out, ckpt.step);
  write_vocab(out, ckpt.src_vocab);
  write_vocab(out, ckpt.tgt_vocab);

  uint32_t tensor_count = 0;
  ckpt.params.for_each_tensor([&](const std::string&, const MatF&) { tensor_count += 3; });
  write_pod<uint32_t>(out, tensor_count);
  ckpt.params.for_each_tensor(
      [&](const std::string& name, const MatF& t) { write_tensor(out, name, t); });
  ckpt.m.for_each_tensor(
      [&](const std::string& name, const MatF& t) { write_tensor(out, "m." + name, t); });
  ckpt.v.for_each_tensor(
      [&](const std::string& name, const MatF& t) { write_tensor(out, "v." + name, t); });
  if (!out) throw CheckpointError("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file: " + path);
  const uint32_t version = read_pod<uint32_t>(in, "version");
  if (version != Checkpoint::kFormatVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " in " +
                          path);

  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  c.hidden_size = read_pod<int32_t>(in, "config");
  c.num_layers = read_pod<int32_t>(in, "config");
  c.dropout_prob = read_pod<double>(in, "config");
  c.learning_rate = read_pod<double>(in, "config");
  c.batch_size = read_pod<int32_t>(in, "config");
  c.src_vocab_size = read_pod<int32_t>(in, "config");
  c.tgt_vocab_size = read_pod<int32_t>(in, "config");
  c.max_decode_length = read_pod<int32_t>(in, "config");
  c.seed = read_pod<uint64_t>(in, "config");
  c.input_feeding = read_pod<uint8_t>(in, "config") != 0;
  c.validate();
  ckpt.step = read_pod<uint64_t>(in, "step");
  ckpt.src_vocab = read_vocab(in);
  ckpt.tgt_vocab = read_vocab(in);
  require(ckpt.src_vocab.size() == c.src_vocab_size && ckpt.tgt_vocab.size() == c.tgt_vocab_size,
          "corrupt checkpoint: vocabulary sizes disagree with the configuration");

  const uint32_t tensor_count = read_pod<uint32_t>(in, "tensor count");
  std::map<std::string, MatF> tensors;
  for (uint32_t i = 0; i < tensor_count; ++i) {
    const std::string name = read_string(in, "tensor name");
    const uint32_t rows = read_pod<uint32_t>(in, "tensor shape");
    const uint32_t cols = read_pod<uint32_t>(in, "tensor shape");
    MatF t(rows, cols);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.size())));
    if (!in) throw CheckpointError("corrupt checkpoint: truncated tensor " + name);
    if (!tensors.emplace(name, std::move(t)).second)
      throw CheckpointError("corrupt checkpoint: duplicate tensor " + name);
  }

  ckpt.params = init_params<float>(c);  // shapes only; every value is replaced
  ckpt.m = zeros_like(ckpt.params);
  ckpt.v = zeros_like(ckpt.params);
  auto assign = [&](const std::string& name, MatF& dst) {
    auto it = tensors.find(name);
    require(it != tensors.end(), "corrupt checkpoint: missing tensor " + name);
    require(it->second.rows() == dst.rows() && it->second.cols() == dst.cols(),
            "corrupt checkpoint: bad shape for tensor " + name);
    dst = std::move(it->second);
  };
  ckpt.params.for_each_tensor([&](const std::string& name, MatF& t) { assign(name, t); });
  ckpt.m.for_each_tensor([&](const std::string& name, MatF& t) { assign("m." + name, t); });
  ckpt.v.for_each_tensor([&](const std::string& name, MatF& t) { assign("v." + name, t); });
  return ckpt;
}

std::vector<Sentence> greedy_decode_batch(const Checkpoint& ckpt,
                                          const std::vector<Sentence>& sources,
                                          int max_decode_length) {
  if (sources.empty()) throw DataError("greedy_decode: no sources");
  if (max_decode_length <= 0) throw ConfigError("greedy_decode: nonpositive length cap");
  const int b_size = static_cast<int>(sources.size());
  int max_src = 0;
  for (const auto& s : sources) {
    if (s.empty()) throw DataError("greedy_decode: empty source sentence");
    max_src = std::max(max_src, static_cast<int>(s.size()));
  }
  MatI src = MatI::Constant(max_src, b_size, Vocabulary::kBlankId);
  std::vector<int> src_len(static_cast<size_t>(b_size));
  for (int b = 0; b < b_size; ++b) {
    const auto& s = sources[static_cast<size_t>(b)];
    src_len[static_cast<size_t>(b)] = static_cast<int>(s.size());
    for (size_t i = 0; i < s.size(); ++i)
      src(static_cast<int>(i), b) = ckpt.src_vocab.id(s[i]);
  }

  EncoderOutputT<float> enc = encode(ckpt.config, ckpt.params, src, src_len);
  DecoderStateT<float> state = initial_decoder_state(enc);
  std::vector<int> prev(static_cast<size_t>(b_size), Vocabulary::kBosId);
  std::vector<bool> done(static_cast<size_t>(b_size), false);
  std::vector<std::vector<int>> out_ids(static_cast<size_t>(b_size));

  for (int t = 0; t < max_decode_length; ++t) {
    MatF logits = decode_step(ckpt.config, ckpt.params, state, prev, enc);
    bool all_done = true;
    for (int b = 0; b < b_size; ++b) {
      if (done[static_cast<size_t>(b)]) continue;
      int best = 0;
      float best_val = logits(0, b);
      for (int v = 1; v < ckpt.config.tgt_vocab_size; ++v) {
        if (logits(v, b) > best_val) {  // ties keep the lowest id
          best_val = logits(v, b);
          best = v;
        }
      }
      if (best == Vocabulary::kEosId) {
        done[static_cast<size_t>(b)] = true;
      } else {
        out_ids[static_cast<size_t>(b)].push_back(best);
        all_done = false;
      }
      prev[static_cast<size_t>(b)] = best;
    }
    if (all_done) break;
  }

  std::vector<Sentence> out(static_cast<size_t>(b_size));
  for (int b = 0; b < b_size; ++b) {
    for (int id : out_ids[static_cast<size_t>(b)]) {
      const std::string& tok = ckpt.tgt_vocab.token(id);
      if (tok == Vocabulary::kSyn) continue;
      out[static_cast<size_t>(b)].push_back(tok);
    }
  }
  return out;
}

Sentence greedy_decode(const Checkpoint& ckpt, const Sentence& src, int max_decode_length) {
  return greedy_decode_batch(ckpt, {src}, max_decode_length).front();
}

}  // namespace nmt
