#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nmt/checkpoint.hpp"
#include "nmt/error.hpp"

using namespace nmt;

namespace {

namespace fs = std::filesystem;

Vocabulary tiny_vocab(const std::vector<std::string>& extra) {
  std::vector<Sentence> side = {extra};
  return build_vocab(side, 64);
}

Checkpoint tiny_checkpoint(uint64_t seed = 5) {
  ModelConfig config = ModelConfig::desk();
  config.hidden_size = 6;
  config.batch_size = 2;
  config.seed = seed;
  return init_model(config, tiny_vocab({"aa", "bb", "cc"}), tiny_vocab({"xx", "yy"}));
}

bool params_equal(const Params& a, const Params& b) {
  bool equal = true;
  size_t i = 0;
  std::vector<const MatF*> rhs;
  b.for_each_tensor([&](const std::string&, const MatF& t) { rhs.push_back(&t); });
  a.for_each_tensor([&](const std::string&, const MatF& t) {
    if (t != *rhs[i++]) equal = false;
  });
  return equal;
}

void fill_params(Params& params, float value) {
  params.for_each_tensor([&](const std::string&, MatF& t) { t.setConstant(value); });
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "nmt_ckpt_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("checkpoints survive a save/load round trip bit for bit") {
  TempDir dir;
  Checkpoint ckpt = tiny_checkpoint();
  ckpt.step = 1234;
  Params grads = zeros_like(ckpt.params);
  fill_params(grads, 0.25f);
  adam_step(ckpt, grads);  // nonzero moments must round-trip too

  const std::string path = (dir.path / "model.bin").string();
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path);

  CHECK(back.step == ckpt.step);
  CHECK(back.config.hidden_size == 6);
  CHECK(back.config.src_vocab_size == ckpt.config.src_vocab_size);
  CHECK(back.src_vocab.size() == ckpt.src_vocab.size());
  CHECK(back.tgt_vocab.token(5) == ckpt.tgt_vocab.token(5));
  CHECK(params_equal(back.params, ckpt.params));
  CHECK(params_equal(back.m, ckpt.m));
  CHECK(params_equal(back.v, ckpt.v));
}

TEST_CASE("corrupt checkpoint files are rejected") {
  TempDir dir;
  const Checkpoint ckpt = tiny_checkpoint();
  const std::string path = (dir.path / "model.bin").string();
  save_checkpoint(ckpt, path);

  CHECK_THROWS_AS(load_checkpoint((dir.path / "missing.bin").string()), CheckpointError);

  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out((dir.path / "trunc.bin").string(), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint((dir.path / "trunc.bin").string()), CheckpointError);

  {
    std::ofstream out((dir.path / "magic.bin").string(), std::ios::binary);
    out << "NOPE" << std::string(64, '\0');
  }
  CHECK_THROWS_AS(load_checkpoint((dir.path / "magic.bin").string()), CheckpointError);

  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[4] = 9;  // format version field
    std::ofstream out((dir.path / "version.bin").string(), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint((dir.path / "version.bin").string()), CheckpointError);
}

TEST_CASE("adam_step matches the hand-derived first update") {
  Checkpoint ckpt = tiny_checkpoint();
  ckpt.config.learning_rate = 0.5;
  const float before = ckpt.params.w_att(0, 0);
  const float bias_before = ckpt.params.enc[0].bias(3, 0);

  Params grads = zeros_like(ckpt.params);
  fill_params(grads, 1.0f);
  adam_step(ckpt, grads);

  // With fresh moments and g = 1: m_hat = 1, v_hat = 1, so the update is
  // lr / (1 + eps) regardless of the parameter value.
  const double delta = 0.5 / (1.0 + 1e-8);
  CHECK(ckpt.step == 1);
  CHECK(ckpt.params.w_att(0, 0) == doctest::Approx(before - delta).epsilon(1e-6));
  CHECK(ckpt.params.enc[0].bias(3, 0) == doctest::Approx(bias_before - delta).epsilon(1e-6));
  CHECK(ckpt.m.w_att(0, 0) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(ckpt.v.w_att(0, 0) == doctest::Approx(0.001).epsilon(1e-6));

  Params bad = grads;
  bad.w_att.resize(3, 3);
  CHECK_THROWS_AS(adam_step(ckpt, bad), CheckpointError);
}

TEST_CASE("clip_global_norm rescales only oversized gradients") {
  Checkpoint ckpt = tiny_checkpoint();
  Params grads = zeros_like(ckpt.params);
  grads.w_att(0, 0) = 3.0f;
  grads.w_out(0, 0) = 4.0f;  // global norm 5

  Params small = grads;
  CHECK(clip_global_norm(small, 10.0) == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(small.w_att(0, 0) == 3.0f);  // untouched below the threshold

  CHECK(clip_global_norm(grads, 1.0) == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(grads.w_att(0, 0) == doctest::Approx(0.6).epsilon(1e-5));
  CHECK(grads.w_out(0, 0) == doctest::Approx(0.8).epsilon(1e-5));
}

TEST_CASE("average_checkpoints takes an element-wise mean") {
  Checkpoint a = tiny_checkpoint();
  Checkpoint b = tiny_checkpoint();
  fill_params(a.params, 1.0f);
  fill_params(b.params, 3.0f);
  fill_params(a.m, 9.0f);
  a.step = 100;
  b.step = 200;

  const Checkpoint mean = average_checkpoints({a, b}, AveragingWindow::last_k(2));
  CHECK(mean.params.w_att(0, 0) == 2.0f);
  CHECK(mean.params.src_embed(1, 1) == 2.0f);
  CHECK(mean.step == 200);
  CHECK(mean.m.w_att(0, 0) == 0.0f);  // moments do not survive averaging
  CHECK(mean.v.w_att(0, 0) == 0.0f);

  Checkpoint c = tiny_checkpoint();
  fill_params(c.params, 5.0f);
  c.step = 300;
  const Checkpoint m1 = average_checkpoints({b, c}, AveragingWindow::last_k(2));
  CHECK(m1.params.w_out(2, 3) == 4.0f);

  // Order of the snapshot list is irrelevant; steps define the window.
  const Checkpoint m2 = average_checkpoints({c, a, b}, AveragingWindow::last_k(2));
  CHECK(m2.params.w_out(2, 3) == 4.0f);
  CHECK(m2.step == 300);

  const Checkpoint same = average_checkpoints({a, a}, AveragingWindow::last_k(2));
  CHECK(params_equal(same.params, a.params));

  CHECK_THROWS_AS(average_checkpoints({}, AveragingWindow::last_k(2)), CheckpointError);
}

TEST_CASE("ending_at windows select trailing snapshots at or below the step") {
  std::vector<Checkpoint> snaps;
  for (int i = 0; i <= 10; ++i) {
    Checkpoint c = tiny_checkpoint();
    c.step = 100000 + 5000 * static_cast<uint64_t>(i);
    fill_params(c.params, static_cast<float>(i));
    snaps.push_back(std::move(c));
  }
  // Steps 110000..145000 inclusive: snapshot values 2..9, mean 5.5.
  const Checkpoint win = average_checkpoints(snaps, AveragingWindow::ending_at(145000, 8));
  CHECK(win.step == 145000);
  CHECK(win.params.w_att(1, 1) == doctest::Approx(5.5).epsilon(1e-6));

  // A window that is larger than what is available just takes everything
  // at or below end_step.
  const Checkpoint all = average_checkpoints(snaps, AveragingWindow::ending_at(105000, 8));
  CHECK(all.step == 105000);
  CHECK(all.params.w_att(0, 0) == doctest::Approx(0.5).epsilon(1e-6));

  CHECK_THROWS_AS(average_checkpoints(snaps, AveragingWindow::ending_at(99999, 8)),
                  CheckpointError);
}

TEST_CASE("vocabulary extension keeps old rows and old logits bit-identical") {
  Checkpoint ckpt = tiny_checkpoint();
  Params grads = zeros_like(ckpt.params);
  fill_params(grads, 0.5f);
  adam_step(ckpt, grads);

  std::vector<Sentence> grown_src = {{"aa", "bb", "cc", "dd", "ee"}};
  std::vector<Sentence> grown_tgt = {{"xx", "yy", "zz"}};
  const Vocabulary new_src = merge_vocab(ckpt.src_vocab, build_vocab(grown_src, 64));
  const Vocabulary new_tgt = merge_vocab(ckpt.tgt_vocab, build_vocab(grown_tgt, 64));
  const Checkpoint ext = extend_checkpoint_vocab(ckpt, new_src, new_tgt, 99);

  CHECK(ext.config.src_vocab_size == new_src.size());
  CHECK(ext.params.src_embed.rows() == new_src.size());
  CHECK(ext.params.src_embed.topRows(ckpt.params.src_embed.rows()) == ckpt.params.src_embed);
  CHECK(ext.params.w_out.topRows(ckpt.params.w_out.rows()) == ckpt.params.w_out);
  CHECK(ext.m.tgt_embed.topRows(ckpt.m.tgt_embed.rows()) == ckpt.m.tgt_embed);
  CHECK(ext.m.tgt_embed.bottomRows(1).isZero(0.0f));
  CHECK(ext.params.w_att == ckpt.params.w_att);
  CHECK(ext.step == ckpt.step);

  // Logits of every pre-existing token are unchanged on the same input.
  const std::vector<int> prev = {Vocabulary::kBosId, Vocabulary::kBosId};
  const Batch probe = make_batch({{5, 6}, {6, 7}}, {{5}, {6}});
  const auto enc_old = encode(ckpt.config, ckpt.params, probe.src, probe.src_len);
  const auto enc_new = encode(ext.config, ext.params, probe.src, probe.src_len);
  auto st_old = initial_decoder_state(enc_old);
  auto st_new = initial_decoder_state(enc_new);
  const MatF logits_old = decode_step(ckpt.config, ckpt.params, st_old, prev, enc_old);
  const MatF logits_new = decode_step(ext.config, ext.params, st_new, prev, enc_new);
  REQUIRE(logits_new.rows() == new_tgt.size());
  CHECK(logits_new.topRows(logits_old.rows()) == logits_old);

  // Shrinking or reordering is not an extension.
  CHECK_THROWS_AS(extend_checkpoint_vocab(ckpt, ckpt.src_vocab, tiny_vocab({"qq"}), 1),
                  CheckpointError);
}

TEST_CASE("greedy decoding stops at </s> and honours the length cap") {
  // Hand-built checkpoint that emits </s> immediately: positive output
  // gate and cell candidate make every hidden state positive, the
  // combination passes the state through, and only the </s> output row is
  // wired up.
  Checkpoint ckpt = tiny_checkpoint();
  const int h = ckpt.config.hidden_size;
  fill_params(ckpt.params, 0.0f);
  for (auto& layer : ckpt.params.dec) {
    layer.bias.block(0, 0, h, 1).setConstant(100.0f);      // input gate open
    layer.bias.block(2 * h, 0, h, 1).setConstant(100.0f);  // cell candidate high
    layer.bias.block(3 * h, 0, h, 1).setConstant(100.0f);  // output gate open
  }
  ckpt.params.w_comb.rightCols(h).setIdentity();
  ckpt.params.w_out.row(Vocabulary::kEosId).setOnes();

  const Sentence empty = greedy_decode(ckpt, {"aa", "bb"}, 10);
  CHECK(empty.empty());

  // Rewire to a non-special token: decoding now runs to the cap.
  ckpt.params.w_out.row(Vocabulary::kEosId).setZero();
  ckpt.params.w_out.row(5).setOnes();
  const Sentence capped = greedy_decode(ckpt, {"aa"}, 4);
  REQUIRE(capped.size() == 4);
  CHECK(capped[0] == ckpt.tgt_vocab.token(5));

  const auto many = greedy_decode_batch(ckpt, {{"aa"}, {"bb", "cc"}}, 3);
  REQUIRE(many.size() == 2);
  CHECK(many[0].size() == 3);
  CHECK(many[1] == many[0]);
}
