#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nmt/error.hpp"
#include "nmt/model.hpp"
#include "nmt/rng.hpp"
#include "nmt/vocab.hpp"

using namespace nmt;

namespace {

ModelConfig tiny_config() {
  ModelConfig config;
  config.hidden_size = 8;
  config.num_layers = 2;
  config.dropout_prob = 0.0;
  config.batch_size = 4;
  config.src_vocab_size = 9;
  config.tgt_vocab_size = 9;
  config.max_decode_length = 8;
  config.seed = 42;
  return config;
}

Batch mixed_batch() {
  return make_batch({{5, 6, 7, 8}, {6, 5}, {7}}, {{5, 6}, {8}, {6, 7, 5}});
}

MatF random_mat(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  MatF m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = static_cast<float>(rng.next_real(-1.0, 1.0));
  return m;
}

}  // namespace

TEST_CASE("make_batch pads and frames the target side") {
  const Batch batch = make_batch({{5, 6, 7}, {8}}, {{6}, {7, 8}});
  REQUIRE(batch.size() == 2);
  CHECK(batch.src_len == std::vector<int>{3, 1});
  CHECK(batch.tgt_len == std::vector<int>{1, 2});

  CHECK(batch.src(0, 0) == 5);
  CHECK(batch.src(2, 0) == 7);
  CHECK(batch.src(0, 1) == 8);
  CHECK(batch.src(1, 1) == Vocabulary::kBlankId);

  // Teacher forcing: inputs start at <s>, gold is shifted by one and ends
  // with </s>; everything past that is <blank>.
  CHECK(batch.tgt_in.rows() == 3);
  CHECK(batch.tgt_in(0, 0) == Vocabulary::kBosId);
  CHECK(batch.tgt_in(1, 0) == 6);
  CHECK(batch.tgt_in(2, 0) == Vocabulary::kBlankId);
  CHECK(batch.tgt_gold(0, 0) == 6);
  CHECK(batch.tgt_gold(1, 0) == Vocabulary::kEosId);
  CHECK(batch.tgt_gold(2, 0) == Vocabulary::kBlankId);
  CHECK(batch.tgt_in(2, 1) == 8);
  CHECK(batch.tgt_gold(2, 1) == Vocabulary::kEosId);

  CHECK_THROWS_AS(make_batch({}, {}), DataError);
  CHECK_THROWS_AS(make_batch({{5}}, {{5}, {6}}), DataError);
  CHECK_THROWS_AS(make_batch({{5}, {}}, {{5}, {6}}), DataError);
}

TEST_CASE("init_params draws uniform weights and zero biases") {
  const ModelConfig config = tiny_config();
  const Params params = init_params<float>(config);

  CHECK(params.src_embed.rows() == 9);
  CHECK(params.src_embed.cols() == 8);
  CHECK(params.enc.size() == 2);
  CHECK(params.dec.size() == 2);
  CHECK(params.enc[0].w_in.rows() == 32);
  // Layer 0 of the decoder sees [embedding; previous attentional vector].
  CHECK(params.dec[0].w_in.cols() == 16);
  CHECK(params.dec[1].w_in.cols() == 8);
  CHECK(params.w_comb.cols() == 16);
  CHECK(params.w_out.rows() == 9);

  bool in_range = true;
  bool nonzero = false;
  params.for_each_tensor([&](const std::string& name, const MatF& t) {
    if (name.find("bias") != std::string::npos) {
      CHECK(t.isZero(0.0f));
      return;
    }
    if ((t.array().abs() > 0.1f).any()) in_range = false;
    if ((t.array() != 0.0f).any()) nonzero = true;
  });
  CHECK(in_range);
  CHECK(nonzero);

  const Params again = init_params<float>(config);
  ModelConfig other = config;
  other.seed = 43;
  const Params shifted = init_params<float>(other);
  CHECK(params.w_att == again.w_att);
  CHECK(params.w_att != shifted.w_att);
}

TEST_CASE("attention weights form a masked distribution") {
  const ModelConfig config = tiny_config();
  const Params params = init_params<float>(config);
  const Batch batch = mixed_batch();
  const auto enc_out = encode(config, params, batch.src, batch.src_len);

  REQUIRE(enc_out.annotations.size() == 4);
  for (int t = 0; t < 4; ++t)
    for (int b = 0; b < 3; ++b)
      CHECK(enc_out.valid(t, b) == (t < batch.src_len[static_cast<size_t>(b)] ? 1.0f : 0.0f));

  const MatF decoder_top = random_mat(8, 3, 77);
  const auto att = attend(params, decoder_top, enc_out);
  REQUIRE(att.weights.rows() == 4);
  for (int b = 0; b < 3; ++b) {
    double sum = 0.0;
    for (int t = 0; t < 4; ++t) {
      if (t >= batch.src_len[static_cast<size_t>(b)]) {
        CHECK(att.weights(t, b) == 0.0f);
      } else {
        CHECK(att.weights(t, b) > 0.0f);
        sum += att.weights(t, b);
      }
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }

  // Zero parameters give zero scores, so the distribution is uniform over
  // the unmasked positions.
  const Params zero = zeros_like(params);
  const auto enc_zero = encode(config, zero, batch.src, batch.src_len);
  const auto att_zero = attend(zero, MatF(MatF::Zero(8, 3)), enc_zero);
  for (int b = 0; b < 3; ++b) {
    const float expect = 1.0f / static_cast<float>(batch.src_len[static_cast<size_t>(b)]);
    for (int t = 0; t < batch.src_len[static_cast<size_t>(b)]; ++t)
      CHECK(att_zero.weights(t, b) == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("attention rejects a fully masked column") {
  const ModelConfig config = tiny_config();
  const Params params = init_params<float>(config);
  EncoderOutputT<float> enc_out;
  enc_out.annotations = {MatF::Zero(8, 2), MatF::Zero(8, 2)};
  enc_out.valid = MatF::Zero(2, 2);
  enc_out.valid(0, 0) = 1.0f;  // column 1 has no real position
  CHECK_THROWS_AS(attend(params, MatF(MatF::Zero(8, 2)), enc_out), DataError);
}

TEST_CASE("zero parameters force a uniform predictive distribution") {
  const ModelConfig config = tiny_config();
  const Params zero = zeros_like(init_params<float>(config));
  const Batch batch = mixed_batch();
  const LossResult res = batch_loss(config, zero, batch, false, 0);

  // Scored tokens per sentence = target length + </s>.
  CHECK(res.token_count == 3 + 2 + 4);
  const double ln_v = std::log(static_cast<double>(config.tgt_vocab_size));
  CHECK(std::abs(res.per_token() - ln_v) < 1e-6);
  CHECK(res.loss == doctest::Approx(res.loss_sum / 3.0).epsilon(1e-12));
}

TEST_CASE("padding never leaks into a sentence's loss") {
  const ModelConfig config = tiny_config();
  const Params params = init_params<float>(config);
  const Batch pair = make_batch({{5, 6, 7, 8}, {6, 5}}, {{5, 6}, {8, 7, 6}});
  const Batch solo_a = make_batch({{5, 6, 7, 8}}, {{5, 6}});
  const Batch solo_b = make_batch({{6, 5}}, {{8, 7, 6}});

  const double nll_pair = batch_loss(config, params, pair, false, 0).loss_sum;
  const double nll_a = batch_loss(config, params, solo_a, false, 0).loss_sum;
  const double nll_b = batch_loss(config, params, solo_b, false, 0).loss_sum;
  CHECK(nll_pair == doctest::Approx(nll_a + nll_b).epsilon(1e-5));

  // The encoder freezes finished sentences: the short column's state stops
  // changing after its last real token.
  const auto enc_out = encode(config, params, pair.src, pair.src_len);
  CHECK(enc_out.annotations[2].col(1) == enc_out.annotations[1].col(1));
  CHECK(enc_out.annotations[3].col(1) == enc_out.annotations[1].col(1));
  CHECK(enc_out.h_final[1].col(1) == enc_out.annotations[1].col(1));
}

TEST_CASE("dropout masks are a pure function of the seed") {
  ModelConfig config = tiny_config();
  config.dropout_prob = 0.5;
  const Params params = init_params<float>(config);
  const Batch batch = mixed_batch();

  const double on_a = batch_loss(config, params, batch, true, 7).loss;
  const double on_b = batch_loss(config, params, batch, true, 7).loss;
  const double on_c = batch_loss(config, params, batch, true, 8).loss;
  const double off_a = batch_loss(config, params, batch, false, 7).loss;
  const double off_b = batch_loss(config, params, batch, false, 123).loss;

  CHECK(on_a == on_b);
  CHECK(on_a != on_c);
  CHECK(off_a == off_b);
  CHECK(on_a != off_a);
}
