#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nmt/error.hpp"
#include "nmt/hash.hpp"
#include "nmt/pipeline.hpp"
#include "nmt/toy.hpp"

using namespace nmt;

namespace {

namespace fs = std::filesystem;

// Copy task sized so the backward model reaches near-perfect dev BLEU in
// about a second; the synthetic-data oracle below depends on that.
struct Fixture {
  ToyData data;
  BpeModel bpe_src;
  BpeModel bpe_tgt;
  ParallelCorpus auth_bpe;
  ParallelCorpus dev_bpe;
  ModelConfig model;
  TrainingSchedule schedule;

  Fixture() {
    ToyTaskSpec spec;
    spec.task = ToyTask::kCopy;
    spec.vocab_size = 10;
    spec.min_length = 2;
    spec.max_length = 4;
    spec.train_pairs = 300;
    spec.dev_pairs = 24;
    spec.test_pairs = 24;
    spec.monolingual = 200;
    spec.seed = 3;
    data = gen_toy_corpus(spec);

    std::vector<Sentence> src_side, tgt_side;
    for (const auto& p : data.train.pairs) {
      src_side.push_back(p.source);
      tgt_side.push_back(p.target);
    }
    bpe_src = learn_bpe(src_side, 8);
    bpe_tgt = learn_bpe(tgt_side, 8);
    auth_bpe = bpe_encode_corpus(data.train, bpe_src, bpe_tgt);
    dev_bpe = bpe_encode_corpus(data.dev, bpe_src, bpe_tgt);

    model = ModelConfig::desk();
    model.hidden_size = 64;
    model.batch_size = 16;
    model.dropout_prob = 0.0;
    model.learning_rate = 1e-2;
    model.max_decode_length = 16;

    schedule = TrainingSchedule::desk();
    schedule.eval_interval_steps = 150;
    schedule.max_steps = 1500;
    schedule.seed = 1;
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

const StageResult& trained_backward() {
  static StageResult r = [] {
    const Fixture& f = fixture();
    return train_backward(f.auth_bpe, f.dev_bpe, f.model, f.schedule, AveragingWindow::last_k(4),
                          1000);
  }();
  return r;
}

// Minimal checkpoint whose decoder emits one fixed token until the cap:
// open gates force a positive hidden state, the combination layer passes
// it through, and a single output row is wired up.
Checkpoint forced_token_checkpoint(int token_id, const Vocabulary& vocab) {
  ModelConfig config = ModelConfig::desk();
  config.hidden_size = 6;
  config.batch_size = 4;
  config.max_decode_length = 3;
  Checkpoint ckpt = init_model(config, vocab, vocab);
  ckpt.params.for_each_tensor([](const std::string&, MatF& t) { t.setZero(); });
  const int h = ckpt.config.hidden_size;
  for (auto& layer : ckpt.params.dec) {
    layer.bias.block(0, 0, h, 1).setConstant(100.0f);
    layer.bias.block(2 * h, 0, h, 1).setConstant(100.0f);
    layer.bias.block(3 * h, 0, h, 1).setConstant(100.0f);
  }
  ckpt.params.w_comb.rightCols(h).setIdentity();
  ckpt.params.w_out.row(token_id).setOnes();
  return ckpt;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("the backward model masters the copy task") {
  const StageResult& back = trained_backward();
  CHECK(back.report.best_bleu >= 90.0);
  CHECK(back.report.averaged_bleu >= 90.0);
  CHECK(back.checkpoint.step > 0);
  CHECK_FALSE(back.report.curve.empty());
}

TEST_CASE("back-translating monolingual text yields verbatim-target pairs") {
  const Fixture& f = fixture();
  const SyntheticResult synth =
      generate_synthetic(trained_backward().checkpoint, f.data.monolingual, f.bpe_tgt);

  CHECK(synth.skipped == 0);
  REQUIRE(synth.corpus.size() == f.data.monolingual.size());
  size_t exact = 0;
  for (size_t i = 0; i < synth.corpus.size(); ++i) {
    const SentencePair& p = synth.corpus.pairs[i];
    CHECK(p.origin == Origin::kSynthetic);
    // Order preserved, targets untouched surface text.
    CHECK(p.target == f.data.monolingual.sentences[i]);
    if (p.source == p.target) ++exact;
  }
  // On a copy task a competent backward model reproduces its input.
  CHECK(exact >= (95 * synth.corpus.size()) / 100);
}

TEST_CASE("synthetic generation validates its inputs and outputs") {
  const Fixture& f = fixture();
  CHECK_THROWS_AS(
      generate_synthetic(trained_backward().checkpoint, MonolingualCorpus{}, f.bpe_tgt), DataError);

  std::vector<Sentence> words = {{"ka", "kb"}};
  const Vocabulary vocab = build_vocab(words, 100);
  MonolingualCorpus mono;
  for (int i = 0; i < 10; ++i) mono.sentences.push_back({"ka", "kb"});

  // A decoder stuck on </s> produces only empty sentences; over 1% of the
  // corpus skipped is an error that reports the counts.
  const Checkpoint eos_first = forced_token_checkpoint(Vocabulary::kEosId, vocab);
  try {
    generate_synthetic(eos_first, mono, BpeModel{});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("skipped 10") != std::string::npos);
    CHECK(what.find("of 10") != std::string::npos);
  }

  // A decoder stuck on a real token skips nothing and keeps pair order.
  const Checkpoint ka_first = forced_token_checkpoint(5, vocab);
  const SyntheticResult synth = generate_synthetic(ka_first, mono, BpeModel{});
  CHECK(synth.skipped == 0);
  REQUIRE(synth.corpus.size() == 10);
  for (const auto& p : synth.corpus.pairs) {
    CHECK(p.target == Sentence{"ka", "kb"});
    CHECK_FALSE(p.source.empty());
  }
}

TEST_CASE("the full pipeline persists, verifies, resumes and reruns identically") {
  const Fixture& f = fixture();
  const fs::path root = fs::temp_directory_path() / "nmt_pipe_test";
  fs::remove_all(root);

  PipelineConfig config;
  config.model = f.model;
  config.schedule = f.schedule;
  config.averaging = AveragingWindow::last_k(4);
  config.bpe_merges = 8;
  config.vocab_max = 1000;
  config.seed = 1;
  config.run_dir = (root / "a").string();

  const StageArtifacts art = run_full_pipeline(f.data.train, f.data.dev, f.data.monolingual, config);
  CHECK(art.report_backward.best_bleu >= 90.0);
  CHECK(art.report_self_train.best_bleu >= 90.0);
  CHECK(art.report_forward.best_bleu >= 90.0);
  CHECK(art.synth_a_skipped == 0);
  CHECK(art.synth_b_skipped == 0);
  CHECK(art.synth_a.size() == f.data.monolingual.size());

  const std::vector<std::string> artifacts = {
      "stage-0-data/bpe.src",           "stage-0-data/bpe.tgt",
      "stage-1-backward/checkpoint.bin", "stage-1-backward/report.tsv",
      "stage-2-synth-a/synth.src",      "stage-2-synth-a/synth.tgt",
      "stage-3-self-train/checkpoint.bin", "stage-3-self-train/report.tsv",
      "stage-4-synth-b/synth.src",      "stage-4-synth-b/synth.tgt",
      "stage-5-forward/checkpoint.bin", "stage-5-forward/report.tsv"};
  for (const auto& rel : artifacts) CHECK(fs::exists(root / "a" / rel));

  // The manifest lists every artifact with its current content hash.
  std::istringstream manifest(read_file((root / "a" / "manifest").string()));
  std::string line;
  size_t listed = 0;
  while (std::getline(manifest, line)) {
    REQUIRE(line.size() > 18);
    const std::string hash = line.substr(0, 16);
    const std::string rel = line.substr(18);
    CHECK(hash == hash_file_hex((root / "a" / rel).string()));
    ++listed;
  }
  CHECK(listed == artifacts.size());

  // Same inputs into a fresh directory: byte-identical artifacts.
  PipelineConfig config_b = config;
  config_b.run_dir = (root / "b").string();
  run_full_pipeline(f.data.train, f.data.dev, f.data.monolingual, config_b);
  for (const auto& rel : artifacts)
    CHECK(read_file((root / "a" / rel).string()) == read_file((root / "b" / rel).string()));

  // Resume trusts completed stages: a tampered synthetic corpus is reused
  // as-is instead of being regenerated.
  {
    const ParallelCorpus synth_a =
        load_corpus((root / "a" / "stage-2-synth-a/synth.src").string(),
                    (root / "a" / "stage-2-synth-a/synth.tgt").string(), Origin::kSynthetic);
    std::ofstream out((root / "a" / "stage-2-synth-a/synth.src").string(), std::ios::binary);
    for (size_t i = 0; i < synth_a.size(); ++i) out << "zz\n";
  }
  const StageArtifacts resumed =
      run_full_pipeline(f.data.train, f.data.dev, f.data.monolingual, config);
  REQUIRE(resumed.synth_a.size() == art.synth_a.size());
  for (const auto& p : resumed.synth_a.pairs) CHECK(p.source == Sentence{"zz"});
  CHECK(resumed.synth_b.size() == art.synth_b.size());

  // A stage whose artifact no longer loads fails under that stage's name.
  {
    std::ofstream out((root / "a" / "stage-5-forward/checkpoint.bin").string(), std::ios::binary);
    out << "garbage";
  }
  try {
    run_full_pipeline(f.data.train, f.data.dev, f.data.monolingual, config);
    FAIL("expected TrainError");
  } catch (const TrainError& e) {
    CHECK(std::string(e.what()).find("pipeline stage forward failed") != std::string::npos);
  }

  CHECK_THROWS_AS(run_full_pipeline(ParallelCorpus{}, f.data.dev, f.data.monolingual, config_b),
                  DataError);
  fs::remove_all(root);
}
