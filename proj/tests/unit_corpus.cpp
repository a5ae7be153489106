#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nmt/corpus.hpp"
#include "nmt/error.hpp"

using namespace nmt;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "nmt_corpus_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const char* name, const std::string& content) const {
    const std::string p = (path / name).string();
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  }
};

ParallelCorpus two_pairs() {
  ParallelCorpus c;
  c.pairs.push_back({{"a", "b"}, {"x", "y"}, Origin::kAuthentic});
  c.pairs.push_back({{"c"}, {"z"}, Origin::kSynthetic});
  return c;
}

}  // namespace

TEST_CASE("corpus files load, save and validate") {
  TempDir dir;
  const std::string src = dir.file("c.src", "a b\nc\n");
  const std::string tgt = dir.file("c.tgt", "x y\nz\n");
  const ParallelCorpus c = load_corpus(src, tgt, Origin::kAuthentic);
  REQUIRE(c.size() == 2);
  CHECK(c.pairs[0].source == Sentence{"a", "b"});
  CHECK(c.pairs[1].target == Sentence{"z"});
  CHECK(c.pairs[0].origin == Origin::kAuthentic);

  save_corpus(c, (dir.path / "out.src").string(), (dir.path / "out.tgt").string());
  const ParallelCorpus back = load_corpus((dir.path / "out.src").string(),
                                          (dir.path / "out.tgt").string(), Origin::kAuthentic);
  CHECK(back.pairs[0].source == c.pairs[0].source);
  CHECK(back.pairs[1].target == c.pairs[1].target);
}

TEST_CASE("loading rejects bad files") {
  TempDir dir;
  const std::string src = dir.file("c.src", "a b\nc\n");
  CHECK_THROWS_AS(load_corpus(src, dir.file("short.tgt", "x\n"), Origin::kAuthentic), DataError);
  CHECK_THROWS_AS(load_corpus(src, dir.file("empty_line.tgt", "x\n\n"), Origin::kAuthentic),
                  DataError);
  CHECK_THROWS_AS(load_corpus(src, dir.file("reserved.tgt", "x\n<s>\n"), Origin::kAuthentic),
                  DataError);
  CHECK_THROWS_AS(load_corpus((dir.path / "missing.src").string(), src, Origin::kAuthentic),
                  DataError);
}

TEST_CASE("monolingual files load and validate") {
  TempDir dir;
  const MonolingualCorpus mono = load_monolingual(dir.file("m.txt", "a b\nc d e\n"));
  REQUIRE(mono.size() == 2);
  CHECK(mono.sentences[1] == Sentence{"c", "d", "e"});
  CHECK_THROWS_AS(load_monolingual(dir.file("bad.txt", "a\n\nb\n")), DataError);
}

TEST_CASE("mix_corpora concatenates and shuffles deterministically") {
  ParallelCorpus a, b;
  for (int i = 0; i < 6; ++i) a.pairs.push_back({{"a" + std::to_string(i)}, {"x"}, Origin::kAuthentic});
  for (int i = 0; i < 4; ++i) b.pairs.push_back({{"b" + std::to_string(i)}, {"y"}, Origin::kSynthetic});

  const ParallelCorpus m1 = mix_corpora(a, b, 9);
  const ParallelCorpus m2 = mix_corpora(a, b, 9);
  REQUIRE(m1.size() == 10);
  for (size_t i = 0; i < m1.size(); ++i) CHECK(m1.pairs[i].source == m2.pairs[i].source);

  int synthetic = 0;
  for (const auto& p : m1.pairs)
    if (p.origin == Origin::kSynthetic) ++synthetic;
  CHECK(synthetic == 4);

  bool moved = false;  // a seed that leaves all ten in place would be broken
  for (size_t i = 0; i < 6; ++i)
    if (m1.pairs[i].source != a.pairs[i].source) moved = true;
  CHECK(moved);

  CHECK(mix_corpora(a, ParallelCorpus{}, 1).size() == 6);
  CHECK_THROWS_AS(mix_corpora(ParallelCorpus{}, ParallelCorpus{}, 1), DataError);
}

TEST_CASE("tag_synthetic prefixes only the machine side of synthetic pairs") {
  const ParallelCorpus tagged_src = tag_synthetic(two_pairs(), TagSide::kSource);
  CHECK(tagged_src.pairs[0].source == Sentence{"a", "b"});  // authentic untouched
  CHECK(tagged_src.pairs[1].source == Sentence{"<SYN>", "c"});
  CHECK(tagged_src.pairs[1].target == Sentence{"z"});

  const ParallelCorpus tagged_tgt = tag_synthetic(two_pairs(), TagSide::kTarget);
  CHECK(tagged_tgt.pairs[1].source == Sentence{"c"});
  CHECK(tagged_tgt.pairs[1].target == Sentence{"<SYN>", "z"});

  CHECK_THROWS_AS(tag_synthetic(tagged_src, TagSide::kSource), DataError);
}

TEST_CASE("swap_sides flips every pair") {
  const ParallelCorpus swapped = swap_sides(two_pairs());
  CHECK(swapped.pairs[0].source == Sentence{"x", "y"});
  CHECK(swapped.pairs[0].target == Sentence{"a", "b"});
  CHECK(swapped.pairs[1].origin == Origin::kSynthetic);
  const ParallelCorpus twice = swap_sides(swapped);
  CHECK(twice.pairs[0].source == two_pairs().pairs[0].source);
}

TEST_CASE("bpe_encode_corpus segments both sides") {
  std::vector<Sentence> words;
  for (int i = 0; i < 5; ++i) words.push_back({"low"});
  const BpeModel model = learn_bpe(words, 2);
  ParallelCorpus c;
  c.pairs.push_back({{"low"}, {"low", "low"}, Origin::kAuthentic});
  const ParallelCorpus enc = bpe_encode_corpus(c, model, model);
  CHECK(enc.pairs[0].source == Sentence{"low"});
  CHECK(enc.pairs[0].target == Sentence{"low", "low"});

  const BpeModel identity;  // no merges: characters with markers
  const ParallelCorpus chars = bpe_encode_corpus(c, identity, model);
  CHECK(chars.pairs[0].source == Sentence{"l@@", "o@@", "w"});
  CHECK(chars.pairs[0].target == Sentence{"low", "low"});
}
