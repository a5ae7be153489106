#include "nmt/corpus.hpp"

#include <fstream>
#include <unordered_map>

#include "nmt/error.hpp"
#include "nmt/rng.hpp"
#include "nmt/vocab.hpp"

namespace nmt {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

Sentence tokenize_line(const std::string& line, const std::string& path, size_t line_no) {
  Sentence s = split_tokens(line);
  if (s.empty())
    throw DataError("malformed corpus: empty line " + std::to_string(line_no) + " in " + path);
  for (const auto& tok : s) {
    if (Vocabulary::is_special(tok))
      throw DataError("malformed corpus: reserved token '" + tok + "' at line " +
                      std::to_string(line_no) + " in " + path);
  }
  return s;
}

}  // namespace

ParallelCorpus load_corpus(const std::string& path_source, const std::string& path_target,
                           Origin origin) {
  const auto src_lines = read_lines(path_source);
  const auto tgt_lines = read_lines(path_target);
  if (src_lines.size() != tgt_lines.size())
    throw DataError("alignment error: " + path_source + " has " +
                    std::to_string(src_lines.size()) + " lines but " + path_target + " has " +
                    std::to_string(tgt_lines.size()));
  ParallelCorpus corpus;
  corpus.pairs.reserve(src_lines.size());
  for (size_t i = 0; i < src_lines.size(); ++i) {
    SentencePair pair;
    pair.source = tokenize_line(src_lines[i], path_source, i + 1);
    pair.target = tokenize_line(tgt_lines[i], path_target, i + 1);
    pair.origin = origin;
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

MonolingualCorpus load_monolingual(const std::string& path) {
  MonolingualCorpus corpus;
  const auto lines = read_lines(path);
  corpus.sentences.reserve(lines.size());
  for (size_t i = 0; i < lines.size(); ++i)
    corpus.sentences.push_back(tokenize_line(lines[i], path, i + 1));
  return corpus;
}

void save_corpus(const ParallelCorpus& corpus, const std::string& path_source,
                 const std::string& path_target) {
  std::ofstream src(path_source, std::ios::binary);
  std::ofstream tgt(path_target, std::ios::binary);
  if (!src || !tgt)
    throw DataError("cannot write corpus files: " + path_source + ", " + path_target);
  for (const auto& pair : corpus.pairs) {
    src << join_tokens(pair.source) << '\n';
    tgt << join_tokens(pair.target) << '\n';
  }
}

void save_monolingual(const MonolingualCorpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  for (const auto& s : corpus.sentences) out << join_tokens(s) << '\n';
}

ParallelCorpus mix_corpora(const ParallelCorpus& authentic, const ParallelCorpus& synthetic,
                           uint64_t seed) {
  if (authentic.empty() && synthetic.empty())
    throw DataError("mix_corpora: both corpora are empty");
  ParallelCorpus mixed;
  mixed.pairs.reserve(authentic.size() + synthetic.size());
  mixed.pairs.insert(mixed.pairs.end(), authentic.pairs.begin(), authentic.pairs.end());
  mixed.pairs.insert(mixed.pairs.end(), synthetic.pairs.begin(), synthetic.pairs.end());
  Rng rng(seed);
  rng.shuffle(mixed.pairs);
  return mixed;
}

ParallelCorpus tag_synthetic(const ParallelCorpus& corpus, TagSide machine_side) {
  ParallelCorpus tagged = corpus;
  for (auto& pair : tagged.pairs) {
    if (pair.origin != Origin::kSynthetic) continue;
    Sentence& side = machine_side == TagSide::kSource ? pair.source : pair.target;
    if (!side.empty() && side.front() == Vocabulary::kSyn)
      throw DataError("tag_synthetic: sentence already starts with " +
                      std::string(Vocabulary::kSyn));
    side.insert(side.begin(), Vocabulary::kSyn);
  }
  return tagged;
}

ParallelCorpus swap_sides(const ParallelCorpus& corpus) {
  ParallelCorpus swapped = corpus;
  for (auto& pair : swapped.pairs) std::swap(pair.source, pair.target);
  return swapped;
}

ParallelCorpus bpe_encode_corpus(const ParallelCorpus& corpus, const BpeModel& source_model,
                                 const BpeModel& target_model) {
  // Merge replay is per distinct word; repeated words hit the cache.
  using Cache = std::unordered_map<std::string, Sentence>;
  Cache src_cache, tgt_cache;
  auto encode = [](const BpeModel& model, Cache& cache, const Sentence& s) {
    Sentence out;
    for (const auto& word : s) {
      auto it = cache.find(word);
      if (it == cache.end()) it = cache.emplace(word, apply_bpe(model, {word})).first;
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return out;
  };
  ParallelCorpus encoded;
  encoded.pairs.reserve(corpus.size());
  for (const auto& pair : corpus.pairs) {
    SentencePair enc;
    enc.source = encode(source_model, src_cache, pair.source);
    enc.target = encode(target_model, tgt_cache, pair.target);
    enc.origin = pair.origin;
    encoded.pairs.push_back(std::move(enc));
  }
  return encoded;
}

}  // namespace nmt
