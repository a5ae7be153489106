#pragma once

#include <string>
#include <vector>

namespace nmt {

// A sentence is an ordered list of whitespace-free UTF-8 tokens.
using Sentence = std::vector<std::string>;

enum class Origin { kAuthentic, kSynthetic };

struct SentencePair {
  Sentence source;
  Sentence target;
  Origin origin = Origin::kAuthentic;
};

// Aligned sentence pairs. Holds authentic data, synthetic data, or a mix;
// each pair remembers where it came from.
struct ParallelCorpus {
  std::vector<SentencePair> pairs;

  size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

struct MonolingualCorpus {
  std::vector<Sentence> sentences;

  size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
};

inline std::string join_tokens(const Sentence& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += s[i];
  }
  return out;
}

Sentence split_tokens(const std::string& line);

}  // namespace nmt
