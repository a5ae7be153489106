#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "nmt/text.hpp"

namespace nmt {

// Token/id mapping with a fixed block of reserved specials at the front.
// Ids are dense and stable: index into tokens() is the id.
class Vocabulary {
public:
  static constexpr int kBlankId = 0;  // padding
  static constexpr int kBosId = 1;
  static constexpr int kEosId = 2;
  static constexpr int kUnkId = 3;
  static constexpr int kSynId = 4;  // marks machine-generated sentences
  static constexpr int kNumSpecials = 5;

  static const char* const kBlank;
  static const char* const kBos;
  static const char* const kEos;
  static const char* const kUnk;
  static const char* const kSyn;

  // Just the reserved specials.
  Vocabulary();

  static bool is_special(const std::string& token);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  // Id for a token, kUnkId when absent.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const;

  // Appends a non-special token; no-op (returns existing id) if present.
  int add(const std::string& token);

  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const Sentence& s) const;
  Sentence decode(const std::vector<int>& ids) const;

  // True when every token of `other` is present here with the same id.
  bool extends(const Vocabulary& other) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Frequency-ordered vocabulary over already-segmented corpus sides:
// specials first, then tokens by descending count (ties lexicographic),
// truncated to max_size. Reserved specials occurring in the corpus are
// not counted twice.
Vocabulary build_vocab(const std::vector<Sentence>& corpus_sides, int max_size);

// Union in vocabulary order: base first, then tokens of `extra` that are
// new, in extra's order. Existing ids are preserved.
Vocabulary merge_vocab(const Vocabulary& base, const Vocabulary& extra);

}  // namespace nmt
