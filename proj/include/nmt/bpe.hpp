#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nmt/text.hpp"

namespace nmt {

// Byte-pair-encoding model: an ordered list of merge rules over symbols.
// Non-final symbols of a word carry the "@@" continuation marker, so any
// segmentation can be reversed exactly by joining marked runs.
struct BpeModel {
  static constexpr const char* kMarker = "@@";

  std::vector<std::pair<std::string, std::string>> merges;

  void save(const std::string& path) const;
  static BpeModel load(const std::string& path);
};

// Learns up to num_merges rules by greedy most-frequent-pair merging over
// the given corpus sides. Stops early once no pair occurs at least twice.
// Ties break on lexicographic (left, right). num_merges = 0 yields the
// character-level identity model.
BpeModel learn_bpe(const std::vector<Sentence>& corpus_sides, int num_merges);

// Splits each word to marked characters and replays merges in learned
// order. Reserved special tokens pass through untouched.
Sentence apply_bpe(const BpeModel& model, const Sentence& sentence);

struct BpeDecodeResult {
  Sentence sentence;
  // Set when the last token still carried a continuation marker; the run
  // is joined anyway.
  bool dangling_marker = false;
};

// Joins marked runs back into words; inverse of apply_bpe.
BpeDecodeResult decode_bpe(const Sentence& tokens);

// Splits a UTF-8 string into code-point substrings.
std::vector<std::string> utf8_chars(const std::string& word);

}  // namespace nmt
