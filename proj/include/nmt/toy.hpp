#pragma once

#include <cstdint>
#include <string>

#include "nmt/corpus.hpp"

namespace nmt {

// Deterministic translation tasks over synthetic word inventories:
//   kCopy        target = source
//   kShiftMap    bijective token substitution, order kept
//   kReverseMap  bijective token substitution plus order reversal
enum class ToyTask { kReverseMap, kCopy, kShiftMap };

std::string toy_task_name(ToyTask task);
ToyTask parse_toy_task(const std::string& name);

struct ToyTaskSpec {
  ToyTask task = ToyTask::kReverseMap;
  int vocab_size = 24;  // distinct source words
  int min_length = 3;
  int max_length = 8;
  int train_pairs = 2000;
  int dev_pairs = 200;
  int test_pairs = 200;
  int monolingual = 8000;  // extra target-side sentences, sources discarded
  uint64_t seed = 1;

  void validate() const;
};

struct ToyData {
  ParallelCorpus train;
  ParallelCorpus dev;
  ParallelCorpus test;
  MonolingualCorpus monolingual;
};

// Seeded generation. Dev and test source sentences are disjoint from
// train and from each other; identical specs yield identical corpora.
ToyData gen_toy_corpus(const ToyTaskSpec& spec);

// The task's transform for a single source sentence (what gen_toy_corpus
// applies); exposed so tests can check bijectivity directly.
Sentence toy_transform(const ToyTaskSpec& spec, const Sentence& source);

}  // namespace nmt
