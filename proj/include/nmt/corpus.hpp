#pragma once

#include <cstdint>
#include <string>

#include "nmt/bpe.hpp"
#include "nmt/text.hpp"

namespace nmt {

// Reads two line-aligned UTF-8 files (one sentence per line, LF endings)
// into a corpus with the given origin flag. Lines are whitespace-tokenized.
ParallelCorpus load_corpus(const std::string& path_source, const std::string& path_target,
                           Origin origin);

MonolingualCorpus load_monolingual(const std::string& path);

// Writes source/target sides back out, one sentence per line.
void save_corpus(const ParallelCorpus& corpus, const std::string& path_source,
                 const std::string& path_target);

void save_monolingual(const MonolingualCorpus& corpus, const std::string& path);

// Concatenates and applies a seeded uniform shuffle. Origin flags ride
// along with each pair.
ParallelCorpus mix_corpora(const ParallelCorpus& authentic, const ParallelCorpus& synthetic,
                           uint64_t seed);

// Which stored side of a pair holds the machine-generated sentence.
enum class TagSide { kSource, kTarget };

// Prefixes the machine-generated side of every synthetic pair with the
// <SYN> token. Authentic pairs are untouched.
ParallelCorpus tag_synthetic(const ParallelCorpus& corpus, TagSide machine_side);

// Swaps source/target of every pair (for training the reverse direction).
ParallelCorpus swap_sides(const ParallelCorpus& corpus);

// Applies BPE segmentation to both sides of every pair.
ParallelCorpus bpe_encode_corpus(const ParallelCorpus& corpus, const BpeModel& source_model,
                                 const BpeModel& target_model);

}  // namespace nmt
