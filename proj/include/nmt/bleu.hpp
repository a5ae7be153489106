#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "nmt/text.hpp"

namespace nmt {

enum class BleuSmoothing { kNone, kAdd1 };

struct BleuScore {
  double score = 0.0;  // 0..100
  // Modified n-gram precisions for n = 1..4, as fractions in [0,1].
  // Orders with no hypothesis n-grams at all are excluded from the
  // geometric mean and reported as -1 here.
  std::array<double, 4> precisions{-1.0, -1.0, -1.0, -1.0};
  double brevity_penalty = 1.0;
  size_t hyp_length = 0;
  size_t ref_length = 0;

  std::string summary() const;  // "BLEU = <score> (p1/p2/p3/p4, BP=<bp>)"
};

// Corpus-level BLEU: clipped n-gram precision counts pooled over all
// pairs, geometric mean over orders 1..4, brevity penalty
// exp(1 - ref_len/hyp_len) when the hypothesis side is shorter.
// Add-1 smoothing (when requested) applies to orders >= 2 only.
BleuScore bleu_corpus(const std::vector<Sentence>& hypotheses,
                      const std::vector<Sentence>& references, BleuSmoothing smoothing);

// Single-pair diagnostic score; add-1 smoothing always on.
BleuScore bleu_sentence(const Sentence& hypothesis, const Sentence& reference);

}  // namespace nmt
