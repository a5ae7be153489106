#include "nmt/bleu.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "nmt/error.hpp"

namespace nmt {

namespace {

constexpr int kMaxOrder = 4;

// n-gram keyed by its tokens joined with \x1f (tokens never contain it).
std::map<std::string, long long> ngram_counts(const Sentence& s, int n) {
  std::map<std::string, long long> counts;
  if (static_cast<int>(s.size()) < n) return counts;
  for (size_t i = 0; i + n <= s.size(); ++i) {
    std::string key = s[i];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += s[i + k];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

BleuScore bleu_corpus(const std::vector<Sentence>& hypotheses,
                      const std::vector<Sentence>& references, BleuSmoothing smoothing) {
  if (hypotheses.size() != references.size())
    throw DataError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                    std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw DataError("bleu: empty corpus");
  for (const auto& ref : references)
    if (ref.empty()) throw DataError("bleu: empty reference sentence");

  BleuScore result;
  long long matched[kMaxOrder] = {0, 0, 0, 0};
  long long total[kMaxOrder] = {0, 0, 0, 0};
  for (size_t p = 0; p < hypotheses.size(); ++p) {
    result.hyp_length += hypotheses[p].size();
    result.ref_length += references[p].size();
    for (int n = 1; n <= kMaxOrder; ++n) {
      const auto hyp_counts = ngram_counts(hypotheses[p], n);
      if (hyp_counts.empty()) continue;
      const auto ref_counts = ngram_counts(references[p], n);
      for (const auto& [key, count] : hyp_counts) {
        total[n - 1] += count;
        auto it = ref_counts.find(key);
        if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
      }
    }
  }

  if (result.hyp_length == 0) return result;  // score 0, no length signal

  double log_sum = 0.0;
  int included = 0;
  bool zero_precision = false;
  for (int n = 1; n <= kMaxOrder; ++n) {
    if (total[n - 1] == 0) continue;  // order absent from the hypothesis side
    double m = static_cast<double>(matched[n - 1]);
    double t = static_cast<double>(total[n - 1]);
    if (smoothing == BleuSmoothing::kAdd1 && n >= 2) {
      m += 1.0;
      t += 1.0;
    }
    const double precision = m / t;
    result.precisions[n - 1] = precision;
    ++included;
    if (precision <= 0.0)
      zero_precision = true;
    else
      log_sum += std::log(precision);
  }

  if (result.hyp_length < result.ref_length)
    result.brevity_penalty =
        std::exp(1.0 - static_cast<double>(result.ref_length) / result.hyp_length);

  if (included == 0 || zero_precision) return result;  // score stays 0
  result.score = 100.0 * result.brevity_penalty * std::exp(log_sum / included);
  return result;
}

BleuScore bleu_sentence(const Sentence& hypothesis, const Sentence& reference) {
  return bleu_corpus({hypothesis}, {reference}, BleuSmoothing::kAdd1);
}

std::string BleuScore::summary() const {
  char p[4][16];
  for (int n = 0; n < 4; ++n) {
    if (precisions[n] < 0.0)
      std::snprintf(p[n], sizeof(p[n]), "n/a");
    else
      std::snprintf(p[n], sizeof(p[n]), "%.1f", 100.0 * precisions[n]);
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "BLEU = %.2f (%s/%s/%s/%s, BP=%.3f)", score, p[0], p[1], p[2],
                p[3], brevity_penalty);
  return buf;
}

}  // namespace nmt
