#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nmt/config.hpp"
#include "nmt/training.hpp"

namespace nmt {

// One comparison row: an arm name with its best/averaged dev scores.
struct ArmResult {
  std::string name;
  ExperimentReport report;
};

// Runs the backward-model strategy comparison: trains the shared
// baseline backward model, back-translates the monolingual pool once,
// then self-trains one arm per strategy. The baseline arm always runs
// (and is listed) first; its checkpoint and the synthetic corpus are
// shared read-only by the other arms. Writes per-arm reports, curve
// series and the comparison table under config.output_dir; returns the
// rows in table order.
std::vector<ArmResult> run_experiment(const ExperimentConfig& config);

// Renders rows as a tab-separated table: arm, best step, best BLEU,
// averaged BLEU. Byte-stable for fixed inputs.
std::string comparison_table(const std::vector<ArmResult>& rows);

// One "step<TAB>bleu" series file per report plus an index file, written
// under `dir` (created if missing). Errors on an empty report set.
void emit_curves(const std::vector<ArmResult>& reports, const std::string& dir);

}  // namespace nmt
