#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "nmt/pipeline.hpp"
#include "nmt/toy.hpp"

namespace nmt {

// Flat "key = value" file with [section] headers and '#' comments; keys
// are addressed as "section.key". Parsing is strict: after a schema has
// consumed a file, finish() rejects any key it never asked for.
class ConfigFile {
public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void finish() const;

private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

// Everything one experiment run needs. Data comes either from a toy spec
// or from explicit corpus files; model/schedule default to desk scale.
struct ExperimentConfig {
  bool use_toy = true;
  ToyTaskSpec toy;
  std::string train_src, train_tgt, dev_src, dev_tgt, mono_path;

  PipelineConfig pipeline;  // run_dir filled in from output_dir at run time
  std::vector<std::string> arms{"baseline", "mix"};  // comparison rows
  std::string output_dir = "runs/out";
  uint64_t seed = 1;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_config(const ConfigFile& file);

  // The only environment override: NMT_OUTPUT_DIR replaces output_dir.
  void apply_env();
  // Overrides every seed in the config (training, pipeline, toy data).
  void override_seed(uint64_t seed_value);
  void validate() const;
};

}  // namespace nmt
