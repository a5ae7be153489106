#include "nmt/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nmt/error.hpp"

namespace nmt {

namespace {

std::string trim(const std::string& s) {
  size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  size_t end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_'))
      return false;
  return true;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
  ConfigFile file;
  file.origin_ = origin;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string at = origin + ":" + std::to_string(line_no);
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header at " + at);
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_name(section)) throw ConfigError("bad section name at " + at);
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value at " + at);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_name(key)) throw ConfigError("bad key name at " + at);
    if (section.empty()) throw ConfigError("key outside any [section] at " + at);
    const std::string full = section + "." + key;
    if (!file.values_.emplace(full, value).second)
      throw ConfigError("duplicate config key " + full + " at " + at);
  }
  return file;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int ConfigFile::get_int(const std::string& key, int fallback) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected integer, got '" + it->second + "'");
  }
}

uint64_t ConfigFile::get_u64(const std::string& key, uint64_t fallback) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    uint64_t v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected unsigned integer, got '" + it->second + "'");
  }
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected number, got '" + it->second + "'");
  }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + ": expected boolean, got '" + v + "'");
}

void ConfigFile::finish() const {
  for (const auto& [key, value] : values_)
    if (consumed_.count(key) == 0)
      throw ConfigError("unknown config key " + key + " in " + origin_);
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_config(ConfigFile::parse_file(path));
}

ExperimentConfig ExperimentConfig::from_config(const ConfigFile& file) {
  ExperimentConfig config;
  config.pipeline.model = ModelConfig::desk();
  config.pipeline.schedule = TrainingSchedule::desk();

  config.toy.task = parse_toy_task(file.get_string("toy.task", toy_task_name(config.toy.task)));
  config.toy.vocab_size = file.get_int("toy.vocab_size", config.toy.vocab_size);
  config.toy.min_length = file.get_int("toy.min_length", config.toy.min_length);
  config.toy.max_length = file.get_int("toy.max_length", config.toy.max_length);
  config.toy.train_pairs = file.get_int("toy.train_pairs", config.toy.train_pairs);
  config.toy.dev_pairs = file.get_int("toy.dev_pairs", config.toy.dev_pairs);
  config.toy.test_pairs = file.get_int("toy.test_pairs", config.toy.test_pairs);
  config.toy.monolingual = file.get_int("toy.monolingual", config.toy.monolingual);

  config.train_src = file.get_string("data.train_src", "");
  config.train_tgt = file.get_string("data.train_tgt", "");
  config.dev_src = file.get_string("data.dev_src", "");
  config.dev_tgt = file.get_string("data.dev_tgt", "");
  config.mono_path = file.get_string("data.mono", "");
  config.use_toy = config.train_src.empty();

  ModelConfig& model = config.pipeline.model;
  model.hidden_size = file.get_int("model.hidden_size", model.hidden_size);
  model.num_layers = file.get_int("model.num_layers", model.num_layers);
  model.dropout_prob = file.get_double("model.dropout", model.dropout_prob);
  model.learning_rate = file.get_double("model.learning_rate", model.learning_rate);
  model.batch_size = file.get_int("model.batch_size", model.batch_size);
  model.max_decode_length = file.get_int("model.max_decode_length", model.max_decode_length);
  model.input_feeding = file.get_bool("model.input_feeding", model.input_feeding);

  TrainingSchedule& schedule = config.pipeline.schedule;
  schedule.eval_interval_steps =
      file.get_int("schedule.eval_interval_steps", schedule.eval_interval_steps);
  schedule.max_steps = file.get_int("schedule.max_steps", schedule.max_steps);
  schedule.patience_evals = file.get_int("schedule.patience_evals", schedule.patience_evals);
  schedule.min_improvement_bleu =
      file.get_double("schedule.min_improvement_bleu", schedule.min_improvement_bleu);
  schedule.checkpoint_keep = file.get_int("schedule.checkpoint_keep", schedule.checkpoint_keep);
  schedule.clip_norm = file.get_double("schedule.clip_norm", schedule.clip_norm);

  config.pipeline.strategy_backward = parse_strategy(
      file.get_string("pipeline.strategy_backward", strategy_name(config.pipeline.strategy_backward)));
  config.pipeline.strategy_forward = parse_strategy(
      file.get_string("pipeline.strategy_forward", strategy_name(config.pipeline.strategy_forward)));
  config.pipeline.bpe_merges = file.get_int("pipeline.bpe_merges", config.pipeline.bpe_merges);
  config.pipeline.vocab_max = file.get_int("pipeline.vocab_max", config.pipeline.vocab_max);
  config.pipeline.joint_bpe = file.get_bool("pipeline.joint_bpe", config.pipeline.joint_bpe);
  const int avg_k = file.get_int("pipeline.averaging_k", schedule.checkpoint_keep);
  const uint64_t avg_end = file.get_u64("pipeline.averaging_end_step", 0);
  config.pipeline.averaging =
      avg_end > 0 ? AveragingWindow::ending_at(avg_end, avg_k) : AveragingWindow::last_k(avg_k);

  config.output_dir = file.get_string("experiment.output_dir", config.output_dir);
  const std::string arms = file.get_string("experiment.arms", "");
  if (!arms.empty()) config.arms = split_list(arms);
  config.seed = file.get_u64("experiment.seed", config.seed);
  config.pipeline.seed = config.seed;
  schedule.seed = config.seed;
  config.toy.seed = file.get_u64("toy.seed", config.seed);

  file.finish();
  config.validate();
  return config;
}

void ExperimentConfig::apply_env() {
  if (const char* dir = std::getenv("NMT_OUTPUT_DIR"); dir != nullptr && *dir != '\0')
    output_dir = dir;
}

void ExperimentConfig::override_seed(uint64_t seed_value) {
  seed = seed_value;
  toy.seed = seed_value;
  pipeline.seed = seed_value;
  pipeline.schedule.seed = seed_value;
}

void ExperimentConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("experiment.output_dir must be set");
  if (arms.empty()) throw ConfigError("experiment.arms must name at least one arm");
  for (const auto& arm : arms)
    if (arm != "baseline") parse_strategy(arm);
  if (use_toy) {
    toy.validate();
  } else {
    if (train_src.empty() || train_tgt.empty() || dev_src.empty() || dev_tgt.empty() ||
        mono_path.empty())
      throw ConfigError("data mode needs train_src/train_tgt/dev_src/dev_tgt/mono paths");
  }
  pipeline.schedule.validate();
}

}  // namespace nmt
