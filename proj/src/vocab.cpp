#include "nmt/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "nmt/error.hpp"

namespace nmt {

const char* const Vocabulary::kBlank = "<blank>";
const char* const Vocabulary::kBos = "<s>";
const char* const Vocabulary::kEos = "</s>";
const char* const Vocabulary::kUnk = "<unk>";
const char* const Vocabulary::kSyn = "<SYN>";

Vocabulary::Vocabulary() {
  for (const char* tok : {kBlank, kBos, kEos, kUnk, kSyn}) {
    index_[tok] = static_cast<int>(tokens_.size());
    tokens_.push_back(tok);
  }
}

bool Vocabulary::is_special(const std::string& token) {
  return token == kBlank || token == kBos || token == kEos || token == kUnk || token == kSyn;
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  index_[token] = id;
  tokens_.push_back(token);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.find(token) != index_.end();
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw DataError("vocabulary id out of range: " + std::to_string(id));
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Sentence& s) const {
  std::vector<int> ids;
  ids.reserve(s.size());
  for (const auto& tok : s) ids.push_back(id(tok));
  return ids;
}

Sentence Vocabulary::decode(const std::vector<int>& ids) const {
  Sentence out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

bool Vocabulary::extends(const Vocabulary& other) const {
  if (other.tokens_.size() > tokens_.size()) return false;
  return std::equal(other.tokens_.begin(), other.tokens_.end(), tokens_.begin());
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary: " + path);
  for (const auto& tok : tokens_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary: " + path);
  Vocabulary vocab;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no <= kNumSpecials) {
      if (line != vocab.tokens_[static_cast<size_t>(line_no - 1)])
        throw DataError("vocabulary " + path + " does not start with the reserved tokens");
      continue;
    }
    if (line.empty())
      throw DataError("empty vocabulary entry at line " + std::to_string(line_no) + " in " + path);
    if (vocab.contains(line))
      throw DataError("duplicate vocabulary entry '" + line + "' in " + path);
    vocab.add(line);
  }
  if (line_no < kNumSpecials)
    throw DataError("vocabulary " + path + " does not start with the reserved tokens");
  return vocab;
}

Vocabulary build_vocab(const std::vector<Sentence>& corpus_sides, int max_size) {
  if (max_size < Vocabulary::kNumSpecials)
    throw ConfigError("vocabulary size must allow the reserved tokens");
  std::map<std::string, long long> freq;
  for (const auto& sentence : corpus_sides)
    for (const auto& tok : sentence)
      if (!Vocabulary::is_special(tok)) ++freq[tok];

  std::vector<std::pair<std::string, long long>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary vocab;
  for (const auto& [tok, count] : ranked) {
    if (vocab.size() >= max_size) break;
    vocab.add(tok);
  }
  return vocab;
}

Vocabulary merge_vocab(const Vocabulary& base, const Vocabulary& extra) {
  Vocabulary merged = base;
  for (int i = 0; i < extra.size(); ++i) merged.add(extra.token(i));
  return merged;
}

}  // namespace nmt
