#include "nmt/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "nmt/error.hpp"
#include "nmt/vocab.hpp"

namespace nmt {

namespace {

using SymbolPair = std::pair<std::string, std::string>;

// Concatenation of two adjacent symbols: the left one loses its marker.
std::string merge_symbol(const std::string& left, const std::string& right) {
  std::string out = left;
  const size_t mlen = 2;  // "@@"
  if (out.size() >= mlen && out.compare(out.size() - mlen, mlen, BpeModel::kMarker) == 0)
    out.resize(out.size() - mlen);
  return out + right;
}

std::vector<std::string> word_to_symbols(const std::string& word) {
  std::vector<std::string> syms = utf8_chars(word);
  for (size_t i = 0; i + 1 < syms.size(); ++i) syms[i] += BpeModel::kMarker;
  return syms;
}

// One left-to-right pass replacing non-overlapping occurrences of the pair.
void apply_merge(std::vector<std::string>& syms, const SymbolPair& pair,
                 const std::string& merged) {
  size_t write = 0;
  for (size_t read = 0; read < syms.size(); ++read) {
    if (read + 1 < syms.size() && syms[read] == pair.first && syms[read + 1] == pair.second) {
      syms[write++] = merged;
      ++read;
    } else {
      if (write != read) syms[write] = std::move(syms[read]);
      ++write;
    }
  }
  syms.resize(write);
}

struct WordEntry {
  std::vector<std::string> symbols;
  long long freq = 0;
};

}  // namespace

std::vector<std::string> utf8_chars(const std::string& word) {
  std::vector<std::string> chars;
  size_t i = 0;
  while (i < word.size()) {
    size_t len = 1;
    const unsigned char c = static_cast<unsigned char>(word[i]);
    if ((c & 0x80) == 0x00)
      len = 1;
    else if ((c & 0xE0) == 0xC0)
      len = 2;
    else if ((c & 0xF0) == 0xE0)
      len = 3;
    else if ((c & 0xF8) == 0xF0)
      len = 4;
    len = std::min(len, word.size() - i);
    // A truncated/invalid sequence degrades to single bytes.
    for (size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xC0) != 0x80) {
        len = k;
        break;
      }
    }
    chars.push_back(word.substr(i, len));
    i += len;
  }
  return chars;
}

BpeModel learn_bpe(const std::vector<Sentence>& corpus_sides, int num_merges) {
  if (num_merges < 0) throw ConfigError("learn_bpe: negative merge count");

  // Distinct words with frequencies.
  std::unordered_map<std::string, long long> word_freq;
  for (const auto& sentence : corpus_sides)
    for (const auto& token : sentence)
      if (!Vocabulary::is_special(token)) ++word_freq[token];

  std::vector<WordEntry> words;
  words.reserve(word_freq.size());
  for (const auto& [word, freq] : word_freq)
    words.push_back({word_to_symbols(word), freq});

  // Weighted adjacent-pair counts plus an inverted index of which words
  // currently contain each pair. Both are updated in place after every
  // merge instead of being recounted.
  std::map<SymbolPair, long long> counts;
  std::map<SymbolPair, std::set<size_t>> occurs_in;
  for (size_t w = 0; w < words.size(); ++w) {
    const auto& syms = words[w].symbols;
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      SymbolPair p{syms[i], syms[i + 1]};
      counts[p] += words[w].freq;
      occurs_in[p].insert(w);
    }
  }

  BpeModel model;
  for (int round = 0; round < num_merges; ++round) {
    const SymbolPair* best = nullptr;
    long long best_count = 0;
    for (const auto& [pair, count] : counts) {
      if (count < 2) continue;
      if (Vocabulary::is_special(merge_symbol(pair.first, pair.second))) continue;
      if (count > best_count) {  // map order makes the first hit the tie winner
        best = &pair;
        best_count = count;
      }
    }
    if (!best) break;

    const SymbolPair chosen = *best;
    const std::string merged = merge_symbol(chosen.first, chosen.second);
    model.merges.push_back(chosen);

    const std::set<size_t> affected = occurs_in[chosen];
    for (size_t w : affected) {
      auto& entry = words[w];
      // Retract this word's contribution, rewrite it, re-add.
      for (size_t i = 0; i + 1 < entry.symbols.size(); ++i) {
        SymbolPair p{entry.symbols[i], entry.symbols[i + 1]};
        auto it = counts.find(p);
        it->second -= entry.freq;
        if (it->second <= 0) counts.erase(it);
        occurs_in[p].erase(w);
      }
      apply_merge(entry.symbols, chosen, merged);
      for (size_t i = 0; i + 1 < entry.symbols.size(); ++i) {
        SymbolPair p{entry.symbols[i], entry.symbols[i + 1]};
        counts[p] += entry.freq;
        occurs_in[p].insert(w);
      }
    }
  }
  return model;
}

Sentence apply_bpe(const BpeModel& model, const Sentence& sentence) {
  Sentence out;
  for (const auto& word : sentence) {
    if (Vocabulary::is_special(word)) {
      out.push_back(word);
      continue;
    }
    std::vector<std::string> syms = word_to_symbols(word);
    for (const auto& merge : model.merges) {
      if (syms.size() < 2) break;
      apply_merge(syms, merge, merge_symbol(merge.first, merge.second));
    }
    out.insert(out.end(), syms.begin(), syms.end());
  }
  return out;
}

BpeDecodeResult decode_bpe(const Sentence& tokens) {
  BpeDecodeResult result;
  std::string word;
  const size_t mlen = 2;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    const bool continues =
        tok.size() >= mlen && tok.compare(tok.size() - mlen, mlen, BpeModel::kMarker) == 0;
    word += continues ? tok.substr(0, tok.size() - mlen) : tok;
    if (!continues) {
      result.sentence.push_back(word);
      word.clear();
    } else if (i + 1 == tokens.size()) {
      result.sentence.push_back(word);
      result.dangling_marker = true;
    }
  }
  return result;
}

void BpeModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write BPE model: " + path);
  out << "version 1\n";
  for (const auto& [left, right] : merges) out << left << ' ' << right << '\n';
}

BpeModel BpeModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open BPE model: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "version 1")
    throw DataError("unsupported BPE model header in " + path);
  BpeModel model;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t space = line.find(' ');
    if (space == std::string::npos || space + 1 >= line.size())
      throw DataError("malformed BPE merge at line " + std::to_string(line_no) + " in " + path);
    model.merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return model;
}

}  // namespace nmt
