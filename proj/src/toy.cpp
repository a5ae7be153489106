#include "nmt/toy.hpp"

#include <algorithm>
#include <unordered_set>

#include "nmt/error.hpp"
#include "nmt/rng.hpp"

namespace nmt {

namespace {

// Words are fixed-width base-10 spellings: source words over 'a'..'j',
// target words over 'k'..'t'. Disjoint surfaces keep word-level BLEU
// honest for substitution tasks.
int spell_width(int vocab_size) {
  int width = 1;
  for (int top = vocab_size - 1; top >= 10; top /= 10) ++width;
  return std::max(width, 2);
}

std::string spell(int index, char base_letter, int width) {
  std::string word(static_cast<size_t>(width), base_letter);
  for (int pos = width - 1; pos >= 0; --pos) {
    word[static_cast<size_t>(pos)] = static_cast<char>(base_letter + index % 10);
    index /= 10;
  }
  return word;
}

int unspell(const std::string& word, char base_letter, int width, int vocab_size) {
  if (static_cast<int>(word.size()) != width)
    throw DataError("toy transform: unexpected word " + word);
  int index = 0;
  for (char c : word) {
    if (c < base_letter || c >= base_letter + 10)
      throw DataError("toy transform: unexpected word " + word);
    index = index * 10 + (c - base_letter);
  }
  if (index >= vocab_size) throw DataError("toy transform: unexpected word " + word);
  return index;
}

}  // namespace

std::string toy_task_name(ToyTask task) {
  switch (task) {
    case ToyTask::kReverseMap:
      return "reverse_map";
    case ToyTask::kCopy:
      return "copy";
    case ToyTask::kShiftMap:
      return "shift_map";
  }
  throw ConfigError("unknown toy task value");
}

ToyTask parse_toy_task(const std::string& name) {
  if (name == "reverse_map") return ToyTask::kReverseMap;
  if (name == "copy") return ToyTask::kCopy;
  if (name == "shift_map") return ToyTask::kShiftMap;
  throw ConfigError("unknown toy task: " + name);
}

void ToyTaskSpec::validate() const {
  if (vocab_size < 2) throw ConfigError("toy vocab_size too small for a bijective token map");
  if (min_length < 1) throw ConfigError("toy min_length must be positive");
  if (max_length < min_length) throw ConfigError("toy max_length must be at least min_length");
  if (train_pairs < 1 || dev_pairs < 1 || test_pairs < 1 || monolingual < 1)
    throw ConfigError("toy corpus counts must be positive");
}

Sentence toy_transform(const ToyTaskSpec& spec, const Sentence& source) {
  if (spec.task == ToyTask::kCopy) return source;
  const int width = spell_width(spec.vocab_size);
  Sentence target;
  target.reserve(source.size());
  for (const auto& word : source) {
    const int index = unspell(word, 'a', width, spec.vocab_size);
    target.push_back(spell((index + 1) % spec.vocab_size, 'k', width));
  }
  if (spec.task == ToyTask::kReverseMap) std::reverse(target.begin(), target.end());
  return target;
}

ToyData gen_toy_corpus(const ToyTaskSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int width = spell_width(spec.vocab_size);

  const auto draw_source = [&] {
    const int len =
        spec.min_length +
        static_cast<int>(rng.next_below(static_cast<uint64_t>(spec.max_length - spec.min_length + 1)));
    Sentence s;
    s.reserve(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i)
      s.push_back(spell(static_cast<int>(rng.next_below(static_cast<uint64_t>(spec.vocab_size))),
                        'a', width));
    return s;
  };

  ToyData data;
  std::unordered_set<std::string> held_out;  // train plus already-drawn dev/test sources
  for (int i = 0; i < spec.train_pairs; ++i) {
    Sentence src = draw_source();
    held_out.insert(join_tokens(src));
    data.train.pairs.push_back({src, toy_transform(spec, src), Origin::kAuthentic});
  }

  const auto draw_disjoint = [&] {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      Sentence src = draw_source();
      if (held_out.insert(join_tokens(src)).second) return src;
    }
    throw DataError("toy sentence space too small for disjoint dev/test splits");
  };
  for (int i = 0; i < spec.dev_pairs; ++i) {
    Sentence src = draw_disjoint();
    data.dev.pairs.push_back({src, toy_transform(spec, src), Origin::kAuthentic});
  }
  for (int i = 0; i < spec.test_pairs; ++i) {
    Sentence src = draw_disjoint();
    data.test.pairs.push_back({src, toy_transform(spec, src), Origin::kAuthentic});
  }

  data.monolingual.sentences.reserve(static_cast<size_t>(spec.monolingual));
  for (int i = 0; i < spec.monolingual; ++i)
    data.monolingual.sentences.push_back(toy_transform(spec, draw_source()));
  return data;
}

}  // namespace nmt
