#include "nmt/toytask.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "nmt/rng.hpp"

namespace nmt {

namespace {

constexpr std::size_t kMaxVocab = 26 * 26;

std::string base26(std::size_t i) {
  std::string s;
  s += static_cast<char>('a' + (i / 26) % 26);
  s += static_cast<char>('a' + i % 26);
  return s;
}

std::vector<std::string> sample_source(Rng& rng, const ToyTaskSpec& spec) {
  const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
  std::vector<std::string> words;
  words.reserve(len);
  for (std::size_t i = 0; i < len; ++i) {
    words.push_back(toy_source_word(rng.below(spec.source_vocab)));
  }
  return words;
}

std::vector<std::string> translate_words(Rng& rng, const ToyTaskSpec& spec,
                                         const ToyDictionary& dict,
                                         const std::vector<std::string>& source) {
  std::vector<std::string> target;
  target.reserve(source.size());
  for (const auto& word : source) {
    const auto& options = dict.at(word);
    if (options.size() == 1) {
      target.push_back(options[0].first);
    } else {
      const double u = rng.uniform();
      double cum = 0.0;
      std::size_t pick = options.size() - 1;
      for (std::size_t i = 0; i < options.size(); ++i) {
        cum += options[i].second;
        if (u < cum) {
          pick = i;
          break;
        }
      }
      target.push_back(options[pick].first);
    }
  }
  if (spec.reorder == ReorderRule::SwapAdjacentPairs) {
    for (std::size_t i = 0; i + 1 < target.size(); i += 2) {
      std::swap(target[i], target[i + 1]);
    }
  }
  return target;
}

std::string joined(const std::vector<std::string>& words) { return join_tokens(words); }

}  // namespace

void ToyTaskSpec::validate() const {
  if (source_vocab == 0 || source_vocab > kMaxVocab || target_vocab == 0 ||
      target_vocab > kMaxVocab) {
    throw std::invalid_argument("ToyTaskSpec: vocab sizes must be in 1.." +
                                std::to_string(kMaxVocab));
  }
  if (min_len == 0 || min_len > max_len) {
    throw std::invalid_argument("ToyTaskSpec: need 1 <= min_len <= max_len");
  }
  if (ambiguity_rate < 0.0 || ambiguity_rate > 1.0) {
    throw std::invalid_argument("ToyTaskSpec: ambiguity_rate must be in [0,1]");
  }
  if (target_vocab < 2 && ambiguity_rate > 0.0) {
    throw std::invalid_argument("ToyTaskSpec: ambiguity needs at least 2 target words");
  }
}

std::string toy_source_word(std::size_t index) { return "s" + base26(index); }
std::string toy_target_word(std::size_t index) { return "t" + base26(index); }

ToyDictionary build_toy_dictionary(const ToyTaskSpec& spec) {
  spec.validate();
  ToyDictionary dict;
  Rng rng(Rng::mix(spec.seed, 0xd1c7));
  std::vector<std::size_t> order(spec.source_vocab);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const std::size_t n_ambiguous =
      static_cast<std::size_t>(std::llround(spec.ambiguity_rate * spec.source_vocab));
  std::unordered_set<std::size_t> ambiguous(order.begin(),
                                            order.begin() + std::min(n_ambiguous, order.size()));
  for (std::size_t i = 0; i < spec.source_vocab; ++i) {
    const std::size_t primary = i % spec.target_vocab;
    std::vector<std::pair<std::string, double>> options;
    if (ambiguous.count(i)) {
      std::size_t alt = rng.below(spec.target_vocab);
      while (alt == primary) alt = rng.below(spec.target_vocab);
      options = {{toy_target_word(primary), 0.5}, {toy_target_word(alt), 0.5}};
    } else {
      options = {{toy_target_word(primary), 1.0}};
    }
    dict.emplace(toy_source_word(i), std::move(options));
  }
  return dict;
}

ToyCorpora gen_toy(const ToyTaskSpec& spec, std::size_t n_train, std::size_t n_valid,
                   std::size_t n_test) {
  spec.validate();
  const auto dict = build_toy_dictionary(spec);
  ToyCorpora out;
  out.train.name = "toy.train";
  out.valid.name = "toy.valid";
  out.test.name = "toy.test";

  std::unordered_set<std::string> seen_sources;
  const std::size_t sizes[3] = {n_train, n_valid, n_test};
  ParallelCorpus* corpora[3] = {&out.train, &out.valid, &out.test};
  for (std::size_t split = 0; split < 3; ++split) {
    Rng rng(Rng::mix(spec.seed, 0x5b17 + split));
    ParallelCorpus& corpus = *corpora[split];
    std::size_t attempts = 0;
    while (corpus.pairs.size() < sizes[split]) {
      if (++attempts > sizes[split] * 200 + 1000) {
        throw std::runtime_error("gen_toy: cannot draw disjoint splits; task space too small");
      }
      auto source = sample_source(rng, spec);
      // splits are made source-disjoint by rejection against earlier splits
      if (split > 0 && seen_sources.count(joined(source))) continue;
      SentencePair pair;
      pair.target = translate_words(rng, spec, dict, source);
      pair.source = std::move(source);
      corpus.pairs.push_back(std::move(pair));
    }
    if (split == 0 || split == 1) {
      for (const auto& pair : corpus.pairs) seen_sources.insert(joined(pair.source));
    }
  }
  return out;
}

std::vector<std::vector<std::string>> gen_toy_monolingual(const ToyTaskSpec& spec,
                                                          std::size_t n) {
  spec.validate();
  const auto dict = build_toy_dictionary(spec);
  Rng rng(Rng::mix(spec.seed, 0x3030));
  std::vector<std::vector<std::string>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(translate_words(rng, spec, dict, sample_source(rng, spec)));
  }
  return out;
}

}  // namespace nmt
