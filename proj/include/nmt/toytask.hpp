#pragma once

#include <map>
#include <vector>

#include "nmt/corpus.hpp"

namespace nmt {

enum class ReorderRule { None, SwapAdjacentPairs };

// Synthetic translation task: uniform random source sentences, word-by-word
// dictionary translation with optional two-way lexical ambiguity, then an
// optional deterministic reordering. The desk-scale stand-in for a real
// parallel corpus.
struct ToyTaskSpec {
  std::size_t source_vocab = 120;
  std::size_t target_vocab = 130;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  double ambiguity_rate = 0.3;
  ReorderRule reorder = ReorderRule::SwapAdjacentPairs;
  std::uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument
};

// source word -> weighted translation options (probabilities sum to 1)
using ToyDictionary = std::map<std::string, std::vector<std::pair<std::string, double>>>;

ToyDictionary build_toy_dictionary(const ToyTaskSpec& spec);

std::string toy_source_word(std::size_t index);
std::string toy_target_word(std::size_t index);

struct ToyCorpora {
  ParallelCorpus train;
  ParallelCorpus valid;
  ParallelCorpus test;
};

// Deterministic given spec.seed; the three splits come from independent RNG
// substreams and are source-disjoint by rejection.
ToyCorpora gen_toy(const ToyTaskSpec& spec, std::size_t n_train, std::size_t n_valid,
                   std::size_t n_test);

// Extra target-side sentences from the same generating process (disjoint
// substream), for back-translation experiments.
std::vector<std::vector<std::string>> gen_toy_monolingual(const ToyTaskSpec& spec, std::size_t n);

}  // namespace nmt
