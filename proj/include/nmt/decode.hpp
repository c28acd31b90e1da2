#pragma once

#include <memory>
#include <vector>

#include "nmt/model.hpp"
#include "nmt/rng.hpp"

namespace nmt {

enum class DecodeMode { Greedy, Beam, Sample };

struct DecodeConfig {
  std::size_t beam_size = 5;
  double length_penalty_alpha = 0.6;
  double max_len_factor = 2.0;  // output length cap = round(factor*source_len) + 10
  DecodeMode mode = DecodeMode::Beam;
  double temperature = 1.0;  // Sample only; must be > 0

  std::size_t max_output_len(std::size_t source_len) const;
};

struct Hypothesis {
  std::vector<int> tokens;  // BOS ... EOS
  double logprob = 0.0;     // sum of token log-probabilities
  double score = 0.0;       // logprob / |Y|^alpha, |Y| = generated tokens excluding BOS

  // ids without BOS/EOS (what goes back into a corpus)
  std::vector<int> stripped() const;
};

// Next-token distribution for one fixed source sentence. `prefix` holds the
// generated ids so far, without BOS; implementations add their own framing.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<double> next_log_probs(const std::vector<int>& prefix) = 0;
};

// Anything decodable: hands out a per-source Scorer. Lets tabular test models
// and real transformers share the search code.
class Seq2SeqModel {
 public:
  virtual ~Seq2SeqModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::unique_ptr<Scorer> scorer(const std::vector<int>& source) const = 0;
};

// Adapter over TranslationModel; the scorer caches the encoder output.
class TransformerSeq2Seq : public Seq2SeqModel {
 public:
  explicit TransformerSeq2Seq(const TranslationModel& model) : model_(&model) {}
  std::size_t vocab_size() const override { return model_->config.vocab_size(); }
  std::unique_ptr<Scorer> scorer(const std::vector<int>& source) const override;

 private:
  const TranslationModel* model_;
};

// Arithmetic mean of the member distributions in probability space, logged
// for scoring. Members must share a vocabulary.
class EnsembleSeq2Seq : public Seq2SeqModel {
 public:
  explicit EnsembleSeq2Seq(std::vector<const Seq2SeqModel*> members);
  std::size_t vocab_size() const override;
  std::unique_ptr<Scorer> scorer(const std::vector<int>& source) const override;

 private:
  std::vector<const Seq2SeqModel*> members_;
};

// Standard beam search. PAD/BOS are never proposed; hitting the length cap
// forces EOS. Deterministic: candidate ties break by lower token id, final
// ties by lower token id then shorter length. When nbest is given it receives
// up to beam_size finished hypotheses, best first.
Hypothesis beam_search(Scorer& scorer, std::size_t source_len, const DecodeConfig& config,
                       std::vector<Hypothesis>* nbest = nullptr);

// Ancestral sampling from the temperature-scaled distribution. Deterministic
// given rng state; logprob/score are under the scaled distribution.
Hypothesis sample_decode(Scorer& scorer, std::size_t source_len, const DecodeConfig& config,
                         Rng& rng);

// Dispatch on config.mode (Greedy runs beam_size 1).
Hypothesis decode_sentence(const Seq2SeqModel& model, const std::vector<int>& source,
                           const DecodeConfig& config, std::uint64_t seed = 0);

// Order-preserving, one output per input (BOS/EOS stripped); fans out across
// sentences with results identical to serial execution. Sample mode derives
// one sub-seed per sentence index from `seed`.
std::vector<std::vector<int>> translate_corpus(const Seq2SeqModel& model,
                                               const std::vector<std::vector<int>>& sources,
                                               const DecodeConfig& config, std::uint64_t seed = 0);

// "index<TAB>score<TAB>tokens" per line.
std::string format_nbest(const std::vector<Hypothesis>& nbest, const Vocabulary& vocab);

// Greedy path plus the model's probability of each generated token (EOS
// included); the building block for the ensemble-correlation statistics.
struct GreedyTrace {
  std::vector<int> tokens;    // generated ids, EOS last (no BOS)
  std::vector<double> probs;  // model probability of each token on its own path
};
GreedyTrace greedy_trace(Scorer& scorer, std::size_t source_len, const DecodeConfig& config);

}  // namespace nmt
