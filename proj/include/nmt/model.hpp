#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nmt/bpe.hpp"
#include "nmt/parameters.hpp"
#include "nmt/rng.hpp"
#include "nmt/tensor.hpp"

namespace nmt {

enum class Direction { SourceToTarget, TargetToSource };

const char* direction_name(Direction d);

// Pre-norm transformer encoder-decoder, sinusoidal positions, optional
// embedding/output-projection tying. Desk-scale defaults.
struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 2;
  std::size_t n_layers = 2;
  std::size_t d_ffn = 128;
  double dropout = 0.3;
  double label_smoothing = 0.1;
  std::size_t max_positions = 256;
  bool tied_embeddings = true;
  std::shared_ptr<const Vocabulary> vocab;

  std::size_t vocab_size() const { return vocab ? vocab->size() : 0; }
  void validate() const;  // throws std::invalid_argument
};

struct TranslationModel {
  ModelConfig config;
  Parameters params;
  Direction direction = Direction::SourceToTarget;
  std::uint64_t seed = 0;
};

// Adam with the inverse-square-root warmup schedule:
// lr(t) = base_lr * min(t / warmup, sqrt(warmup / t)).
struct OptimizerState {
  std::uint64_t t = 0;
  Parameters m;
  Parameters v;
  double base_lr = 1e-3;
  std::uint64_t warmup_steps = 200;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
};

double warmup_inv_sqrt_lr(double base_lr, std::uint64_t warmup, std::uint64_t t);

struct EncodedPair {
  std::vector<int> source;  // no specials; the model frames internally
  std::vector<int> target;
};

using Batch = std::vector<EncodedPair>;
using EncodedCorpus = std::vector<EncodedPair>;

EncodedCorpus encode_corpus(const ParallelCorpus& corpus, const Vocabulary& vocab);

// Deterministic scaled-gaussian init (scale 1/sqrt(d_model)); identical seed
// gives identical parameter bytes.
TranslationModel init_model(const ModelConfig& config, std::uint64_t seed, Direction direction);

// Teacher-forcing logits: row j predicts target_prefix[j] from all source
// positions plus target positions < j (causal).
Tensor forward_logits(const TranslationModel& model, const std::vector<int>& source_ids,
                      const std::vector<int>& target_prefix_ids);

// Encoder output for one source sentence (EOS framing applied internally);
// reusable across decode steps.
Tensor encode_source(const TranslationModel& model, const std::vector<int>& source_ids);

// Log-probabilities of the next token after consuming `prefix` (no BOS/EOS in
// prefix; EOS ends generation). `enc_out` must come from encode_source.
std::vector<double> next_token_log_probs(const TranslationModel& model, const Tensor& enc_out,
                                         const std::vector<int>& prefix);

struct LossResult {
  double loss = 0.0;  // mean over non-PAD gold tokens
  Parameters grads;
  std::size_t tokens = 0;
};

// Label-smoothed cross entropy, mean over non-PAD gold tokens:
// (1-eps)*NLL(gold) + eps*mean-over-vocab NLL. Dropout is applied only when
// dropout_seed is set (masks derived deterministically from it).
LossResult loss_and_grads(const TranslationModel& model, const Batch& batch,
                          double label_smoothing,
                          std::optional<std::uint64_t> dropout_seed = std::nullopt);

void adam_step(Parameters& params, const Parameters& grads, OptimizerState& state);

// exp(mean per-non-PAD-token cross entropy), no smoothing.
double perplexity(const TranslationModel& model, const EncodedCorpus& corpus);

struct Checkpoint {
  ModelConfig config;
  Parameters params;
  OptimizerState optimizer;
  Direction direction = Direction::SourceToTarget;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  double valid_ppl = 0.0;
};

Parameters average_checkpoints(const std::vector<Checkpoint>& checkpoints);

// File format: UTF-8 JSON header (format version, config, vocabulary,
// optimizer scalars, ordered tensor manifest of name/shape/offset), a newline
// and a NUL byte, then the concatenated little-endian IEEE-754 binary64
// payloads in manifest order.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

TranslationModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace nmt
