#pragma once

#include <optional>

#include "nmt/model.hpp"

namespace nmt {

struct TrainOptions {
  std::size_t steps = 400;
  std::size_t batch_tokens = 800;
  std::size_t eval_interval = 50;
  std::size_t keep_checkpoints = 5;
  double base_lr = 1e-3;
  std::uint64_t warmup_steps = 200;
  // Overrides the parameter-init seed while batching/dropout still follow
  // `seed` (fixed-initialization experiments).
  std::optional<std::uint64_t> init_seed;
};

struct TrainLogEntry {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean batch loss since the previous entry
  double valid_ppl = 0.0;
};

struct TrainResult {
  TranslationModel model;  // best-validation parameters (final when no eval ran)
  std::vector<TrainLogEntry> log;
  std::vector<Checkpoint> last_checkpoints;  // oldest first
  double best_valid_ppl = 0.0;
  std::size_t best_step = 0;
  double final_train_loss = 0.0;
};

// Token-budgeted batches over length-sorted buckets, batch order shuffled per
// epoch; Adam with warmup; validation perplexity every eval_interval steps;
// ring of the last keep_checkpoints checkpoints. Deterministic given
// (seed, corpora, config, options). Corpora must already be BPE-applied and
// in-vocabulary.
TrainResult train(const ParallelCorpus& corpus_train, const ParallelCorpus& corpus_valid,
                  const ModelConfig& config, std::uint64_t seed, const TrainOptions& options,
                  Direction direction = Direction::SourceToTarget);

TrainResult train_encoded(const EncodedCorpus& train_set, const EncodedCorpus& valid_set,
                          const ModelConfig& config, std::uint64_t seed,
                          const TrainOptions& options,
                          Direction direction = Direction::SourceToTarget);

}  // namespace nmt
