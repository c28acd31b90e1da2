#include "nmt/train.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace nmt {

namespace {

std::size_t pair_cost(const EncodedPair& p) {
  return p.source.size() + p.target.size() + 2;  // EOS framing on both streams
}

std::vector<Batch> build_batches(const EncodedCorpus& corpus, std::size_t batch_tokens) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pair_cost(corpus[a]) < pair_cost(corpus[b]);
  });
  std::vector<Batch> batches;
  Batch current;
  std::size_t current_cost = 0;
  for (std::size_t idx : order) {
    const std::size_t cost = pair_cost(corpus[idx]);
    if (!current.empty() && current_cost + cost > batch_tokens) {
      batches.push_back(std::move(current));
      current.clear();
      current_cost = 0;
    }
    current.push_back(corpus[idx]);
    current_cost += cost;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

}  // namespace

TrainResult train_encoded(const EncodedCorpus& train_set, const EncodedCorpus& valid_set,
                          const ModelConfig& config, std::uint64_t seed,
                          const TrainOptions& options, Direction direction) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: training corpus is empty");

  const std::uint64_t init_seed = options.init_seed.value_or(seed);
  TrainResult result;
  result.model = init_model(config, init_seed, direction);
  if (options.steps == 0) return result;

  OptimizerState opt;
  opt.base_lr = options.base_lr;
  opt.warmup_steps = options.warmup_steps;

  const auto batches = build_batches(train_set, options.batch_tokens);
  Rng batch_rng(Rng::mix(seed, 0xba7c));
  const std::uint64_t dropout_base = Rng::mix(seed, 0xd409);

  std::vector<std::size_t> epoch_order(batches.size());
  std::iota(epoch_order.begin(), epoch_order.end(), 0);
  std::size_t epoch_pos = epoch_order.size();  // forces a shuffle on first step

  std::deque<Checkpoint> ring;
  Parameters best_params;
  bool have_best = false;
  result.best_valid_ppl = std::numeric_limits<double>::infinity();

  double loss_acc = 0.0;
  std::size_t loss_n = 0;

  for (std::size_t step = 1; step <= options.steps; ++step) {
    if (epoch_pos >= epoch_order.size()) {
      batch_rng.shuffle(epoch_order);
      epoch_pos = 0;
    }
    const Batch& batch = batches[epoch_order[epoch_pos++]];
    const auto res = loss_and_grads(result.model, batch, config.label_smoothing,
                                    Rng::mix(dropout_base, step));
    adam_step(result.model.params, res.grads, opt);
    loss_acc += res.loss;
    ++loss_n;

    const bool eval_now =
        (options.eval_interval > 0 && step % options.eval_interval == 0) || step == options.steps;
    if (eval_now && !valid_set.empty()) {
      const double ppl = perplexity(result.model, valid_set);
      TrainLogEntry entry;
      entry.step = step;
      entry.train_loss = loss_acc / static_cast<double>(loss_n);
      entry.valid_ppl = ppl;
      result.log.push_back(entry);
      loss_acc = 0.0;
      loss_n = 0;

      Checkpoint ckpt;
      ckpt.config = config;
      ckpt.params = result.model.params;
      ckpt.optimizer = opt;
      ckpt.direction = direction;
      ckpt.seed = seed;
      ckpt.step = step;
      ckpt.valid_ppl = ppl;
      ring.push_back(std::move(ckpt));
      while (ring.size() > options.keep_checkpoints) ring.pop_front();

      if (ppl < result.best_valid_ppl) {
        result.best_valid_ppl = ppl;
        result.best_step = step;
        best_params = result.model.params;
        have_best = true;
      }
    }
  }

  if (loss_n > 0) {
    result.final_train_loss = loss_acc / static_cast<double>(loss_n);
  } else if (!result.log.empty()) {
    result.final_train_loss = result.log.back().train_loss;
  }
  result.last_checkpoints.assign(ring.begin(), ring.end());
  if (have_best) result.model.params = std::move(best_params);
  return result;
}

TrainResult train(const ParallelCorpus& corpus_train, const ParallelCorpus& corpus_valid,
                  const ModelConfig& config, std::uint64_t seed, const TrainOptions& options,
                  Direction direction) {
  config.validate();
  return train_encoded(encode_corpus(corpus_train, *config.vocab),
                       encode_corpus(corpus_valid, *config.vocab), config, seed, options,
                       direction);
}

}  // namespace nmt
