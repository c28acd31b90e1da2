#include "nmt/diversify.hpp"

#include <cmath>
#include <stdexcept>

#include "nmt/threading.hpp"

namespace nmt {

namespace {

std::vector<std::vector<int>> encode_side(const std::vector<const std::vector<std::string>*>& side,
                                          const Vocabulary& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(side.size());
  for (const auto* tokens : side) out.push_back(vocab.encode(*tokens));
  return out;
}

TranslationModel generation_model(const TrainResult& result, const DiversifyConfig& config) {
  TranslationModel model = result.model;
  if (config.average_teacher_checkpoints && !result.last_checkpoints.empty()) {
    model.params = average_checkpoints(result.last_checkpoints);
  }
  return model;
}

}  // namespace

void DiversifyConfig::validate() const {
  if (k == 0) throw std::invalid_argument("DiversifyConfig: k must be positive");
  if (n_rounds == 0) throw std::invalid_argument("DiversifyConfig: n_rounds must be positive");
  teacher_config.validate();
  student_config.validate();
  if (teacher_config.vocab != student_config.vocab) {
    throw std::invalid_argument("DiversifyConfig: teacher and student must share a vocabulary");
  }
}

std::uint64_t teacher_seed(std::uint64_t base_seed, std::size_t round, Direction direction,
                           std::size_t index) {
  std::uint64_t h = Rng::mix(base_seed, 0x7e4c + round);
  h = Rng::mix(h, direction == Direction::SourceToTarget ? 1 : 2);
  return Rng::mix(h, index);
}

TrainResult train_baseline(const ParallelCorpus& train_corpus, const ParallelCorpus& valid,
                           const ModelConfig& config, const TrainOptions& options,
                           std::uint64_t seed) {
  return train(train_corpus, valid, config, seed, options, Direction::SourceToTarget);
}

DiversifyResult data_diverse(const ParallelCorpus& original, const ParallelCorpus& valid,
                             const DiversifyConfig& config) {
  config.validate();
  if (original.empty()) throw std::invalid_argument("data_diverse: original corpus is empty");
  const Vocabulary& vocab = *config.teacher_config.vocab;

  // S and T of Algorithm 1: the original sides are what every round's
  // teachers translate (teachers train on D_{r-1}, but always translate S/T).
  std::vector<const std::vector<std::string>*> original_sources, original_targets;
  for (const auto& pair : original.pairs) {
    original_sources.push_back(&pair.source);
    original_targets.push_back(&pair.target);
  }
  const auto source_ids = encode_side(original_sources, vocab);
  const auto target_ids = encode_side(original_targets, vocab);

  DiversifyResult result;
  ParallelCorpus current = original;
  const ParallelCorpus valid_swapped = swapped(valid);

  struct TeacherJob {
    Direction direction;
    std::size_t index;
  };
  std::vector<TeacherJob> jobs;
  if (config.direction_mode != DirectionMode::BackwardOnly) {
    for (std::size_t i = 0; i < config.k; ++i) {
      jobs.push_back({Direction::SourceToTarget, i});
    }
  }
  if (config.direction_mode != DirectionMode::ForwardOnly) {
    for (std::size_t i = 0; i < config.k; ++i) {
      jobs.push_back({Direction::TargetToSource, i});
    }
  }

  for (std::size_t round = 1; round <= config.n_rounds; ++round) {
    const ParallelCorpus current_swapped = swapped(current);
    std::vector<TrainResult> trained(jobs.size());
    std::vector<std::string> failures(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t j) {
      const TeacherJob& job = jobs[j];
      const std::uint64_t seed = teacher_seed(config.base_seed, round, job.direction, job.index);
      TrainOptions opts = config.teacher_train;
      if (config.init_mode == InitMode::FixedSeed) opts.init_seed = config.fixed_init_seed;
      try {
        if (job.direction == Direction::SourceToTarget) {
          trained[j] = train(current, valid, config.teacher_config, seed, opts,
                             Direction::SourceToTarget);
        } else {
          trained[j] = train(current_swapped, valid_swapped, config.teacher_config, seed, opts,
                             Direction::TargetToSource);
        }
      } catch (const std::exception& e) {
        failures[j] = e.what();
      }
    });
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (!failures[j].empty()) {
        throw std::runtime_error(
            "data_diverse: teacher training failed (round " + std::to_string(round) + ", " +
            (jobs[j].direction == Direction::SourceToTarget ? "forward" : "backward") +
            ", index " + std::to_string(jobs[j].index) + "): " + failures[j]);
      }
    }

    // translate the ORIGINAL sides with the round's teachers
    std::vector<ParallelCorpus> synthetic(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t j) {
      const TeacherJob& job = jobs[j];
      const TranslationModel model = generation_model(trained[j], config);
      TransformerSeq2Seq wrapper(model);
      ParallelCorpus& out = synthetic[j];
      if (job.direction == Direction::SourceToTarget) {
        const auto translations = translate_corpus(wrapper, source_ids, config.generation);
        out.name = "fwd" + std::to_string(job.index);
        out.pairs.resize(translations.size());
        for (std::size_t s = 0; s < translations.size(); ++s) {
          out.pairs[s].source = *original_sources[s];
          out.pairs[s].target = vocab.decode(translations[s]);
          out.pairs[s].provenance = {ProvenanceKind::SyntheticForward,
                                     static_cast<std::uint32_t>(round),
                                     static_cast<std::uint32_t>(job.index)};
        }
      } else {
        const auto translations = translate_corpus(wrapper, target_ids, config.generation);
        out.name = "bwd" + std::to_string(job.index);
        out.pairs.resize(translations.size());
        for (std::size_t s = 0; s < translations.size(); ++s) {
          out.pairs[s].source = vocab.decode(translations[s]);
          out.pairs[s].target = *original_targets[s];
          out.pairs[s].provenance = {ProvenanceKind::SyntheticBackward,
                                     static_cast<std::uint32_t>(round),
                                     static_cast<std::uint32_t>(job.index)};
        }
      }
    });

    std::vector<ParallelCorpus> to_merge;
    to_merge.push_back(std::move(current));
    for (auto& corpus : synthetic) to_merge.push_back(std::move(corpus));
    current = merge_dedup(to_merge);
    current.name = original.name + ".round" + std::to_string(round);

    RoundArtifacts artifacts;
    artifacts.round = round;
    artifacts.data = current;
    artifacts.data_stats = stats(current);
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      TeacherRecord record;
      record.direction = jobs[j].direction;
      record.round = round;
      record.index = jobs[j].index;
      record.seed = teacher_seed(config.base_seed, round, jobs[j].direction, jobs[j].index);
      record.best_valid_ppl = trained[j].best_valid_ppl;
      if (config.keep_teachers) {
        record.model = generation_model(trained[j], config);
      }
      artifacts.teachers.push_back(std::move(record));
    }
    result.rounds.push_back(std::move(artifacts));
  }

  // student on D_N
  TrainOptions student_opts = config.student_train;
  if (config.scale_student_steps && !original.empty()) {
    const double ratio =
        static_cast<double>(current.size()) / static_cast<double>(original.size());
    student_opts.steps = static_cast<std::size_t>(
        std::llround(static_cast<double>(student_opts.steps) * ratio));
  }
  result.student_steps = student_opts.steps;
  result.student_seed = Rng::mix(config.base_seed, 0x57d0);
  if (config.init_mode == InitMode::FixedSeed) {
    student_opts.init_seed = config.fixed_init_seed;
  }
  result.student = train(current, valid, config.student_config, result.student_seed, student_opts,
                         Direction::SourceToTarget);
  return result;
}

DirectionAblationResult direction_ablation(const ParallelCorpus& original,
                                           const ParallelCorpus& valid,
                                           const DiversifyConfig& config) {
  DiversifyConfig fwd = config;
  fwd.direction_mode = DirectionMode::ForwardOnly;
  DiversifyConfig bwd = config;
  bwd.direction_mode = DirectionMode::BackwardOnly;
  DirectionAblationResult result;
  result.forward_only = data_diverse(original, valid, fwd);
  result.backward_only = data_diverse(original, valid, bwd);
  return result;
}

ParallelCorpus augment_with_monolingual(const ParallelCorpus& diversified,
                                        const std::vector<std::vector<std::string>>& mono_target,
                                        const std::vector<const TranslationModel*>& backward_teachers,
                                        const DecodeConfig& gen_config,
                                        std::uint32_t round_label) {
  if (backward_teachers.empty()) {
    throw std::invalid_argument("augment_with_monolingual: no backward teachers");
  }
  const auto* vocab = backward_teachers.front()->config.vocab.get();
  for (const auto* teacher : backward_teachers) {
    if (teacher->direction != Direction::TargetToSource) {
      throw std::invalid_argument("augment_with_monolingual: teacher is not a backward model");
    }
    if (teacher->config.vocab.get() != vocab) {
      throw std::invalid_argument("augment_with_monolingual: vocabulary mismatch among teachers");
    }
  }

  std::vector<std::vector<int>> mono_ids;
  mono_ids.reserve(mono_target.size());
  for (const auto& tokens : mono_target) mono_ids.push_back(vocab->encode(tokens));

  std::vector<ParallelCorpus> to_merge;
  to_merge.push_back(diversified);
  for (std::size_t i = 0; i < backward_teachers.size(); ++i) {
    TransformerSeq2Seq wrapper(*backward_teachers[i]);
    const auto translations = translate_corpus(wrapper, mono_ids, gen_config);
    ParallelCorpus synth;
    synth.name = "mono" + std::to_string(i);
    synth.pairs.resize(translations.size());
    for (std::size_t s = 0; s < translations.size(); ++s) {
      synth.pairs[s].source = vocab->decode(translations[s]);
      synth.pairs[s].target = mono_target[s];
      synth.pairs[s].provenance = {ProvenanceKind::MonolingualBackward, round_label,
                                   static_cast<std::uint32_t>(i)};
    }
    to_merge.push_back(std::move(synth));
  }
  ParallelCorpus merged = merge_dedup(to_merge);
  merged.name = diversified.name + "+mono";
  return merged;
}

}  // namespace nmt
