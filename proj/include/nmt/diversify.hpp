#pragma once

#include "nmt/corpus.hpp"
#include "nmt/decode.hpp"
#include "nmt/train.hpp"

namespace nmt {

enum class DirectionMode { Bidirectional, ForwardOnly, BackwardOnly };
enum class InitMode { RandomSeeds, FixedSeed };

// Multi-round multi-teacher data diversification: per round, train k forward
// and k backward teachers on the previous round's data, translate the
// ORIGINAL source/target sides with them, merge with dedup, and finally train
// the student on the last round's data.
struct DiversifyConfig {
  std::size_t k = 3;
  std::size_t n_rounds = 1;
  DirectionMode direction_mode = DirectionMode::Bidirectional;
  InitMode init_mode = InitMode::RandomSeeds;
  std::uint64_t fixed_init_seed = 0;  // shared init for every model under FixedSeed

  ModelConfig teacher_config;
  TrainOptions teacher_train;
  ModelConfig student_config;
  TrainOptions student_train;
  DecodeConfig generation;  // synthetic-data decoding (beam 5 default)

  std::uint64_t base_seed = 1;
  // Scale the student's step budget by |D_N| / |D_0| so epochs over the data
  // stay comparable to the baseline.
  bool scale_student_steps = true;
  bool keep_teachers = false;  // keep teacher parameters in the artifacts
  // Decode synthetic data from the mean of each teacher's last checkpoints
  // instead of its best-validation checkpoint.
  bool average_teacher_checkpoints = false;

  void validate() const;
};

struct TeacherRecord {
  Direction direction = Direction::SourceToTarget;
  std::size_t round = 0;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double best_valid_ppl = 0.0;
  TranslationModel model;  // parameters cleared unless keep_teachers is set
};

struct RoundArtifacts {
  std::size_t round = 0;
  ParallelCorpus data;  // D_r
  CorpusStats data_stats;
  std::vector<TeacherRecord> teachers;
};

struct DiversifyResult {
  TrainResult student;
  std::vector<RoundArtifacts> rounds;
  std::size_t student_steps = 0;  // after scaling
  std::uint64_t student_seed = 0;
};

std::uint64_t teacher_seed(std::uint64_t base_seed, std::size_t round, Direction direction,
                           std::size_t index);

// Corpora must be BPE-applied and in-vocabulary; `original` carries Original
// provenance. Teacher training failures abort with the offending (round,
// direction, index) in the message.
DiversifyResult data_diverse(const ParallelCorpus& original, const ParallelCorpus& valid,
                             const DiversifyConfig& config);

// The single-model comparator.
TrainResult train_baseline(const ParallelCorpus& train_corpus, const ParallelCorpus& valid,
                           const ModelConfig& config, const TrainOptions& options,
                           std::uint64_t seed);

struct DirectionAblationResult {
  DiversifyResult forward_only;
  DiversifyResult backward_only;
};

DirectionAblationResult direction_ablation(const ParallelCorpus& original,
                                           const ParallelCorpus& valid,
                                           const DiversifyConfig& config);

// merge_dedup(diversified, (M_i(T_mono), T_mono) for each backward teacher),
// MonolingualBackward provenance. Teachers must share one vocabulary.
ParallelCorpus augment_with_monolingual(const ParallelCorpus& diversified,
                                        const std::vector<std::vector<std::string>>& mono_target,
                                        const std::vector<const TranslationModel*>& backward_teachers,
                                        const DecodeConfig& gen_config,
                                        std::uint32_t round_label = 1);

}  // namespace nmt
