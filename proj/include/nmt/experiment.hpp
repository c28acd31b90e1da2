#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nmt/diversify.hpp"
#include "nmt/metrics.hpp"
#include "nmt/toytask.hpp"

namespace nmt {

enum class Arm {
  Baseline,
  Diversified,
  ForwardOnly,
  BackwardOnly,
  Ensemble,
  FixedInit,
  BackTranslation,
};

const char* arm_name(Arm arm);
std::optional<Arm> arm_from_name(const std::string& name);

// Declarative experiment: a synthetic task (or external corpora), tokenizer
// settings, model/budget settings, diversification settings, and the arms to
// run for each seed.
struct ExperimentConfig {
  ToyTaskSpec task;
  std::size_t n_train = 2000;
  std::size_t n_valid = 200;
  std::size_t n_test = 300;
  std::size_t n_mono = 300;

  // when set, these replace the generated toy corpora
  std::string external_train_src, external_train_tgt;
  std::string external_valid_src, external_valid_tgt;
  std::string external_test_src, external_test_tgt;
  std::string external_mono_tgt;

  std::size_t bpe_merges = 200;
  bool shared_bpe = true;

  ModelConfig teacher_model;  // vocab injected at run time
  TrainOptions teacher_train;
  ModelConfig student_model;
  TrainOptions student_train;

  std::size_t k = 3;
  std::size_t n_rounds = 1;
  bool scale_student_steps = true;
  bool average_teacher_checkpoints = false;

  DecodeConfig generation;
  DecodeConfig evaluation;

  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<Arm> arms = {Arm::Baseline, Arm::Diversified};

  std::size_t probe_sentences = 32;  // validation prefix used for confidence stats
  bool save_student_checkpoints = false;

  void validate() const;
};

// JSON round-trip with defaults for missing keys; unknown keys are an error.
ExperimentConfig experiment_config_from_json(const std::string& json_text);
std::string experiment_config_to_json(const ExperimentConfig& config);  // canonical
// FNV-1a 64-bit hash (hex) of the canonical resolved config.
std::string experiment_config_hash(const ExperimentConfig& config);

struct ReportRow {
  std::string arm;
  std::uint64_t seed = 0;
  double test_bleu = std::numeric_limits<double>::quiet_NaN();
  double valid_ppl = std::numeric_limits<double>::quiet_NaN();
  double dup_rate = std::numeric_limits<double>::quiet_NaN();
  double teacher_self = std::numeric_limits<double>::quiet_NaN();
  double teacher_ensemble_max = std::numeric_limits<double>::quiet_NaN();
  double student_on_teachers = std::numeric_limits<double>::quiet_NaN();
  double wallclock_s = 0.0;
  std::string config_hash;
  std::string error;  // empty on success; a failed arm still emits its row
};

struct Report {
  std::vector<ReportRow> rows;
  std::string config_hash;
  std::string manifest_json;
};

// Runs every configured arm for every seed (cells fan out across threads;
// results are independent of the thread count). Failed cells carry an error
// marker instead of aborting the run.
Report run_experiment(const ExperimentConfig& config, const std::string& out_dir = "");

// One run_experiment per value of "k" or "n_rounds", rows prefixed with the
// swept value.
struct SweepRow {
  std::size_t value = 0;
  ReportRow row;
};
struct SweepReport {
  std::string parameter;
  std::vector<SweepRow> rows;
};
SweepReport sweep(const ExperimentConfig& base, const std::string& parameter,
                  const std::vector<std::size_t>& values, const std::string& out_dir = "");

std::string report_to_csv(const Report& report);
std::string report_to_markdown(const Report& report);
std::string sweep_to_csv(const SweepReport& report);
std::string sweep_to_markdown(const SweepReport& report);

// report.csv, report.md, manifest.json under out_dir.
void write_report(const Report& report, const std::string& out_dir);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace nmt
