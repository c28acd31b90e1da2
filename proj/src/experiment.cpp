#include "nmt/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "nmt/bpe.hpp"
#include "nmt/threading.hpp"

namespace nmt {

namespace {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// enum names

const char* reorder_name(ReorderRule r) {
  return r == ReorderRule::SwapAdjacentPairs ? "swap_adjacent_pairs" : "none";
}

ReorderRule reorder_from_name(const std::string& name) {
  if (name == "swap_adjacent_pairs") return ReorderRule::SwapAdjacentPairs;
  if (name == "none") return ReorderRule::None;
  throw std::invalid_argument("unknown reorder rule: " + name);
}

const char* mode_name(DecodeMode m) {
  switch (m) {
    case DecodeMode::Greedy: return "greedy";
    case DecodeMode::Beam: return "beam";
    case DecodeMode::Sample: return "sample";
  }
  return "?";
}

DecodeMode mode_from_name(const std::string& name) {
  if (name == "greedy") return DecodeMode::Greedy;
  if (name == "beam") return DecodeMode::Beam;
  if (name == "sample") return DecodeMode::Sample;
  throw std::invalid_argument("unknown decode mode: " + name);
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw std::invalid_argument("unknown config key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

// ---------------------------------------------------------------------------
// config <-> json

json task_to_json(const ToyTaskSpec& t) {
  return json{{"source_vocab", t.source_vocab},   {"target_vocab", t.target_vocab},
              {"min_len", t.min_len},             {"max_len", t.max_len},
              {"ambiguity_rate", t.ambiguity_rate}, {"reorder", reorder_name(t.reorder)},
              {"seed", t.seed}};
}

ToyTaskSpec task_from_json(const json& j, const ToyTaskSpec& defaults) {
  check_keys(j, {"source_vocab", "target_vocab", "min_len", "max_len", "ambiguity_rate",
                 "reorder", "seed"},
             "task");
  ToyTaskSpec t = defaults;
  t.source_vocab = get_or(j, "source_vocab", t.source_vocab);
  t.target_vocab = get_or(j, "target_vocab", t.target_vocab);
  t.min_len = get_or(j, "min_len", t.min_len);
  t.max_len = get_or(j, "max_len", t.max_len);
  t.ambiguity_rate = get_or(j, "ambiguity_rate", t.ambiguity_rate);
  if (j.count("reorder")) t.reorder = reorder_from_name(j["reorder"].get<std::string>());
  t.seed = get_or(j, "seed", t.seed);
  return t;
}

json model_to_json(const ModelConfig& m) {
  return json{{"d_model", m.d_model},
              {"n_heads", m.n_heads},
              {"n_layers", m.n_layers},
              {"d_ffn", m.d_ffn},
              {"dropout", m.dropout},
              {"label_smoothing", m.label_smoothing},
              {"max_positions", m.max_positions},
              {"tied_embeddings", m.tied_embeddings}};
}

ModelConfig model_from_json(const json& j, const ModelConfig& defaults, const char* where) {
  check_keys(j, {"d_model", "n_heads", "n_layers", "d_ffn", "dropout", "label_smoothing",
                 "max_positions", "tied_embeddings"},
             where);
  ModelConfig m = defaults;
  m.d_model = get_or(j, "d_model", m.d_model);
  m.n_heads = get_or(j, "n_heads", m.n_heads);
  m.n_layers = get_or(j, "n_layers", m.n_layers);
  m.d_ffn = get_or(j, "d_ffn", m.d_ffn);
  m.dropout = get_or(j, "dropout", m.dropout);
  m.label_smoothing = get_or(j, "label_smoothing", m.label_smoothing);
  m.max_positions = get_or(j, "max_positions", m.max_positions);
  m.tied_embeddings = get_or(j, "tied_embeddings", m.tied_embeddings);
  return m;
}

json train_to_json(const TrainOptions& t) {
  return json{{"steps", t.steps},
              {"batch_tokens", t.batch_tokens},
              {"eval_interval", t.eval_interval},
              {"keep_checkpoints", t.keep_checkpoints},
              {"base_lr", t.base_lr},
              {"warmup_steps", t.warmup_steps}};
}

TrainOptions train_from_json(const json& j, const TrainOptions& defaults, const char* where) {
  check_keys(j, {"steps", "batch_tokens", "eval_interval", "keep_checkpoints", "base_lr",
                 "warmup_steps"},
             where);
  TrainOptions t = defaults;
  t.steps = get_or(j, "steps", t.steps);
  t.batch_tokens = get_or(j, "batch_tokens", t.batch_tokens);
  t.eval_interval = get_or(j, "eval_interval", t.eval_interval);
  t.keep_checkpoints = get_or(j, "keep_checkpoints", t.keep_checkpoints);
  t.base_lr = get_or(j, "base_lr", t.base_lr);
  t.warmup_steps = get_or(j, "warmup_steps", t.warmup_steps);
  return t;
}

json decode_to_json(const DecodeConfig& d) {
  return json{{"beam_size", d.beam_size},
              {"length_penalty_alpha", d.length_penalty_alpha},
              {"max_len_factor", d.max_len_factor},
              {"mode", mode_name(d.mode)},
              {"temperature", d.temperature}};
}

DecodeConfig decode_from_json(const json& j, const DecodeConfig& defaults, const char* where) {
  check_keys(j, {"beam_size", "length_penalty_alpha", "max_len_factor", "mode", "temperature"},
             where);
  DecodeConfig d = defaults;
  d.beam_size = get_or(j, "beam_size", d.beam_size);
  d.length_penalty_alpha = get_or(j, "length_penalty_alpha", d.length_penalty_alpha);
  d.max_len_factor = get_or(j, "max_len_factor", d.max_len_factor);
  if (j.count("mode")) d.mode = mode_from_name(j["mode"].get<std::string>());
  d.temperature = get_or(j, "temperature", d.temperature);
  return d;
}

// Tuned so the default experiment (baseline + diversified, k=3, N=1, five
// seeds) finishes in minutes on a laptop while the baseline sits mid-range
// with headroom above and below.
ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.task.source_vocab = 90;
  c.task.target_vocab = 100;
  c.task.min_len = 3;
  c.task.max_len = 6;
  c.task.ambiguity_rate = 0.3;
  c.task.reorder = ReorderRule::SwapAdjacentPairs;
  c.task.seed = 1;
  c.n_valid = 150;
  c.n_test = 150;

  c.bpe_merges = 220;

  ModelConfig m;
  m.d_model = 32;
  m.n_heads = 2;
  m.n_layers = 1;
  m.d_ffn = 64;
  m.dropout = 0.1;
  m.label_smoothing = 0.1;
  m.max_positions = 64;
  m.tied_embeddings = true;
  c.teacher_model = m;
  c.student_model = m;

  TrainOptions t;
  t.steps = 500;
  t.batch_tokens = 1000;
  t.eval_interval = 50;
  t.keep_checkpoints = 5;
  t.base_lr = 7.5e-3;
  t.warmup_steps = 60;
  c.teacher_train = t;
  c.student_train = t;

  c.generation.beam_size = 5;
  c.generation.length_penalty_alpha = 0.6;
  c.evaluation.beam_size = 5;
  c.evaluation.length_penalty_alpha = 0.6;
  c.probe_sentences = 16;
  return c;
}

}  // namespace

const char* arm_name(Arm arm) {
  switch (arm) {
    case Arm::Baseline: return "baseline";
    case Arm::Diversified: return "diversified";
    case Arm::ForwardOnly: return "forward_only";
    case Arm::BackwardOnly: return "backward_only";
    case Arm::Ensemble: return "ensemble";
    case Arm::FixedInit: return "fixed_init";
    case Arm::BackTranslation: return "back_translation";
  }
  return "?";
}

std::optional<Arm> arm_from_name(const std::string& name) {
  for (Arm arm : {Arm::Baseline, Arm::Diversified, Arm::ForwardOnly, Arm::BackwardOnly,
                  Arm::Ensemble, Arm::FixedInit, Arm::BackTranslation}) {
    if (name == arm_name(arm)) return arm;
  }
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  task.validate();
  if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: need at least one seed");
  if (arms.empty()) throw std::invalid_argument("ExperimentConfig: need at least one arm");
  if (k == 0 || n_rounds == 0) {
    throw std::invalid_argument("ExperimentConfig: k and n_rounds must be positive");
  }
  if (external_train_src.empty() && n_train == 0) {
    throw std::invalid_argument("ExperimentConfig: n_train must be positive");
  }
}

ExperimentConfig experiment_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"task", "data", "external", "tokenizer", "teacher", "student", "diversify",
              "generation", "evaluation", "seeds", "arms", "probe_sentences",
              "save_student_checkpoints"},
             "config root");
  ExperimentConfig c = default_experiment_config();
  if (j.count("task")) c.task = task_from_json(j["task"], c.task);
  if (j.count("data")) {
    const auto& d = j["data"];
    check_keys(d, {"n_train", "n_valid", "n_test", "n_mono"}, "data");
    c.n_train = get_or(d, "n_train", c.n_train);
    c.n_valid = get_or(d, "n_valid", c.n_valid);
    c.n_test = get_or(d, "n_test", c.n_test);
    c.n_mono = get_or(d, "n_mono", c.n_mono);
  }
  if (j.count("external")) {
    const auto& e = j["external"];
    check_keys(e,
               {"train_src", "train_tgt", "valid_src", "valid_tgt", "test_src", "test_tgt",
                "mono_tgt"},
               "external");
    c.external_train_src = get_or<std::string>(e, "train_src", "");
    c.external_train_tgt = get_or<std::string>(e, "train_tgt", "");
    c.external_valid_src = get_or<std::string>(e, "valid_src", "");
    c.external_valid_tgt = get_or<std::string>(e, "valid_tgt", "");
    c.external_test_src = get_or<std::string>(e, "test_src", "");
    c.external_test_tgt = get_or<std::string>(e, "test_tgt", "");
    c.external_mono_tgt = get_or<std::string>(e, "mono_tgt", "");
  }
  if (j.count("tokenizer")) {
    const auto& t = j["tokenizer"];
    check_keys(t, {"num_merges", "shared"}, "tokenizer");
    c.bpe_merges = get_or(t, "num_merges", c.bpe_merges);
    c.shared_bpe = get_or(t, "shared", c.shared_bpe);
  }
  if (j.count("teacher")) {
    const auto& t = j["teacher"];
    check_keys(t, {"model", "train"}, "teacher");
    if (t.count("model")) c.teacher_model = model_from_json(t["model"], c.teacher_model, "teacher.model");
    if (t.count("train")) c.teacher_train = train_from_json(t["train"], c.teacher_train, "teacher.train");
  }
  if (j.count("student")) {
    const auto& s = j["student"];
    check_keys(s, {"model", "train"}, "student");
    if (s.count("model")) c.student_model = model_from_json(s["model"], c.student_model, "student.model");
    if (s.count("train")) c.student_train = train_from_json(s["train"], c.student_train, "student.train");
  }
  if (j.count("diversify")) {
    const auto& d = j["diversify"];
    check_keys(d, {"k", "n_rounds", "scale_student_steps", "average_teacher_checkpoints"},
               "diversify");
    c.k = get_or(d, "k", c.k);
    c.n_rounds = get_or(d, "n_rounds", c.n_rounds);
    c.scale_student_steps = get_or(d, "scale_student_steps", c.scale_student_steps);
    c.average_teacher_checkpoints =
        get_or(d, "average_teacher_checkpoints", c.average_teacher_checkpoints);
  }
  if (j.count("generation")) c.generation = decode_from_json(j["generation"], c.generation, "generation");
  if (j.count("evaluation")) c.evaluation = decode_from_json(j["evaluation"], c.evaluation, "evaluation");
  if (j.count("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.count("arms")) {
    c.arms.clear();
    for (const auto& name : j["arms"]) {
      const auto arm = arm_from_name(name.get<std::string>());
      if (!arm) throw std::invalid_argument("unknown arm: " + name.get<std::string>());
      c.arms.push_back(*arm);
    }
  }
  c.probe_sentences = get_or(j, "probe_sentences", c.probe_sentences);
  c.save_student_checkpoints = get_or(j, "save_student_checkpoints", c.save_student_checkpoints);
  c.validate();
  return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json arms = json::array();
  for (Arm arm : c.arms) arms.push_back(arm_name(arm));
  json j;
  j["task"] = task_to_json(c.task);
  j["data"] = json{{"n_train", c.n_train}, {"n_valid", c.n_valid}, {"n_test", c.n_test},
                   {"n_mono", c.n_mono}};
  j["external"] = json{{"train_src", c.external_train_src}, {"train_tgt", c.external_train_tgt},
                       {"valid_src", c.external_valid_src}, {"valid_tgt", c.external_valid_tgt},
                       {"test_src", c.external_test_src},   {"test_tgt", c.external_test_tgt},
                       {"mono_tgt", c.external_mono_tgt}};
  j["tokenizer"] = json{{"num_merges", c.bpe_merges}, {"shared", c.shared_bpe}};
  j["teacher"] = json{{"model", model_to_json(c.teacher_model)},
                      {"train", train_to_json(c.teacher_train)}};
  j["student"] = json{{"model", model_to_json(c.student_model)},
                      {"train", train_to_json(c.student_train)}};
  j["diversify"] = json{{"k", c.k},
                        {"n_rounds", c.n_rounds},
                        {"scale_student_steps", c.scale_student_steps},
                        {"average_teacher_checkpoints", c.average_teacher_checkpoints}};
  j["generation"] = decode_to_json(c.generation);
  j["evaluation"] = decode_to_json(c.evaluation);
  j["seeds"] = c.seeds;
  j["arms"] = arms;
  j["probe_sentences"] = c.probe_sentences;
  j["save_student_checkpoints"] = c.save_student_checkpoints;
  return j.dump(2);
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string experiment_config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(experiment_config_to_json(config))));
  return buf;
}

namespace {

// ---------------------------------------------------------------------------
// data preparation

struct PreparedData {
  ParallelCorpus train_words, valid_words, test_words;
  std::vector<std::vector<std::string>> mono_words;
  BpeModel bpe;
  std::shared_ptr<Vocabulary> vocab;
  ParallelCorpus train_bpe, valid_bpe;
  std::vector<std::vector<int>> test_source_ids;
  std::vector<TokenSeq> test_references;  // word level
  std::vector<std::vector<std::string>> mono_bpe;
  std::vector<std::vector<int>> probe_sources;  // validation prefix, BPE ids
};

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData data;
  if (!config.external_train_src.empty()) {
    data.train_words =
        load_parallel(config.external_train_src, config.external_train_tgt, {}).corpus;
    data.valid_words =
        load_parallel(config.external_valid_src, config.external_valid_tgt, {}).corpus;
    data.test_words = load_parallel(config.external_test_src, config.external_test_tgt, {}).corpus;
    if (!config.external_mono_tgt.empty()) {
      std::ifstream in(config.external_mono_tgt);
      if (!in) throw std::runtime_error("cannot open file: " + config.external_mono_tgt);
      std::string line;
      while (std::getline(in, line)) {
        auto tokens = split_tokens(line);
        if (!tokens.empty()) data.mono_words.push_back(std::move(tokens));
      }
    }
  } else {
    auto corpora = gen_toy(config.task, config.n_train, config.n_valid, config.n_test);
    data.train_words = std::move(corpora.train);
    data.valid_words = std::move(corpora.valid);
    data.test_words = std::move(corpora.test);
    if (config.n_mono > 0) data.mono_words = gen_toy_monolingual(config.task, config.n_mono);
  }

  data.bpe = learn_bpe(data.train_words, config.bpe_merges, config.shared_bpe);
  data.vocab =
      std::make_shared<Vocabulary>(build_vocab(data.bpe, data.train_words, config.shared_bpe));
  data.train_bpe = apply_bpe_corpus(data.bpe, data.train_words);
  data.valid_bpe = apply_bpe_corpus(data.bpe, data.valid_words);

  for (const auto& pair : data.test_words.pairs) {
    data.test_source_ids.push_back(data.vocab->encode(apply_bpe(data.bpe, pair.source)));
    data.test_references.push_back(pair.target);
  }
  for (const auto& sent : data.mono_words) {
    data.mono_bpe.push_back(apply_bpe(data.bpe, sent));
  }
  const std::size_t n_probe = std::min(config.probe_sentences, data.valid_bpe.size());
  for (std::size_t i = 0; i < n_probe; ++i) {
    data.probe_sources.push_back(data.vocab->encode(data.valid_bpe.pairs[i].source));
  }
  return data;
}

ModelConfig with_vocab(ModelConfig m, std::shared_ptr<const Vocabulary> vocab) {
  m.vocab = std::move(vocab);
  return m;
}

DiversifyConfig diversify_config_for(const ExperimentConfig& config, const PreparedData& data,
                                     std::uint64_t seed) {
  DiversifyConfig d;
  d.k = config.k;
  d.n_rounds = config.n_rounds;
  d.teacher_config = with_vocab(config.teacher_model, data.vocab);
  d.teacher_train = config.teacher_train;
  d.student_config = with_vocab(config.student_model, data.vocab);
  d.student_train = config.student_train;
  d.generation = config.generation;
  d.base_seed = seed;
  d.scale_student_steps = config.scale_student_steps;
  d.average_teacher_checkpoints = config.average_teacher_checkpoints;
  d.keep_teachers = true;  // confidence stats need them
  return d;
}

double evaluate_bleu(const Seq2SeqModel& model, const PreparedData& data,
                     const DecodeConfig& eval_config, std::uint64_t seed) {
  const auto translations = translate_corpus(model, data.test_source_ids, eval_config, seed);
  std::vector<TokenSeq> candidates;
  candidates.reserve(translations.size());
  for (const auto& ids : translations) {
    candidates.push_back(decode_bpe(data.vocab->decode(ids), data.bpe.continuation_marker));
  }
  return bleu(candidates, data.test_references).score;
}

void fill_confidence(ReportRow& row, const std::vector<const TranslationModel*>& teacher_models,
                     const TranslationModel* student, const PreparedData& data,
                     const DecodeConfig& eval_config) {
  if (teacher_models.empty() || data.probe_sources.empty()) return;
  std::vector<TransformerSeq2Seq> wrappers;
  wrappers.reserve(teacher_models.size());
  for (const auto* m : teacher_models) wrappers.emplace_back(*m);
  std::vector<const Seq2SeqModel*> teachers;
  for (const auto& w : wrappers) teachers.push_back(&w);
  std::optional<TransformerSeq2Seq> student_wrapper;
  if (student) student_wrapper.emplace(*student);
  const auto stats = confidence_stats(
      teachers, student_wrapper ? &*student_wrapper : nullptr, data.probe_sources, eval_config);
  row.teacher_self = stats.teacher_self;
  row.teacher_ensemble_max = stats.teacher_ensemble_max;
  if (stats.has_student) row.student_on_teachers = stats.student_on_teachers;
}

json teacher_manifest(const std::vector<RoundArtifacts>& rounds) {
  json out = json::array();
  for (const auto& round : rounds) {
    json r;
    r["round"] = round.round;
    r["pairs"] = round.data_stats.pairs;
    r["duplicate_rate"] = round.data_stats.duplicate_rate;
    r["original"] = round.data_stats.original;
    r["synthetic_forward"] = round.data_stats.synthetic_forward;
    r["synthetic_backward"] = round.data_stats.synthetic_backward;
    r["monolingual_backward"] = round.data_stats.monolingual_backward;
    json teachers = json::array();
    for (const auto& t : round.teachers) {
      teachers.push_back(json{{"direction", t.direction == Direction::SourceToTarget ? "forward"
                                                                                     : "backward"},
                              {"round", t.round},
                              {"index", t.index},
                              {"seed", t.seed},
                              {"best_valid_ppl", t.best_valid_ppl}});
    }
    r["teachers"] = std::move(teachers);
    out.push_back(std::move(r));
  }
  return out;
}

struct CellOutcome {
  ReportRow row;
  json manifest;
};

CellOutcome run_cell(const ExperimentConfig& config, const PreparedData& data, Arm arm,
                     std::uint64_t seed, const std::string& out_dir) {
  CellOutcome outcome;
  ReportRow& row = outcome.row;
  row.arm = arm_name(arm);
  row.seed = seed;
  outcome.manifest = json{{"arm", row.arm}, {"seed", seed}};

  const auto maybe_save_student = [&](const TranslationModel& model, const TrainResult& result) {
    if (!config.save_student_checkpoints || out_dir.empty()) return std::string();
    const std::string path =
        out_dir + "/" + row.arm + "_seed" + std::to_string(seed) + ".ckpt";
    Checkpoint ckpt;
    ckpt.config = model.config;
    ckpt.params = model.params;
    ckpt.direction = model.direction;
    ckpt.seed = model.seed;
    ckpt.step = result.best_step;
    ckpt.valid_ppl = result.best_valid_ppl;
    save_checkpoint(ckpt, path);
    return path;
  };

  switch (arm) {
    case Arm::Baseline: {
      const auto result =
          train_baseline(data.train_bpe, data.valid_bpe,
                         with_vocab(config.student_model, data.vocab), config.student_train, seed);
      TransformerSeq2Seq wrapper(result.model);
      row.test_bleu = evaluate_bleu(wrapper, data, config.evaluation, seed);
      row.valid_ppl = result.best_valid_ppl;
      outcome.manifest["student_checkpoint"] = maybe_save_student(result.model, result);
      break;
    }
    case Arm::Diversified:
    case Arm::ForwardOnly:
    case Arm::BackwardOnly:
    case Arm::FixedInit: {
      DiversifyConfig d = diversify_config_for(config, data, seed);
      if (arm == Arm::ForwardOnly) d.direction_mode = DirectionMode::ForwardOnly;
      if (arm == Arm::BackwardOnly) d.direction_mode = DirectionMode::BackwardOnly;
      if (arm == Arm::FixedInit) {
        d.k = 1;  // the fixed-initialization experiment uses k=1
        d.init_mode = InitMode::FixedSeed;
        d.fixed_init_seed = Rng::mix(seed, 0xf17e);
      }
      const auto result = data_diverse(data.train_bpe, data.valid_bpe, d);
      TransformerSeq2Seq wrapper(result.student.model);
      row.test_bleu = evaluate_bleu(wrapper, data, config.evaluation, seed);
      row.valid_ppl = result.student.best_valid_ppl;
      row.dup_rate = result.rounds.back().data_stats.duplicate_rate;
      std::vector<const TranslationModel*> forward_teachers;
      for (const auto& t : result.rounds.back().teachers) {
        if (t.direction == Direction::SourceToTarget) forward_teachers.push_back(&t.model);
      }
      fill_confidence(row, forward_teachers, &result.student.model, data, config.evaluation);
      outcome.manifest["rounds"] = teacher_manifest(result.rounds);
      outcome.manifest["student_seed"] = result.student_seed;
      outcome.manifest["student_steps"] = result.student_steps;
      outcome.manifest["student_checkpoint"] =
          maybe_save_student(result.student.model, result.student);
      break;
    }
    case Arm::Ensemble: {
      const std::size_t n_members = 2 * config.k + 1;
      std::vector<TrainResult> members(n_members);
      for (std::size_t m = 0; m < n_members; ++m) {
        members[m] = train_baseline(data.train_bpe, data.valid_bpe,
                                    with_vocab(config.student_model, data.vocab),
                                    config.student_train, Rng::mix(seed, 0xe5e + m));
      }
      std::vector<TransformerSeq2Seq> wrappers;
      wrappers.reserve(n_members);
      double ppl_sum = 0.0;
      for (const auto& m : members) {
        wrappers.emplace_back(m.model);
        ppl_sum += m.best_valid_ppl;
      }
      std::vector<const Seq2SeqModel*> pointers;
      for (const auto& w : wrappers) pointers.push_back(&w);
      EnsembleSeq2Seq ensemble(pointers);
      row.test_bleu = evaluate_bleu(ensemble, data, config.evaluation, seed);
      row.valid_ppl = ppl_sum / static_cast<double>(n_members);
      std::vector<const TranslationModel*> models;
      for (const auto& m : members) models.push_back(&m.model);
      fill_confidence(row, models, nullptr, data, config.evaluation);
      outcome.manifest["members"] = n_members;
      break;
    }
    case Arm::BackTranslation: {
      if (data.mono_bpe.empty()) {
        throw std::runtime_error("back_translation arm needs monolingual target data");
      }
      DiversifyConfig d = diversify_config_for(config, data, seed);
      const auto result = data_diverse(data.train_bpe, data.valid_bpe, d);
      std::vector<const TranslationModel*> backward;
      for (const auto& t : result.rounds.back().teachers) {
        if (t.direction == Direction::TargetToSource) backward.push_back(&t.model);
      }
      const auto augmented =
          augment_with_monolingual(result.rounds.back().data, data.mono_bpe, backward,
                                   config.generation,
                                   static_cast<std::uint32_t>(config.n_rounds));
      TrainOptions opts = config.student_train;
      if (config.scale_student_steps) {
        const double ratio =
            static_cast<double>(augmented.size()) / static_cast<double>(data.train_bpe.size());
        opts.steps = static_cast<std::size_t>(
            std::llround(static_cast<double>(opts.steps) * ratio));
      }
      const auto student =
          train(augmented, data.valid_bpe, with_vocab(config.student_model, data.vocab),
                Rng::mix(seed, 0xb7), opts, Direction::SourceToTarget);
      TransformerSeq2Seq wrapper(student.model);
      row.test_bleu = evaluate_bleu(wrapper, data, config.evaluation, seed);
      row.valid_ppl = student.best_valid_ppl;
      row.dup_rate = stats(augmented).duplicate_rate;
      std::vector<const TranslationModel*> forward;
      for (const auto& t : result.rounds.back().teachers) {
        if (t.direction == Direction::SourceToTarget) forward.push_back(&t.model);
      }
      fill_confidence(row, forward, &student.model, data, config.evaluation);
      outcome.manifest["rounds"] = teacher_manifest(result.rounds);
      outcome.manifest["augmented_pairs"] = augmented.size();
      outcome.manifest["student_checkpoint"] = maybe_save_student(student.model, student);
      break;
    }
  }
  return outcome;
}

std::string sanitize_error(std::string message) {
  for (char& c : message) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return message;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

Report run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
  config.validate();
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  const std::string hash = experiment_config_hash(config);
  const PreparedData data = prepare_data(config);

  struct Cell {
    Arm arm;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Arm arm : config.arms) {
    for (std::uint64_t seed : config.seeds) cells.push_back({arm, seed});
  }

  std::vector<CellOutcome> outcomes(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    try {
      outcomes[i] = run_cell(config, data, cells[i].arm, cells[i].seed, out_dir);
    } catch (const std::exception& e) {
      outcomes[i].row.arm = arm_name(cells[i].arm);
      outcomes[i].row.seed = cells[i].seed;
      outcomes[i].row.error = sanitize_error(e.what());
      outcomes[i].manifest =
          json{{"arm", outcomes[i].row.arm}, {"seed", cells[i].seed}, {"error", e.what()}};
    }
    outcomes[i].row.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  Report report;
  report.config_hash = hash;
  json cells_manifest = json::array();
  for (auto& outcome : outcomes) {
    outcome.row.config_hash = hash;
    report.rows.push_back(outcome.row);
    cells_manifest.push_back(std::move(outcome.manifest));
  }

  const auto train_stats = stats(data.train_words);
  json manifest;
  manifest["config"] = json::parse(experiment_config_to_json(config));
  manifest["config_hash"] = hash;
  manifest["vocab_size"] = data.vocab->size();
  manifest["bpe_merges"] = data.bpe.merges.size();
  manifest["data"] = json{{"train_pairs", data.train_words.size()},
                          {"valid_pairs", data.valid_words.size()},
                          {"test_pairs", data.test_words.size()},
                          {"mono_sentences", data.mono_words.size()},
                          {"train_mean_source_len", train_stats.mean_source_len}};
  manifest["cells"] = std::move(cells_manifest);
  report.manifest_json = manifest.dump(2);
  return report;
}

std::string report_to_csv(const Report& report) {
  std::string out =
      "arm,seed,test_bleu,valid_ppl,dup_rate,teacher_self,teacher_ensemble_max,"
      "student_on_teachers,wallclock_s,config_hash,error\n";
  for (const auto& r : report.rows) {
    out += r.arm + "," + std::to_string(r.seed) + "," + fmt(r.test_bleu) + "," +
           fmt(r.valid_ppl) + "," + fmt(r.dup_rate) + "," + fmt(r.teacher_self) + "," +
           fmt(r.teacher_ensemble_max) + "," + fmt(r.student_on_teachers) + "," +
           fmt(r.wallclock_s) + "," + r.config_hash + "," + r.error + "\n";
  }
  return out;
}

namespace {

struct ArmSummary {
  std::string arm;
  double bleu_sum = 0.0;
  double ppl_sum = 0.0;
  std::size_t n = 0;
};

}  // namespace

std::string report_to_markdown(const Report& report) {
  std::vector<ArmSummary> summaries;
  auto summary_for = [&](const std::string& arm) -> ArmSummary& {
    for (auto& s : summaries) {
      if (s.arm == arm) return s;
    }
    summaries.push_back({arm, 0.0, 0.0, 0});
    return summaries.back();
  };
  for (const auto& r : report.rows) {
    if (!r.error.empty() || std::isnan(r.test_bleu)) continue;
    auto& s = summary_for(r.arm);
    s.bleu_sum += r.test_bleu;
    s.ppl_sum += std::isnan(r.valid_ppl) ? 0.0 : r.valid_ppl;
    ++s.n;
  }
  double baseline_mean = std::numeric_limits<double>::quiet_NaN();
  for (const auto& s : summaries) {
    if (s.arm == "baseline" && s.n > 0) baseline_mean = s.bleu_sum / double(s.n);
  }

  std::string md = "# Experiment report\n\n";
  md += "- config hash: `" + report.config_hash + "`\n";
  md += "- rows: " + std::to_string(report.rows.size()) + "\n\n";
  md += "## Mean test BLEU by arm\n\n";
  md += "| arm | runs | mean test BLEU | delta vs baseline | mean valid ppl |\n";
  md += "|---|---|---|---|---|\n";
  for (const auto& s : summaries) {
    if (s.n == 0) continue;
    const double mean = s.bleu_sum / double(s.n);
    const double delta = mean - baseline_mean;
    md += "| " + s.arm + " | " + std::to_string(s.n) + " | " + fmt(mean) + " | " +
          (std::isnan(baseline_mean) ? std::string("") : fmt(delta)) + " | " +
          fmt(s.ppl_sum / double(s.n)) + " |\n";
  }
  md += "\n## Per-run results\n\n";
  md += "| arm | seed | test BLEU | valid ppl | dup rate | teacher self | ensemble max | "
        "student on teachers | wallclock (s) | error |\n";
  md += "|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : report.rows) {
    md += "| " + r.arm + " | " + std::to_string(r.seed) + " | " + fmt(r.test_bleu) + " | " +
          fmt(r.valid_ppl) + " | " + fmt(r.dup_rate) + " | " + fmt(r.teacher_self) + " | " +
          fmt(r.teacher_ensemble_max) + " | " + fmt(r.student_on_teachers) + " | " +
          fmt(r.wallclock_s) + " | " + r.error + " |\n";
  }
  return md;
}

SweepReport sweep(const ExperimentConfig& base, const std::string& parameter,
                  const std::vector<std::size_t>& values, const std::string& out_dir) {
  if (values.empty()) throw std::invalid_argument("sweep: empty value list");
  if (parameter != "k" && parameter != "n_rounds") {
    throw std::invalid_argument("sweep: parameter must be 'k' or 'n_rounds'");
  }
  SweepReport report;
  report.parameter = parameter;
  for (std::size_t value : values) {
    ExperimentConfig config = base;
    if (parameter == "k") {
      config.k = value;
    } else {
      config.n_rounds = value;
    }
    const std::string sub_dir =
        out_dir.empty() ? "" : out_dir + "/" + parameter + "_" + std::to_string(value);
    const Report sub = run_experiment(config, sub_dir);
    if (!sub_dir.empty()) write_report(sub, sub_dir);
    for (const auto& row : sub.rows) report.rows.push_back({value, row});
  }
  return report;
}

std::string sweep_to_csv(const SweepReport& report) {
  std::string out =
      report.parameter +
      ",arm,seed,test_bleu,valid_ppl,dup_rate,teacher_self,teacher_ensemble_max,"
      "student_on_teachers,wallclock_s,config_hash,error\n";
  for (const auto& [value, r] : report.rows) {
    out += std::to_string(value) + "," + r.arm + "," + std::to_string(r.seed) + "," +
           fmt(r.test_bleu) + "," + fmt(r.valid_ppl) + "," + fmt(r.dup_rate) + "," +
           fmt(r.teacher_self) + "," + fmt(r.teacher_ensemble_max) + "," +
           fmt(r.student_on_teachers) + "," + fmt(r.wallclock_s) + "," + r.config_hash + "," +
           r.error + "\n";
  }
  return out;
}

std::string sweep_to_markdown(const SweepReport& report) {
  std::string md = "# Sweep over " + report.parameter + "\n\n";
  md += "| " + report.parameter + " | arm | seed | test BLEU | valid ppl |\n";
  md += "|---|---|---|---|---|\n";
  for (const auto& [value, r] : report.rows) {
    md += "| " + std::to_string(value) + " | " + r.arm + " | " + std::to_string(r.seed) + " | " +
          fmt(r.test_bleu) + " | " + fmt(r.valid_ppl) + " |\n";
  }
  return md;
}

void write_report(const Report& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto write_file = [](const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out.good()) throw std::runtime_error("write failed: " + path);
  };
  write_file(out_dir + "/report.csv", report_to_csv(report));
  write_file(out_dir + "/report.md", report_to_markdown(report));
  write_file(out_dir + "/manifest.json", report.manifest_json + "\n");
}

}  // namespace nmt
