// divnmt: data-diversification NMT toolkit command line.
//
// Subcommands: gen-toy, learn-bpe, apply-bpe, train, translate, evaluate,
// diversify, experiment, sweep, report. Each data-driven subcommand reads a
// JSON config (--config) plus dotted-path overrides (--set a.b.c=value);
// --dry-run validates and prints the resolved plan without running.
// Exit codes: 0 success, 1 runtime error (one line on stderr), 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nmt/bpe.hpp"
#include "nmt/corpus.hpp"
#include "nmt/decode.hpp"
#include "nmt/diversify.hpp"
#include "nmt/experiment.hpp"
#include "nmt/metrics.hpp"
#include "nmt/model.hpp"
#include "nmt/toytask.hpp"
#include "nmt/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace nmt;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

// "a.b.c=value" applied onto a json document; the value parses as JSON when
// possible and falls back to a plain string.
void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    throw std::runtime_error("bad --set override (want key.path=value): " + spec);
  }
  const std::string path = spec.substr(0, eq);
  const std::string value_text = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(value_text);
  } catch (const json::exception&) {
    value = value_text;
  }
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw std::runtime_error("bad --set path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

json load_config_json(const std::string& config_path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!config_path.empty()) {
    doc = json::parse(read_file(config_path));
  }
  for (const auto& spec : overrides) apply_override(doc, spec);
  return doc;
}

ExperimentConfig load_experiment_config(const std::string& config_path,
                                        const std::vector<std::string>& overrides) {
  return experiment_config_from_json(load_config_json(config_path, overrides).dump());
}

std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(split_tokens(line));
  }
  return lines;
}

void write_token_lines(const std::string& path,
                       const std::vector<std::vector<std::string>>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const auto& tokens : lines) out << join_tokens(tokens) << '\n';
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------

int cmd_gen_toy(const std::string& config_path, const std::vector<std::string>& overrides,
                const std::string& out_dir, bool dry_run) {
  const auto config = load_experiment_config(config_path, overrides);
  if (dry_run) {
    std::cout << experiment_config_to_json(config) << "\n";
    return 0;
  }
  fs::create_directories(out_dir);
  const auto corpora = gen_toy(config.task, config.n_train, config.n_valid, config.n_test);
  save_parallel(corpora.train, out_dir + "/train.src", out_dir + "/train.tgt");
  save_parallel(corpora.valid, out_dir + "/valid.src", out_dir + "/valid.tgt");
  save_parallel(corpora.test, out_dir + "/test.src", out_dir + "/test.tgt");
  if (config.n_mono > 0) {
    write_token_lines(out_dir + "/mono.tgt", gen_toy_monolingual(config.task, config.n_mono));
  }
  const auto train_stats = stats(corpora.train);
  write_file(out_dir + "/train.stats.txt", train_stats.to_kv_block());
  write_file(out_dir + "/train.stats.csv", train_stats.to_csv());
  write_file(out_dir + "/task.json", experiment_config_to_json(config) + "\n");
  std::cout << "wrote " << corpora.train.size() << "/" << corpora.valid.size() << "/"
            << corpora.test.size() << " train/valid/test pairs to " << out_dir << "\n";
  return 0;
}

int cmd_learn_bpe(const std::string& src, const std::string& tgt, std::size_t merges,
                  bool shared, const std::string& out_path, const std::string& vocab_out,
                  bool dry_run) {
  if (dry_run) {
    std::cout << "learn-bpe: " << merges << " merges, shared=" << shared << " from " << src
              << (tgt.empty() ? "" : ", " + tgt) << " -> " << out_path << "\n";
    return 0;
  }
  ParallelCorpus corpus;
  const auto src_lines = read_token_lines(src);
  std::vector<std::vector<std::string>> tgt_lines;
  if (!tgt.empty()) tgt_lines = read_token_lines(tgt);
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    SentencePair pair;
    pair.source = src_lines[i];
    pair.target = i < tgt_lines.size() ? tgt_lines[i] : std::vector<std::string>{};
    corpus.pairs.push_back(std::move(pair));
  }
  const auto model = learn_bpe(corpus, merges, shared);
  save_merges(model, out_path);
  std::cout << "learned " << model.merges.size() << " merges -> " << out_path << "\n";
  if (!vocab_out.empty()) {
    const auto vocab = build_vocab(model, corpus, shared);
    vocab.save(vocab_out);
    std::cout << "vocabulary of " << vocab.size() << " tokens -> " << vocab_out << "\n";
  }
  return 0;
}

int cmd_apply_bpe(const std::string& merges_path, const std::string& in_path,
                  const std::string& out_path, bool decode, bool dry_run) {
  if (dry_run) {
    std::cout << (decode ? "decode" : "apply") << "-bpe: " << in_path << " -> " << out_path
              << "\n";
    return 0;
  }
  const auto lines = read_token_lines(in_path);
  std::vector<std::vector<std::string>> out;
  out.reserve(lines.size());
  if (decode) {
    for (const auto& tokens : lines) out.push_back(decode_bpe(tokens));
  } else {
    const auto model = load_merges(merges_path);
    for (const auto& tokens : lines) out.push_back(apply_bpe(model, tokens));
  }
  write_token_lines(out_path, out);
  return 0;
}

// train config: corpora paths plus the experiment schema's student settings.
int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_ckpt, bool backward, bool dry_run) {
  const json doc = load_config_json(config_path, overrides);
  const auto config = experiment_config_from_json(doc.dump());
  if (config.external_train_src.empty()) {
    throw std::runtime_error("train: config needs external.train_src/train_tgt corpus paths");
  }
  if (dry_run) {
    std::cout << experiment_config_to_json(config) << "\n";
    return 0;
  }
  auto train_words = load_parallel(config.external_train_src, config.external_train_tgt, {}).corpus;
  auto valid_words =
      config.external_valid_src.empty()
          ? ParallelCorpus{}
          : load_parallel(config.external_valid_src, config.external_valid_tgt, {}).corpus;
  const auto bpe = learn_bpe(train_words, config.bpe_merges, config.shared_bpe);
  auto vocab = std::make_shared<Vocabulary>(build_vocab(bpe, train_words, config.shared_bpe));
  auto train_bpe = apply_bpe_corpus(bpe, train_words);
  auto valid_bpe = apply_bpe_corpus(bpe, valid_words);
  if (backward) {
    train_bpe = swapped(train_bpe);
    valid_bpe = swapped(valid_bpe);
  }
  ModelConfig mc = config.student_model;
  mc.vocab = vocab;
  const std::uint64_t seed = config.seeds.front();
  const auto result = train(train_bpe, valid_bpe, mc, seed, config.student_train,
                            backward ? Direction::TargetToSource : Direction::SourceToTarget);
  Checkpoint ckpt;
  ckpt.config = result.model.config;
  ckpt.params = result.model.params;
  ckpt.direction = result.model.direction;
  ckpt.seed = seed;
  ckpt.step = result.best_step;
  ckpt.valid_ppl = result.best_valid_ppl;
  save_checkpoint(ckpt, out_ckpt);
  std::cout << "trained " << result.log.size() << " eval points, best valid ppl "
            << result.best_valid_ppl << " at step " << result.best_step << " -> " << out_ckpt
            << "\n";
  return 0;
}

int cmd_translate(const std::vector<std::string>& ckpts, const std::string& merges_path,
                  const std::string& in_path, const std::string& out_path, std::size_t nbest,
                  const std::string& nbest_out, const DecodeConfig& decode_config,
                  std::uint64_t seed, bool dry_run) {
  if (dry_run) {
    std::cout << "translate: " << ckpts.size() << " model(s), " << in_path << " -> " << out_path
              << "\n";
    return 0;
  }
  std::vector<Checkpoint> checkpoints;
  std::vector<TranslationModel> models;
  for (const auto& path : ckpts) {
    checkpoints.push_back(load_checkpoint(path));
    models.push_back(model_from_checkpoint(checkpoints.back()));
  }
  if (models.empty()) throw std::runtime_error("translate: no checkpoints given");
  const Vocabulary& vocab = *models.front().config.vocab;

  BpeModel bpe;
  if (!merges_path.empty()) bpe = load_merges(merges_path);
  const auto lines = read_token_lines(in_path);
  std::vector<std::vector<int>> sources;
  sources.reserve(lines.size());
  for (const auto& tokens : lines) {
    sources.push_back(vocab.encode(merges_path.empty() ? tokens : apply_bpe(bpe, tokens)));
  }

  std::vector<TransformerSeq2Seq> wrappers;
  wrappers.reserve(models.size());
  for (const auto& m : models) wrappers.emplace_back(m);
  std::unique_ptr<EnsembleSeq2Seq> ensemble;
  const Seq2SeqModel* decoder = &wrappers.front();
  if (wrappers.size() > 1) {
    std::vector<const Seq2SeqModel*> members;
    for (const auto& w : wrappers) members.push_back(&w);
    ensemble = std::make_unique<EnsembleSeq2Seq>(members);
    decoder = ensemble.get();
  }

  const auto translations = translate_corpus(*decoder, sources, decode_config, seed);
  std::vector<std::vector<std::string>> out;
  out.reserve(translations.size());
  for (const auto& ids : translations) {
    const auto tokens = vocab.decode(ids);
    out.push_back(merges_path.empty() ? tokens : decode_bpe(tokens));
  }
  write_token_lines(out_path, out);

  if (nbest > 0 && !nbest_out.empty()) {
    std::string text;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      auto scorer = decoder->scorer(sources[i]);
      std::vector<Hypothesis> list;
      DecodeConfig nb = decode_config;
      nb.beam_size = std::max(nb.beam_size, nbest);
      beam_search(*scorer, sources[i].size(), nb, &list);
      if (list.size() > nbest) list.resize(nbest);
      text += format_nbest(list, vocab);
    }
    write_file(nbest_out, text);
  }
  std::cout << "translated " << out.size() << " sentences -> " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& cand, const std::string& ref, bool smooth, int max_n,
                 const std::vector<std::string>& pairwise_files, const std::string& csv_out,
                 bool dry_run) {
  if (dry_run) {
    std::cout << "evaluate: " << cand << " vs " << ref << "\n";
    return 0;
  }
  std::string csv = "metric,split,value,config_hash\n";
  if (!cand.empty()) {
    const auto candidates = read_token_lines(cand);
    const auto references = read_token_lines(ref);
    const auto score = bleu(candidates, references, max_n, smooth);
    std::cout << "BLEU = " << score.score << " (BP " << score.brevity_penalty << ", precisions";
    for (double p : score.precisions) std::cout << " " << p;
    std::cout << ")\n";
    csv += metric_csv_row("bleu", "test", score.score, "-") + "\n";
  }
  if (pairwise_files.size() >= 2) {
    std::vector<std::vector<TokenSeq>> sets;
    for (const auto& path : pairwise_files) sets.push_back(read_token_lines(path));
    const double pb = pairwise_bleu(sets);
    std::cout << "Pairwise-BLEU = " << pb << " over " << sets.size() << " sets\n";
    csv += metric_csv_row("pairwise_bleu", "test", pb, "-") + "\n";
  }
  if (!csv_out.empty()) write_file(csv_out, csv);
  return 0;
}

int cmd_diversify(const std::string& config_path, const std::vector<std::string>& overrides,
                  const std::string& out_dir, bool dry_run) {
  ExperimentConfig config = load_experiment_config(config_path, overrides);
  config.arms = {Arm::Diversified};
  if (config.seeds.size() > 1) config.seeds.resize(1);
  config.save_student_checkpoints = true;
  if (dry_run) {
    std::cout << experiment_config_to_json(config) << "\n";
    return 0;
  }
  const auto report = run_experiment(config, out_dir);
  write_report(report, out_dir);
  for (const auto& row : report.rows) {
    if (!row.error.empty()) throw std::runtime_error("diversify failed: " + row.error);
    std::cout << "diversified student: test BLEU " << row.test_bleu << ", valid ppl "
              << row.valid_ppl << ", duplicate rate " << row.dup_rate << "\n";
  }
  std::cout << "manifest and checkpoint in " << out_dir << "\n";
  return 0;
}

int cmd_experiment(const std::string& config_path, const std::vector<std::string>& overrides,
                   const std::string& out_dir, bool dry_run) {
  const auto config = load_experiment_config(config_path, overrides);
  if (dry_run) {
    std::cout << experiment_config_to_json(config) << "\n";
    return 0;
  }
  const auto report = run_experiment(config, out_dir);
  write_report(report, out_dir);
  std::cout << report_to_markdown(report);
  std::cout << "report written to " << out_dir << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& parameter, const std::vector<std::size_t>& values,
              const std::string& out_dir, bool dry_run) {
  const auto config = load_experiment_config(config_path, overrides);
  if (dry_run) {
    std::cout << "sweep over " << parameter << " with " << values.size() << " values\n"
              << experiment_config_to_json(config) << "\n";
    return 0;
  }
  const auto report = sweep(config, parameter, values, out_dir);
  fs::create_directories(out_dir);
  write_file(out_dir + "/sweep.csv", sweep_to_csv(report));
  write_file(out_dir + "/sweep.md", sweep_to_markdown(report));
  std::cout << sweep_to_markdown(report);
  return 0;
}

// re-render report.md from an existing report.csv
int cmd_report(const std::string& csv_path, const std::string& out_path, bool dry_run) {
  if (dry_run) {
    std::cout << "report: " << csv_path << " -> " << out_path << "\n";
    return 0;
  }
  const auto text = read_file(csv_path);
  Report report;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    while (fields.size() < 11) fields.push_back("");
    ReportRow row;
    row.arm = fields[0];
    row.seed = fields[1].empty() ? 0 : std::stoull(fields[1]);
    auto num = [](const std::string& s) {
      return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
    };
    row.test_bleu = num(fields[2]);
    row.valid_ppl = num(fields[3]);
    row.dup_rate = num(fields[4]);
    row.teacher_self = num(fields[5]);
    row.teacher_ensemble_max = num(fields[6]);
    row.student_on_teachers = num(fields[7]);
    row.wallclock_s = fields[8].empty() ? 0.0 : std::stod(fields[8]);
    row.config_hash = fields[9];
    row.error = fields[10];
    report.config_hash = row.config_hash;
    report.rows.push_back(std::move(row));
  }
  write_file(out_path, report_to_markdown(report));
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"divnmt: data-diversification NMT toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, out_dir;
  std::vector<std::string> overrides;
  bool dry_run = false;

  auto add_common = [&](CLI::App* cmd, bool with_config = true) {
    if (with_config) {
      cmd->add_option("--config", config_path, "JSON config file");
      cmd->add_option("--set", overrides, "dotted-path override, e.g. --set diversify.k=2");
    }
    cmd->add_flag("--dry-run", dry_run, "validate and print the resolved plan, then exit");
  };

  auto* gen = app.add_subcommand("gen-toy", "generate a synthetic translation task");
  add_common(gen);
  gen->add_option("--out", out_dir, "output directory")->required();

  std::string src, tgt, merges_path, vocab_out, in_path;
  std::size_t merges = 200;
  bool shared = true;
  auto* lb = app.add_subcommand("learn-bpe", "learn BPE merges from a corpus");
  add_common(lb, false);
  lb->add_option("--src", src, "source corpus")->required();
  lb->add_option("--tgt", tgt, "target corpus (pooled when --shared)");
  lb->add_option("--merges", merges, "number of merge operations");
  lb->add_flag("--shared,!--no-shared", shared, "pool both sides");
  lb->add_option("--out", out_path, "merges file")->required();
  lb->add_option("--vocab-out", vocab_out, "also write the vocabulary here");

  bool decode_flag = false;
  auto* ab = app.add_subcommand("apply-bpe", "apply (or undo) BPE to a token file");
  add_common(ab, false);
  ab->add_option("--merges", merges_path, "merges file");
  ab->add_option("--in", in_path, "input file")->required();
  ab->add_option("--out", out_path, "output file")->required();
  ab->add_flag("--decode", decode_flag, "undo BPE instead of applying it");

  bool backward = false;
  auto* tr = app.add_subcommand("train", "train one model from word-level corpora");
  add_common(tr);
  tr->add_option("--out", out_path, "checkpoint path")->required();
  tr->add_flag("--backward", backward, "train the target->source direction");

  std::vector<std::string> ckpts;
  std::string nbest_out;
  std::size_t nbest = 0;
  std::uint64_t seed = 1;
  DecodeConfig decode_config;
  std::string mode_name_flag = "beam";
  auto* ts = app.add_subcommand("translate", "translate a token file with one or more models");
  add_common(ts, false);
  ts->add_option("--ckpt", ckpts, "checkpoint(s); several form an ensemble")->required();
  ts->add_option("--merges", merges_path, "BPE merges (encode input / decode output)");
  ts->add_option("--in", in_path, "input file")->required();
  ts->add_option("--out", out_path, "output file")->required();
  ts->add_option("--beam", decode_config.beam_size, "beam size");
  ts->add_option("--alpha", decode_config.length_penalty_alpha, "length penalty alpha");
  ts->add_option("--max-len-factor", decode_config.max_len_factor, "output length factor");
  ts->add_option("--mode", mode_name_flag, "greedy | beam | sample");
  ts->add_option("--temperature", decode_config.temperature, "sampling temperature");
  ts->add_option("--seed", seed, "sampling seed");
  ts->add_option("--nbest", nbest, "n-best size");
  ts->add_option("--nbest-out", nbest_out, "n-best output file (index<TAB>score<TAB>tokens)");

  std::string cand, ref, csv_out;
  int max_n = 4;
  bool smooth = false;
  std::vector<std::string> pairwise_files;
  auto* ev = app.add_subcommand("evaluate", "corpus BLEU and Pairwise-BLEU");
  add_common(ev, false);
  ev->add_option("--cand", cand, "candidate corpus");
  ev->add_option("--ref", ref, "reference corpus");
  ev->add_flag("--smooth", smooth, "add-one smoothing for n >= 2");
  ev->add_option("--max-n", max_n, "highest n-gram order");
  ev->add_option("--pairwise", pairwise_files, "hypothesis-set files for Pairwise-BLEU");
  ev->add_option("--csv-out", csv_out, "write metric rows as CSV");

  auto* dv = app.add_subcommand("diversify", "run the data-diversification pipeline");
  add_common(dv);
  dv->add_option("--out", out_dir, "output directory")->required();

  auto* ex = app.add_subcommand("experiment", "run a declarative experiment");
  add_common(ex);
  ex->add_option("--out", out_dir, "output directory")->required();

  std::string sweep_param = "k";
  std::vector<std::size_t> sweep_values;
  auto* sw = app.add_subcommand("sweep", "run an experiment per parameter value");
  add_common(sw);
  sw->add_option("--param", sweep_param, "k or n_rounds");
  sw->add_option("--values", sweep_values, "values to sweep, comma separated")
      ->required()
      ->delimiter(',');
  sw->add_option("--out", out_dir, "output directory")->required();

  std::string report_csv;
  auto* rp = app.add_subcommand("report", "re-render report.md from report.csv");
  add_common(rp, false);
  rp->add_option("--csv", report_csv, "report.csv path")->required();
  rp->add_option("--out", out_path, "markdown output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_toy(config_path, overrides, out_dir, dry_run);
    if (lb->parsed()) {
      return cmd_learn_bpe(src, tgt, merges, shared, out_path, vocab_out, dry_run);
    }
    if (ab->parsed()) return cmd_apply_bpe(merges_path, in_path, out_path, decode_flag, dry_run);
    if (tr->parsed()) return cmd_train(config_path, overrides, out_path, backward, dry_run);
    if (ts->parsed()) {
      if (mode_name_flag == "greedy") decode_config.mode = DecodeMode::Greedy;
      else if (mode_name_flag == "beam") decode_config.mode = DecodeMode::Beam;
      else if (mode_name_flag == "sample") decode_config.mode = DecodeMode::Sample;
      else throw std::runtime_error("unknown decode mode: " + mode_name_flag);
      return cmd_translate(ckpts, merges_path, in_path, out_path, nbest, nbest_out,
                           decode_config, seed, dry_run);
    }
    if (ev->parsed()) {
      return cmd_evaluate(cand, ref, smooth, max_n, pairwise_files, csv_out, dry_run);
    }
    if (dv->parsed()) return cmd_diversify(config_path, overrides, out_dir, dry_run);
    if (ex->parsed()) return cmd_experiment(config_path, overrides, out_dir, dry_run);
    if (sw->parsed()) {
      return cmd_sweep(config_path, overrides, sweep_param, sweep_values, out_dir, dry_run);
    }
    if (rp->parsed()) return cmd_report(report_csv, out_path, dry_run);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
