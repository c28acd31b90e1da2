#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <set>
#include <unordered_set>

#include "nmt/bpe.hpp"
#include "nmt/diversify.hpp"
#include "nmt/rng.hpp"
#include "nmt/toytask.hpp"

using namespace nmt;

namespace {

struct Pipeline {
  ParallelCorpus train;
  ParallelCorpus valid;
  std::shared_ptr<Vocabulary> vocab;
};

// Tiny BPE-applied toy corpus with a shared vocabulary.
Pipeline tiny_pipeline(std::size_t n_train = 24, std::uint64_t seed = 5) {
  ToyTaskSpec spec;
  spec.source_vocab = 12;
  spec.target_vocab = 14;
  spec.min_len = 2;
  spec.max_len = 4;
  spec.ambiguity_rate = 0.25;
  spec.seed = seed;
  const auto corpora = gen_toy(spec, n_train, 8, 8);
  const auto model = learn_bpe(corpora.train, 40, /*shared=*/true);
  Pipeline p;
  p.vocab = std::make_shared<Vocabulary>(build_vocab(model, corpora.train, true));
  p.train = apply_bpe_corpus(model, corpora.train);
  p.valid = apply_bpe_corpus(model, corpora.valid);
  return p;
}

DiversifyConfig tiny_config(const Pipeline& p, std::size_t k, std::size_t teacher_steps,
                            std::uint64_t base_seed) {
  DiversifyConfig cfg;
  cfg.k = k;
  cfg.n_rounds = 1;
  cfg.base_seed = base_seed;
  ModelConfig mc;
  mc.d_model = 16;
  mc.n_heads = 2;
  mc.n_layers = 1;
  mc.d_ffn = 32;
  mc.dropout = 0.0;
  mc.label_smoothing = 0.1;
  mc.max_positions = 64;
  mc.vocab = p.vocab;
  cfg.teacher_config = mc;
  cfg.student_config = mc;
  cfg.teacher_train.steps = teacher_steps;
  cfg.teacher_train.batch_tokens = 128;
  cfg.teacher_train.eval_interval = 8;
  cfg.student_train = cfg.teacher_train;
  cfg.student_train.steps = 4;
  cfg.generation.beam_size = 2;
  return cfg;
}

std::set<std::pair<std::string, std::string>> pair_set(const ParallelCorpus& c) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& p : c.pairs) out.insert({join_tokens(p.source), join_tokens(p.target)});
  return out;
}

bool params_equal(const Parameters& a, const Parameters& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || !it->second.same_shape(t)) return false;
    if (std::memcmp(t.data(), it->second.data(), t.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("data_diverse: structural contract with untrained teachers (k=1, steps=0)") {
  const auto p = tiny_pipeline();
  auto cfg = tiny_config(p, 1, 0, 7);
  const auto result = data_diverse(p.train, p.valid, cfg);

  REQUIRE(result.rounds.size() == 1);
  const auto& round = result.rounds[0];
  CHECK(round.round == 1);
  const auto st = round.data_stats;
  // the toy train split may itself contain exact duplicates, which the merge
  // removes; compare against the unique-pair count
  CHECK(st.original == pair_set(p.train).size());
  CHECK(st.synthetic_forward > 0);
  CHECK(st.synthetic_backward > 0);
  CHECK(round.data.size() <= 3 * p.train.size());

  // composition: D_1 contains D_0, and everything beyond it is synthetic
  const auto d0 = pair_set(p.train);
  const auto d1 = pair_set(round.data);
  for (const auto& key : d0) CHECK(d1.count(key) == 1);
  for (const auto& pair : round.data.pairs) {
    if (pair.provenance.kind == ProvenanceKind::Original) continue;
    CHECK(pair.provenance.round == 1);
    CHECK(pair.provenance.teacher_index < cfg.k);
  }
}

TEST_CASE("data_diverse: source/target-side preservation and cardinality bound") {
  const auto p = tiny_pipeline(20, 9);
  auto cfg = tiny_config(p, 2, 4, 11);
  const auto result = data_diverse(p.train, p.valid, cfg);
  const auto& round = result.rounds[0];

  CHECK(round.data.size() <= (2 * cfg.k + 1) * p.train.size());

  std::unordered_set<std::string> sources, targets;
  for (const auto& pair : p.train.pairs) {
    sources.insert(join_tokens(pair.source));
    targets.insert(join_tokens(pair.target));
  }
  for (const auto& pair : round.data.pairs) {
    if (pair.provenance.kind == ProvenanceKind::SyntheticForward) {
      CHECK(sources.count(join_tokens(pair.source)) == 1);
    } else if (pair.provenance.kind == ProvenanceKind::SyntheticBackward) {
      CHECK(targets.count(join_tokens(pair.target)) == 1);
    }
  }

  // duplicate accounting against the corpus-module oracle
  const auto st = stats(round.data);
  CHECK(st.duplicate_rate ==
        doctest::Approx(1.0 - double(round.data.size()) / double(round.data.merged_union_size))
            .epsilon(1e-12));
}

TEST_CASE("data_diverse: deterministic given (corpus, config, base_seed)") {
  const auto p = tiny_pipeline(16, 3);
  auto cfg = tiny_config(p, 1, 3, 21);
  const auto r1 = data_diverse(p.train, p.valid, cfg);
  const auto r2 = data_diverse(p.train, p.valid, cfg);
  CHECK(pair_set(r1.rounds[0].data) == pair_set(r2.rounds[0].data));
  CHECK(r1.rounds[0].data.size() == r2.rounds[0].data.size());
  CHECK(params_equal(r1.student.model.params, r2.student.model.params));

  cfg.base_seed = 22;
  const auto r3 = data_diverse(p.train, p.valid, cfg);
  CHECK(!params_equal(r1.student.model.params, r3.student.model.params));
}

TEST_CASE("data_diverse: thread fan-out does not change the outcome") {
  const auto p = tiny_pipeline(12, 13);
  auto cfg = tiny_config(p, 2, 2, 5);
  setenv("DIVNMT_THREADS", "1", 1);
  const auto serial = data_diverse(p.train, p.valid, cfg);
  setenv("DIVNMT_THREADS", "4", 1);
  const auto parallel = data_diverse(p.train, p.valid, cfg);
  unsetenv("DIVNMT_THREADS");
  CHECK(pair_set(serial.rounds[0].data) == pair_set(parallel.rounds[0].data));
  CHECK(params_equal(serial.student.model.params, parallel.student.model.params));
}

TEST_CASE("data_diverse: FixedSeed gives bitwise-identical teacher initializations") {
  const auto p = tiny_pipeline(12, 17);
  auto cfg = tiny_config(p, 2, 0, 31);  // steps=0: final params == initial params
  cfg.student_train.steps = 0;
  cfg.init_mode = InitMode::FixedSeed;
  cfg.fixed_init_seed = 777;
  cfg.keep_teachers = true;
  const auto result = data_diverse(p.train, p.valid, cfg);
  const auto& teachers = result.rounds[0].teachers;
  REQUIRE(teachers.size() == 4);  // 2k
  for (std::size_t i = 1; i < teachers.size(); ++i) {
    CHECK(params_equal(teachers[0].model.params, teachers[i].model.params));
  }
  // student starts from the same parameters too
  CHECK(params_equal(result.student.model.params,
                     init_model(cfg.student_config, 777, Direction::SourceToTarget).params));
}

TEST_CASE("data_diverse: RandomSeeds teachers differ and seeds are reproducible") {
  const auto p = tiny_pipeline(12, 19);
  auto cfg = tiny_config(p, 2, 0, 41);
  cfg.keep_teachers = true;
  const auto result = data_diverse(p.train, p.valid, cfg);
  const auto& teachers = result.rounds[0].teachers;
  REQUIRE(teachers.size() == 4);
  CHECK(!params_equal(teachers[0].model.params, teachers[1].model.params));
  for (const auto& t : teachers) {
    CHECK(t.seed == teacher_seed(cfg.base_seed, 1, t.direction, t.index));
  }
  // distinct (round, direction, index) triplets give distinct seeds
  std::set<std::uint64_t> seeds;
  for (const auto& t : teachers) seeds.insert(t.seed);
  CHECK(seeds.size() == teachers.size());
}

TEST_CASE("direction_ablation: provenance purity and counting bound") {
  const auto p = tiny_pipeline(14, 23);
  auto cfg = tiny_config(p, 1, 2, 51);
  const auto result = direction_ablation(p.train, p.valid, cfg);

  const auto& fwd = result.forward_only.rounds[0];
  CHECK(fwd.data_stats.synthetic_backward == 0);
  CHECK(fwd.data_stats.synthetic_forward > 0);
  CHECK(fwd.data.size() <= 2 * p.train.size());

  const auto& bwd = result.backward_only.rounds[0];
  CHECK(bwd.data_stats.synthetic_forward == 0);
  CHECK(bwd.data_stats.synthetic_backward > 0);
  for (const auto& pair : bwd.data.pairs) {
    if (pair.provenance.kind != ProvenanceKind::Original) {
      CHECK(pair.provenance.kind == ProvenanceKind::SyntheticBackward);
    }
  }
}

TEST_CASE("train_baseline equals a direct train call") {
  const auto p = tiny_pipeline(10, 29);
  ModelConfig mc;
  mc.d_model = 16;
  mc.n_heads = 2;
  mc.n_layers = 1;
  mc.d_ffn = 16;
  mc.dropout = 0.0;
  mc.vocab = p.vocab;
  TrainOptions opts;
  opts.steps = 5;
  opts.batch_tokens = 64;
  opts.eval_interval = 5;
  const auto a = train_baseline(p.train, p.valid, mc, opts, 3);
  const auto b = train(p.train, p.valid, mc, 3, opts, Direction::SourceToTarget);
  CHECK(params_equal(a.model.params, b.model.params));
}

TEST_CASE("augment_with_monolingual: empty input is the identity, counting holds") {
  const auto p = tiny_pipeline(12, 37);
  auto cfg = tiny_config(p, 3, 0, 61);
  cfg.keep_teachers = true;
  const auto result = data_diverse(p.train, p.valid, cfg);
  std::vector<const TranslationModel*> backward;
  for (const auto& t : result.rounds[0].teachers) {
    if (t.direction == Direction::TargetToSource) backward.push_back(&t.model);
  }
  REQUIRE(backward.size() == 3);
  const auto& base = result.rounds[0].data;

  const auto same = augment_with_monolingual(base, {}, backward, cfg.generation);
  CHECK(pair_set(same) == pair_set(base));
  CHECK(same.size() == base.size());

  ToyTaskSpec spec;
  spec.source_vocab = 12;
  spec.target_vocab = 14;
  spec.min_len = 2;
  spec.max_len = 4;
  spec.seed = 37;
  const auto mono = gen_toy_monolingual(spec, 20);
  const auto augmented = augment_with_monolingual(base, mono, backward, cfg.generation);
  CHECK(augmented.size() > base.size());
  CHECK(augmented.size() <= base.size() + 3 * mono.size());
  std::size_t mono_pairs = 0;
  for (const auto& pair : augmented.pairs) {
    if (pair.provenance.kind == ProvenanceKind::MonolingualBackward) {
      ++mono_pairs;
      CHECK(pair.provenance.teacher_index < 3);
    }
  }
  CHECK(mono_pairs == augmented.size() - base.size());

  // forward models are rejected
  std::vector<const TranslationModel*> wrong;
  for (const auto& t : result.rounds[0].teachers) {
    if (t.direction == Direction::SourceToTarget) wrong.push_back(&t.model);
  }
  CHECK_THROWS_AS(augment_with_monolingual(base, mono, wrong, cfg.generation),
                  std::invalid_argument);
}

TEST_CASE("toy task: deterministic generation and dictionary invariants") {
  ToyTaskSpec spec;
  spec.source_vocab = 20;
  spec.target_vocab = 22;
  spec.ambiguity_rate = 0.3;
  spec.seed = 11;
  const auto a = gen_toy(spec, 30, 10, 10);
  const auto b = gen_toy(spec, 30, 10, 10);
  CHECK(pair_set(a.train) == pair_set(b.train));
  CHECK(pair_set(a.test) == pair_set(b.test));

  const auto dict = build_toy_dictionary(spec);
  CHECK(dict.size() == 20);
  std::size_t ambiguous = 0;
  for (const auto& [word, options] : dict) {
    double total = 0.0;
    for (const auto& [tgt, prob] : options) total += prob;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    if (options.size() > 1) ++ambiguous;
  }
  CHECK(ambiguous == 6);  // round(0.3 * 20)

  // splits are source-disjoint
  std::unordered_set<std::string> train_sources;
  for (const auto& pair : a.train.pairs) train_sources.insert(join_tokens(pair.source));
  for (const auto& pair : a.valid.pairs) CHECK(train_sources.count(join_tokens(pair.source)) == 0);
  for (const auto& pair : a.test.pairs) CHECK(train_sources.count(join_tokens(pair.source)) == 0);
}

TEST_CASE("toy task: ambiguous words sample both translations at the stated rate") {
  ToyTaskSpec spec;
  spec.source_vocab = 1;
  spec.target_vocab = 4;
  spec.min_len = 1;
  spec.max_len = 1;
  spec.ambiguity_rate = 1.0;  // the single word maps to two targets at 0.5/0.5
  spec.reorder = ReorderRule::None;
  spec.seed = 2;
  const auto dict = build_toy_dictionary(spec);
  REQUIRE(dict.begin()->second.size() == 2);

  Rng rng(0);
  (void)rng;
  std::size_t first_count = 0;
  const auto mono = gen_toy_monolingual(spec, 10000);
  const std::string first = dict.begin()->second[0].first;
  for (const auto& sent : mono) {
    if (sent[0] == first) ++first_count;
  }
  const double frac = static_cast<double>(first_count) / 10000.0;
  CHECK(frac > 0.47);
  CHECK(frac < 0.53);
}

TEST_CASE("toy task: swap reorder swaps adjacent pairs deterministically") {
  ToyTaskSpec spec;
  spec.source_vocab = 6;
  spec.target_vocab = 6;
  spec.min_len = 5;
  spec.max_len = 5;
  spec.ambiguity_rate = 0.0;
  spec.reorder = ReorderRule::SwapAdjacentPairs;
  spec.seed = 4;
  const auto dict = build_toy_dictionary(spec);
  const auto corpora = gen_toy(spec, 5, 1, 1);
  for (const auto& pair : corpora.train.pairs) {
    REQUIRE(pair.target.size() == pair.source.size());
    auto expect = pair.source;
    for (auto& w : expect) w = dict.at(w)[0].first;
    for (std::size_t i = 0; i + 1 < expect.size(); i += 2) std::swap(expect[i], expect[i + 1]);
    CHECK(pair.target == expect);
  }
}

TEST_CASE("toy task: spec validation") {
  ToyTaskSpec bad;
  bad.min_len = 5;
  bad.max_len = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ToyTaskSpec bad2;
  bad2.source_vocab = 0;
  CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
  ToyTaskSpec bad3;
  bad3.ambiguity_rate = 1.5;
  CHECK_THROWS_AS(bad3.validate(), std::invalid_argument);
}
