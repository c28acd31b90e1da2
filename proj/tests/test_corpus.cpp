#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "nmt/corpus.hpp"
#include "nmt/rng.hpp"

using namespace nmt;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("nmt_corpus_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

SentencePair make_sp(const std::string& src, const std::string& tgt,
                       Provenance prov = {}) {
  return {split_tokens(src), split_tokens(tgt), prov};
}

ParallelCorpus random_corpus(Rng& rng, std::size_t n, Provenance prov = {},
                             std::size_t vocab = 20) {
  ParallelCorpus c;
  c.name = "random";
  for (std::size_t i = 0; i < n; ++i) {
    SentencePair p;
    p.provenance = prov;
    const std::size_t slen = 1 + rng.below(6);
    const std::size_t tlen = 1 + rng.below(6);
    for (std::size_t j = 0; j < slen; ++j) p.source.push_back("w" + std::to_string(rng.below(vocab)));
    for (std::size_t j = 0; j < tlen; ++j) p.target.push_back("v" + std::to_string(rng.below(vocab)));
    c.pairs.push_back(std::move(p));
  }
  return c;
}

// Independent dedup oracle: first-occurrence filter over (source, target)
// string keys via std::set.
std::size_t oracle_dedup_count(const std::vector<ParallelCorpus>& cs) {
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t kept = 0;
  for (const auto& c : cs) {
    for (const auto& p : c.pairs) {
      if (seen.insert({join_tokens(p.source), join_tokens(p.target)}).second) ++kept;
    }
  }
  return kept;
}

bool same_pairs(const ParallelCorpus& a, const ParallelCorpus& b) {
  if (a.pairs.size() != b.pairs.size()) return false;
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    if (a.pairs[i].source != b.pairs[i].source) return false;
    if (a.pairs[i].target != b.pairs[i].target) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("load_parallel: basic two-line load") {
  TempDir dir;
  write_file(dir.file("a.src"), "hello world\nsecond line\n");
  write_file(dir.file("a.tgt"), "hallo welt\nzweite zeile\n");
  const auto result = load_parallel(dir.file("a.src"), dir.file("a.tgt"), {});
  REQUIRE(result.corpus.size() == 2);
  CHECK(result.corpus.pairs[0].source == std::vector<std::string>{"hello", "world"});
  CHECK(result.corpus.pairs[0].target == std::vector<std::string>{"hallo", "welt"});
  CHECK(result.corpus.pairs[0].provenance.kind == ProvenanceKind::Original);
  CHECK(result.corpus.pairs[0].provenance.round == 0);
  CHECK(result.dropped == 0);
}

TEST_CASE("load_parallel: line count mismatch names both counts") {
  TempDir dir;
  write_file(dir.file("a.src"), "a\nb\nc\n");
  write_file(dir.file("a.tgt"), "x\ny\n");
  CHECK_THROWS_WITH_AS(load_parallel(dir.file("a.src"), dir.file("a.tgt"), {}),
                       doctest::Contains("line count mismatch 3 vs 2"), std::runtime_error);
}

TEST_CASE("load_parallel: unreadable file raises an I/O error") {
  CHECK_THROWS_AS(load_parallel("/nonexistent/path.src", "/nonexistent/path.tgt", {}),
                  std::runtime_error);
}

TEST_CASE("load_parallel: empty-line policy") {
  TempDir dir;
  write_file(dir.file("a.src"), "one two\n\nthree\n");
  write_file(dir.file("a.tgt"), "eins zwei\nleer\ndrei\n");
  CHECK_THROWS_AS(load_parallel(dir.file("a.src"), dir.file("a.tgt"), {}), std::runtime_error);
  const auto result =
      load_parallel(dir.file("a.src"), dir.file("a.tgt"), {}, LoadOptions{.drop_empty = true});
  CHECK(result.corpus.size() == 2);
  CHECK(result.dropped == 1);
}

TEST_CASE("merge_dedup: (2k+1)|D| when all synthetic corpora are distinct") {
  ParallelCorpus original;
  for (int i = 0; i < 100; ++i) {
    original.pairs.push_back(make_sp("s" + std::to_string(i), "t" + std::to_string(i)));
  }
  std::vector<ParallelCorpus> all = {original};
  const int k = 3;
  for (int teacher = 0; teacher < 2 * k; ++teacher) {
    ParallelCorpus synth;
    const bool forward = teacher < k;
    for (int i = 0; i < 100; ++i) {
      Provenance prov{forward ? ProvenanceKind::SyntheticForward
                              : ProvenanceKind::SyntheticBackward,
                      1, static_cast<std::uint32_t>(teacher % k)};
      synth.pairs.push_back(make_sp("s" + std::to_string(i),
                                      "t" + std::to_string(i) + "_v" + std::to_string(teacher),
                                      prov));
    }
    all.push_back(std::move(synth));
  }
  const auto merged = merge_dedup(all);
  CHECK(merged.size() == 700);
  CHECK(merged.merged_union_size == 700);
  CHECK(stats(merged).duplicate_rate == 0.0);
}

TEST_CASE("merge_dedup: forward corpus equal to original collapses entirely") {
  ParallelCorpus original;
  for (int i = 0; i < 50; ++i) {
    original.pairs.push_back(make_sp("s" + std::to_string(i), "t" + std::to_string(i)));
  }
  ParallelCorpus forward = original;
  for (auto& p : forward.pairs) {
    p.provenance = {ProvenanceKind::SyntheticForward, 1, 0};
  }
  const auto merged = merge_dedup({original, forward});
  CHECK(merged.size() == 50);
  // first occurrence wins: surviving pairs keep Original provenance
  for (const auto& p : merged.pairs) {
    CHECK(p.provenance.kind == ProvenanceKind::Original);
  }
}

TEST_CASE("merge_dedup matches the set-based oracle on random corpora with planted duplicates") {
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ParallelCorpus> cs;
    const std::size_t n_corpora = 1 + rng.below(4);
    for (std::size_t c = 0; c < n_corpora; ++c) {
      auto corpus = random_corpus(rng, 5 + rng.below(30), {}, 8);
      // plant duplicates inside and across corpora
      if (!cs.empty() && rng.below(2) == 0 && !cs[0].pairs.empty()) {
        corpus.pairs.push_back(cs[0].pairs[rng.below(cs[0].pairs.size())]);
      }
      if (corpus.pairs.size() > 1) {
        corpus.pairs.push_back(corpus.pairs[rng.below(corpus.pairs.size())]);
      }
      cs.push_back(std::move(corpus));
    }
    const auto merged = merge_dedup(cs);
    CHECK(merged.size() == oracle_dedup_count(cs));
    std::size_t total = 0;
    for (const auto& c : cs) total += c.size();
    CHECK(merged.merged_union_size == total);
    CHECK(merged.size() <= total);

    // idempotence
    const auto again = merge_dedup({merged});
    CHECK(same_pairs(again, merged));

    // duplicate rate agrees with the oracle arithmetic
    const auto st = stats(merged);
    CHECK(st.duplicate_rate ==
          doctest::Approx(1.0 - double(merged.size()) / double(total)).epsilon(1e-12));
  }
}

TEST_CASE("dedup never removes a unique pair regardless of provenance") {
  ParallelCorpus a;
  a.pairs.push_back(make_sp("x y", "u v", {ProvenanceKind::Original, 0, 0}));
  ParallelCorpus b;
  b.pairs.push_back(make_sp("x y", "u w", {ProvenanceKind::SyntheticForward, 1, 0}));
  b.pairs.push_back(make_sp("x y", "u v", {ProvenanceKind::SyntheticForward, 1, 1}));
  const auto merged = merge_dedup({a, b});
  CHECK(merged.size() == 2);
}

TEST_CASE("stats: planted 31 -> 27 duplicate rate and empty corpus") {
  Rng rng(11);
  auto base = random_corpus(rng, 27, {}, 100);
  // make the 27 pairs unique by construction
  for (std::size_t i = 0; i < base.pairs.size(); ++i) {
    base.pairs[i].source.push_back("uniq" + std::to_string(i));
  }
  ParallelCorpus extra;
  for (int i = 0; i < 4; ++i) extra.pairs.push_back(base.pairs[static_cast<std::size_t>(i) * 3]);
  const auto merged = merge_dedup({base, extra});
  CHECK(merged.merged_union_size == 31);
  CHECK(merged.size() == 27);
  CHECK(stats(merged).duplicate_rate == doctest::Approx(1.0 - 27.0 / 31.0).epsilon(1e-9));

  const ParallelCorpus empty;
  const auto st = stats(empty);
  CHECK(st.pairs == 0);
  CHECK(st.duplicate_rate == 0.0);
  CHECK(st.mean_source_len == 0.0);
}

TEST_CASE("save/load round-trip on random corpora") {
  TempDir dir;
  Rng rng(777);
  for (int trial = 0; trial < 50; ++trial) {
    const auto corpus = random_corpus(rng, 1 + rng.below(20));
    save_parallel(corpus, dir.file("r.src"), dir.file("r.tgt"));
    const auto loaded = load_parallel(dir.file("r.src"), dir.file("r.tgt"), {});
    CHECK(same_pairs(loaded.corpus, corpus));
  }
}

TEST_CASE("save_parallel normalizes whitespace and rejects unwritable paths") {
  TempDir dir;
  write_file(dir.file("m.src"), "a   b\tc\n");
  write_file(dir.file("m.tgt"), "x y\n");
  const auto loaded = load_parallel(dir.file("m.src"), dir.file("m.tgt"), {});
  save_parallel(loaded.corpus, dir.file("n.src"), dir.file("n.tgt"));
  std::ifstream in(dir.file("n.src"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "a b c");

  CHECK_THROWS_AS(save_parallel(loaded.corpus, "/nonexistent/dir/x.src", dir.file("n.tgt")),
                  std::runtime_error);
}

TEST_CASE("split: determinism, seed sensitivity, rounding") {
  Rng rng(1);
  const auto corpus = random_corpus(rng, 100);
  const auto [train7, valid7] = split(corpus, 0.05, 7);
  CHECK(train7.size() == 95);
  CHECK(valid7.size() == 5);
  const auto [train7b, valid7b] = split(corpus, 0.05, 7);
  CHECK(same_pairs(train7, train7b));
  CHECK(same_pairs(valid7, valid7b));

  const auto [train8, valid8] = split(corpus, 0.05, 8);
  CHECK(!same_pairs(valid7, valid8));

  // union preserved, disjoint by index count
  CHECK(train7.size() + valid7.size() == corpus.size());

  ParallelCorpus one;
  one.pairs.push_back(make_sp("a", "b"));
  const auto [t1, v1] = split(one, 0.05, 3);
  CHECK(t1.size() == 1);
  CHECK(v1.size() == 0);

  CHECK_THROWS_AS(split(corpus, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split(ParallelCorpus{}, 0.5, 1), std::invalid_argument);
}

TEST_CASE("swapped exchanges sides") {
  ParallelCorpus c;
  c.pairs.push_back(make_sp("a b", "x"));
  const auto s = swapped(c);
  CHECK(s.pairs[0].source == std::vector<std::string>{"x"});
  CHECK(s.pairs[0].target == std::vector<std::string>{"a", "b"});
}

TEST_CASE("stats text emission has both formats") {
  ParallelCorpus c;
  c.pairs.push_back(make_sp("a b", "x", {ProvenanceKind::Original, 0, 0}));
  c.pairs.push_back(make_sp("c", "y z", {ProvenanceKind::SyntheticForward, 1, 2}));
  const auto st = stats(c);
  CHECK(st.original == 1);
  CHECK(st.synthetic_forward == 1);
  const auto kv = st.to_kv_block();
  CHECK(kv.find("pairs=2") != std::string::npos);
  const auto csv = st.to_csv();
  CHECK(csv.find("pairs,original") != std::string::npos);
}
