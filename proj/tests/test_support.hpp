#pragma once

// Shared oracles and toy models for the test and acceptance suites. These
// deliberately avoid the library's own counting/search code paths.

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nmt/decode.hpp"
#include "nmt/metrics.hpp"
#include "nmt/rng.hpp"

namespace nmt::testsupport {

// Deterministic pseudo-random conditional distribution keyed by (seed, prefix).
class HashScorer : public Scorer {
 public:
  HashScorer(std::uint64_t seed, std::size_t vocab) : seed_(seed), vocab_(vocab) {}

  std::size_t vocab_size() const override { return vocab_; }

  std::vector<double> next_log_probs(const std::vector<int>& prefix) override {
    std::uint64_t h = seed_;
    for (int t : prefix) h = Rng::mix(h, static_cast<std::uint64_t>(t) + 1);
    Rng rng(h);
    std::vector<double> logits(vocab_);
    for (auto& v : logits) v = 2.0 * rng.gaussian();
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    for (auto& v : logits) v -= lz;
    return logits;
  }

 private:
  std::uint64_t seed_;
  std::size_t vocab_;
};

// Explicit conditional probability table; unlisted prefixes use `otherwise`.
class TableModel : public Seq2SeqModel {
 public:
  std::size_t vocab = 6;
  std::map<std::vector<int>, std::vector<double>> table;
  std::vector<double> otherwise;

  std::size_t vocab_size() const override { return vocab; }

  class TableScorer : public Scorer {
   public:
    explicit TableScorer(const TableModel& m) : model_(&m) {}
    std::size_t vocab_size() const override { return model_->vocab; }
    std::vector<double> next_log_probs(const std::vector<int>& prefix) override {
      auto it = model_->table.find(prefix);
      const auto& probs = it != model_->table.end() ? it->second : model_->otherwise;
      std::vector<double> lp(probs.size());
      for (std::size_t i = 0; i < probs.size(); ++i) {
        lp[i] = probs[i] > 0.0 ? std::log(probs[i]) : -1e30;
      }
      return lp;
    }

   private:
    const TableModel* model_;
  };

  std::unique_ptr<Scorer> scorer(const std::vector<int>&) const override {
    return std::make_unique<TableScorer>(*this);
  }
};

inline bool gen_better(const std::pair<std::vector<int>, double>& a,
                       const std::pair<std::vector<int>, double>& b) {
  if (a.second != b.second) return a.second > b.second;
  const std::size_t n = std::min(a.first.size(), b.first.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a.first[i] != b.first[i]) return a.first[i] < b.first[i];
  }
  return a.first.size() < b.first.size();
}

// Exhaustive argmax over every EOS-terminated sequence up to the length cap.
inline std::pair<std::vector<int>, double> exhaustive_best(Scorer& scorer,
                                                           std::size_t source_len,
                                                           const DecodeConfig& cfg) {
  const std::size_t vocab = scorer.vocab_size();
  const std::size_t max_len = cfg.max_output_len(source_len);
  std::pair<std::vector<int>, double> best;
  bool have_best = false;
  std::vector<int> prefix;
  std::function<void(double)> walk = [&](double lp) {
    const auto step_lp = scorer.next_log_probs(prefix);
    const bool last = prefix.size() + 1 == max_len;
    for (std::size_t t = 0; t < vocab; ++t) {
      if (t == Vocabulary::kPad || t == Vocabulary::kBos) continue;
      if (last && t != Vocabulary::kEos) continue;
      const double new_lp = lp + step_lp[t];
      if (t == Vocabulary::kEos) {
        std::vector<int> gen = prefix;
        gen.push_back(Vocabulary::kEos);
        const double score =
            cfg.length_penalty_alpha == 0.0
                ? new_lp
                : new_lp / std::pow(static_cast<double>(gen.size()), cfg.length_penalty_alpha);
        auto cand = std::make_pair(std::move(gen), score);
        if (!have_best || gen_better(cand, best)) {
          best = std::move(cand);
          have_best = true;
        }
      } else {
        prefix.push_back(static_cast<int>(t));
        walk(new_lp);
        prefix.pop_back();
      }
    }
  };
  walk(0.0);
  return best;
}

// Independent corpus BLEU: direct subsequence counting, no hashing, the
// published formula with the effective-order convention.
inline double oracle_bleu(const std::vector<TokenSeq>& cands,
                          const std::vector<TokenSeq>& refs) {
  auto count_occurrences = [](const TokenSeq& hay, const TokenSeq& needle) {
    std::size_t n = 0;
    if (hay.size() < needle.size()) return n;
    for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
      bool match = true;
      for (std::size_t j = 0; j < needle.size(); ++j) {
        if (hay[i + j] != needle[j]) {
          match = false;
          break;
        }
      }
      if (match) ++n;
    }
    return n;
  };

  double log_sum = 0.0;
  int effective = 0;
  std::size_t c = 0, r = 0;
  for (std::size_t s = 0; s < cands.size(); ++s) {
    c += cands[s].size();
    r += refs[s].size();
  }
  for (int n = 1; n <= 4; ++n) {
    std::size_t matched = 0, total = 0;
    for (std::size_t s = 0; s < cands.size(); ++s) {
      const auto& cand = cands[s];
      if (static_cast<int>(cand.size()) < n) continue;
      total += cand.size() - static_cast<std::size_t>(n) + 1;
      std::vector<TokenSeq> seen;
      for (std::size_t i = 0; i + n <= cand.size(); ++i) {
        TokenSeq gram(cand.begin() + i, cand.begin() + i + n);
        bool dup = false;
        for (const auto& g : seen) dup = dup || g == gram;
        if (dup) continue;
        seen.push_back(gram);
        matched += std::min(count_occurrences(cand, gram), count_occurrences(refs[s], gram));
      }
    }
    if (total == 0) continue;
    if (matched == 0) return 0.0;
    ++effective;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  if (c == 0 || effective == 0) return 0.0;
  const double bp =
      std::min(1.0, std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)));
  return 100.0 * bp * std::exp(log_sum / effective);
}

}  // namespace nmt::testsupport
