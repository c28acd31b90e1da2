#include "nmt/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace nmt {

namespace {

// n-gram counts of one sentence, keyed by the joined tokens
std::map<std::string, std::size_t> ngram_counts(const TokenSeq& tokens, int n) {
  std::map<std::string, std::size_t> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

BleuScore bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
               int max_n, bool smoothing) {
  if (candidates.empty()) throw std::invalid_argument("bleu: empty candidate list");
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("bleu: candidate/reference length mismatch " +
                                std::to_string(candidates.size()) + " vs " +
                                std::to_string(references.size()));
  }
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be positive");

  BleuScore result;
  std::vector<std::size_t> matched(static_cast<std::size_t>(max_n), 0);
  std::vector<std::size_t> total(static_cast<std::size_t>(max_n), 0);
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    result.candidate_tokens += candidates[s].size();
    result.reference_tokens += references[s].size();
    for (int n = 1; n <= max_n; ++n) {
      const auto cand = ngram_counts(candidates[s], n);
      const auto ref = ngram_counts(references[s], n);
      for (const auto& [gram, count] : cand) {
        total[static_cast<std::size_t>(n - 1)] += count;
        auto it = ref.find(gram);
        if (it != ref.end()) {
          matched[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
        }
      }
    }
  }

  // Effective-order convention: orders with no candidate n-grams at all drop
  // out of the geometric mean, so identity still scores 100 on corpora of
  // short sentences.
  result.precisions.resize(static_cast<std::size_t>(max_n), 0.0);
  bool zero_precision = false;
  double log_sum = 0.0;
  int effective_orders = 0;
  for (int n = 1; n <= max_n; ++n) {
    const std::size_t i = static_cast<std::size_t>(n - 1);
    double m = static_cast<double>(matched[i]);
    double t = static_cast<double>(total[i]);
    if (smoothing && n >= 2) {
      m += 1.0;
      t += 1.0;
    }
    if (t <= 0.0) continue;
    const double p = m / t;
    result.precisions[i] = p;
    ++effective_orders;
    if (p <= 0.0) {
      zero_precision = true;
    } else {
      log_sum += std::log(p);
    }
  }

  if (result.candidate_tokens == 0 || effective_orders == 0) {
    result.brevity_penalty = 0.0;
    result.score = 0.0;
    return result;
  }
  const double c = static_cast<double>(result.candidate_tokens);
  const double r = static_cast<double>(result.reference_tokens);
  result.brevity_penalty = std::min(1.0, std::exp(1.0 - r / c));
  result.score = zero_precision
                     ? 0.0
                     : 100.0 * result.brevity_penalty *
                           std::exp(log_sum / static_cast<double>(effective_orders));
  return result;
}

double pairwise_bleu(const std::vector<std::vector<TokenSeq>>& hypothesis_sets, bool smoothing) {
  const std::size_t k = hypothesis_sets.size();
  if (k < 2) throw std::invalid_argument("pairwise_bleu: need at least 2 hypothesis sets");
  for (const auto& set : hypothesis_sets) {
    if (set.size() != hypothesis_sets.front().size()) {
      throw std::invalid_argument("pairwise_bleu: hypothesis sets differ in length");
    }
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      sum += bleu(hypothesis_sets[a], hypothesis_sets[b], 4, smoothing).score;
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

JensenGap jensen_gap(const std::vector<double>& probabilities) {
  if (probabilities.empty()) throw std::invalid_argument("jensen_gap: empty probability list");
  double log_sum = 0.0;
  double sum = 0.0;
  for (double p : probabilities) {
    if (!(p > 0.0) || p > 1.0) {
      throw std::invalid_argument("jensen_gap: probabilities must lie in (0,1]");
    }
    log_sum += std::log(p);
    sum += p;
  }
  const double n = static_cast<double>(probabilities.size());
  return {log_sum / n, std::log(sum / n)};
}

ConfidenceStats confidence_stats(const std::vector<const Seq2SeqModel*>& teachers,
                                 const Seq2SeqModel* student,
                                 const std::vector<std::vector<int>>& probe_sources,
                                 const DecodeConfig& config) {
  if (teachers.empty()) throw std::invalid_argument("confidence_stats: no teacher models");
  for (const auto* t : teachers) {
    if (t->vocab_size() != teachers.front()->vocab_size()) {
      throw std::invalid_argument("confidence_stats: teacher vocabulary mismatch");
    }
  }
  if (student && student->vocab_size() != teachers.front()->vocab_size()) {
    throw std::invalid_argument("confidence_stats: student vocabulary mismatch");
  }

  double self_sum = 0.0;
  std::size_t self_n = 0;
  double ens_sum = 0.0;
  std::size_t ens_n = 0;
  double student_sum = 0.0;
  std::size_t student_n = 0;

  EnsembleSeq2Seq ensemble(teachers);

  for (const auto& source : probe_sources) {
    for (const auto* teacher : teachers) {
      auto scorer = teacher->scorer(source);
      const auto trace = greedy_trace(*scorer, source.size(), config);
      for (double p : trace.probs) {
        self_sum += p;
        ++self_n;
      }
      if (student) {
        auto student_scorer = student->scorer(source);
        std::vector<int> prefix;
        for (int token : trace.tokens) {
          const auto lp = student_scorer->next_log_probs(prefix);
          student_sum += std::exp(lp[static_cast<std::size_t>(token)]);
          ++student_n;
          prefix.push_back(token);
        }
      }
    }
    auto ens_scorer = ensemble.scorer(source);
    const auto ens_trace = greedy_trace(*ens_scorer, source.size(), config);
    for (double p : ens_trace.probs) {
      ens_sum += p;
      ++ens_n;
    }
  }

  ConfidenceStats stats;
  stats.teacher_self = self_n ? self_sum / static_cast<double>(self_n) : 0.0;
  stats.teacher_ensemble_max = ens_n ? ens_sum / static_cast<double>(ens_n) : 0.0;
  stats.has_student = student != nullptr;
  stats.student_on_teachers =
      student ? (student_n ? student_sum / static_cast<double>(student_n) : 0.0)
              : std::numeric_limits<double>::quiet_NaN();
  return stats;
}

ConditionStatus condition_check(const ConfidenceStats& stats) {
  if (stats.has_student && stats.student_on_teachers > stats.teacher_ensemble_max) {
    return ConditionStatus::BrokenStudentLink;
  }
  if (stats.teacher_ensemble_max > stats.teacher_self) {
    return ConditionStatus::BrokenEnsembleLink;
  }
  if (stats.teacher_self > 1.0) {
    return ConditionStatus::BrokenUnitLink;
  }
  return ConditionStatus::Holds;
}

const char* condition_status_name(ConditionStatus status) {
  switch (status) {
    case ConditionStatus::Holds: return "holds";
    case ConditionStatus::BrokenStudentLink: return "broken:student>ensemble_max";
    case ConditionStatus::BrokenEnsembleLink: return "broken:ensemble_max>teacher_self";
    case ConditionStatus::BrokenUnitLink: return "broken:teacher_self>1";
  }
  return "?";
}

std::string metric_csv_row(const std::string& metric, const std::string& split, double value,
                           const std::string& config_hash) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return metric + "," + split + "," + buf + "," + config_hash;
}

}  // namespace nmt
