#pragma once

#include <string>
#include <vector>

#include "nmt/decode.hpp"

namespace nmt {

using TokenSeq = std::vector<std::string>;

struct BleuScore {
  double score = 0.0;  // 0..100
  std::vector<double> precisions;
  double brevity_penalty = 0.0;
  std::size_t candidate_tokens = 0;
  std::size_t reference_tokens = 0;
};

// Corpus-level clipped n-gram precision with brevity penalty, single
// reference, case-sensitive. With smoothing, add-one is applied to the
// numerator and denominator for n >= 2.
BleuScore bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
               int max_n = 4, bool smoothing = false);

// Mean corpus BLEU over all ordered pairs (a, b), a != b, scoring set a
// against set b as the reference. Lower means more diverse. Smoothed by
// default: short toy sentences zero out unsmoothed 4-gram precisions.
double pairwise_bleu(const std::vector<std::vector<TokenSeq>>& hypothesis_sets,
                     bool smoothing = true);

struct JensenGap {
  double lhs = 0.0;  // mean of logs
  double rhs = 0.0;  // log of mean
};

// lhs <= rhs always (Jensen); equality iff all probabilities are equal.
// Probabilities must lie in (0, 1].
JensenGap jensen_gap(const std::vector<double>& probabilities);

struct ConfidenceStats {
  // E[(1/N) sum_i p_{M_i}(y^i_j | y^i_{<j}, X)]: each teacher's probability
  // of its own greedy path, averaged over tokens, teachers, sentences.
  double teacher_self = 0.0;
  // E[max_y (1/N) sum_i p_{M_i}(y | y_{<j}, X)] along the ensemble-greedy path.
  double teacher_ensemble_max = 0.0;
  // E[(1/N) sum_i p_{student}(y^i_j | y^i_{<j}, X)]: the student's probability
  // on each teacher's greedy path. NaN when no student was given.
  double student_on_teachers = 0.0;
  bool has_student = false;
};

// Greedy paths include the final EOS token; means are flat over all
// (sentence, teacher, token) triples.
ConfidenceStats confidence_stats(const std::vector<const Seq2SeqModel*>& teachers,
                                 const Seq2SeqModel* student,
                                 const std::vector<std::vector<int>>& probe_sources,
                                 const DecodeConfig& config = {});

enum class ConditionStatus {
  Holds,
  BrokenStudentLink,    // student_on_teachers > teacher_ensemble_max
  BrokenEnsembleLink,   // teacher_ensemble_max > teacher_self
  BrokenUnitLink,       // teacher_self > 1
};

// Training monitor for the chain
// student_on_teachers <= teacher_ensemble_max <= teacher_self <= 1;
// reports the first violated link.
ConditionStatus condition_check(const ConfidenceStats& stats);

const char* condition_status_name(ConditionStatus status);

// "metric,split,value,config_hash" row (header elsewhere).
std::string metric_csv_row(const std::string& metric, const std::string& split, double value,
                           const std::string& config_hash);

}  // namespace nmt
