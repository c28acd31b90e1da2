#include "nmt/decode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "nmt/threading.hpp"

namespace nmt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Partial {
  std::vector<int> gen;  // generated ids, no BOS
  double logprob = 0.0;
};

double normalized_score(double logprob, std::size_t gen_len, double alpha) {
  if (alpha == 0.0 || gen_len == 0) return logprob;
  return logprob / std::pow(static_cast<double>(gen_len), alpha);
}

Hypothesis finish(const Partial& p, double alpha) {
  Hypothesis h;
  h.tokens.reserve(p.gen.size() + 1);
  h.tokens.push_back(Vocabulary::kBos);
  h.tokens.insert(h.tokens.end(), p.gen.begin(), p.gen.end());
  h.logprob = p.logprob;
  h.score = normalized_score(p.logprob, p.gen.size(), alpha);
  return h;
}

// Final tie order: higher score, then lower token ids, then shorter.
bool hyp_better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  const std::size_t n = std::min(a.tokens.size(), b.tokens.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a.tokens[i] != b.tokens[i]) return a.tokens[i] < b.tokens[i];
  }
  return a.tokens.size() < b.tokens.size();
}

class TransformerScorer : public Scorer {
 public:
  TransformerScorer(const TranslationModel& model, const std::vector<int>& source)
      : model_(&model), enc_out_(encode_source(model, source)) {}

  std::size_t vocab_size() const override { return model_->config.vocab_size(); }

  std::vector<double> next_log_probs(const std::vector<int>& prefix) override {
    return next_token_log_probs(*model_, enc_out_, prefix);
  }

 private:
  const TranslationModel* model_;
  Tensor enc_out_;
};

class EnsembleScorer : public Scorer {
 public:
  EnsembleScorer(std::vector<std::unique_ptr<Scorer>> members)
      : members_(std::move(members)) {}

  std::size_t vocab_size() const override { return members_.front()->vocab_size(); }

  std::vector<double> next_log_probs(const std::vector<int>& prefix) override {
    const std::size_t v = vocab_size();
    std::vector<double> mean(v, 0.0);
    for (auto& m : members_) {
      const auto lp = m->next_log_probs(prefix);
      for (std::size_t t = 0; t < v; ++t) mean[t] += std::exp(lp[t]);
    }
    const double inv = 1.0 / static_cast<double>(members_.size());
    for (std::size_t t = 0; t < v; ++t) {
      mean[t] = mean[t] > 0.0 ? std::log(mean[t] * inv) : kNegInf;
    }
    return mean;
  }

 private:
  std::vector<std::unique_ptr<Scorer>> members_;
};

}  // namespace

std::size_t DecodeConfig::max_output_len(std::size_t source_len) const {
  const long long cap = std::llround(max_len_factor * static_cast<double>(source_len)) + 10;
  return static_cast<std::size_t>(std::max(1LL, cap));
}

std::vector<int> Hypothesis::stripped() const {
  std::vector<int> out;
  for (int id : tokens) {
    if (id == Vocabulary::kBos || id == Vocabulary::kEos || id == Vocabulary::kPad) continue;
    out.push_back(id);
  }
  return out;
}

std::unique_ptr<Scorer> TransformerSeq2Seq::scorer(const std::vector<int>& source) const {
  return std::make_unique<TransformerScorer>(*model_, source);
}

EnsembleSeq2Seq::EnsembleSeq2Seq(std::vector<const Seq2SeqModel*> members)
    : members_(std::move(members)) {
  if (members_.empty()) throw std::invalid_argument("ensemble: no member models");
  for (const auto* m : members_) {
    if (m->vocab_size() != members_.front()->vocab_size()) {
      throw std::invalid_argument("ensemble: vocabulary mismatch between member models");
    }
  }
}

std::size_t EnsembleSeq2Seq::vocab_size() const { return members_.front()->vocab_size(); }

std::unique_ptr<Scorer> EnsembleSeq2Seq::scorer(const std::vector<int>& source) const {
  std::vector<std::unique_ptr<Scorer>> scorers;
  scorers.reserve(members_.size());
  for (const auto* m : members_) scorers.push_back(m->scorer(source));
  return std::make_unique<EnsembleScorer>(std::move(scorers));
}

Hypothesis beam_search(Scorer& scorer, std::size_t source_len, const DecodeConfig& config,
                       std::vector<Hypothesis>* nbest) {
  if (config.beam_size == 0) throw std::invalid_argument("beam_search: beam_size must be positive");
  const std::size_t vocab = scorer.vocab_size();
  const std::size_t max_len = config.max_output_len(source_len);
  const double alpha = config.length_penalty_alpha;

  std::vector<Partial> ongoing = {Partial{}};
  std::vector<Hypothesis> finished;

  struct Cand {
    double logprob;
    int token;
    std::size_t parent;
  };

  for (std::size_t step = 0; step < max_len && !ongoing.empty(); ++step) {
    std::vector<Cand> cands;
    const bool last = step + 1 == max_len;
    for (std::size_t i = 0; i < ongoing.size(); ++i) {
      const auto lp = scorer.next_log_probs(ongoing[i].gen);
      if (lp.size() != vocab) throw std::runtime_error("beam_search: scorer vocab size changed");
      if (last) {
        // length cap: the only continuation is EOS
        cands.push_back({ongoing[i].logprob + lp[Vocabulary::kEos], Vocabulary::kEos, i});
        continue;
      }
      for (std::size_t t = 0; t < vocab; ++t) {
        if (t == Vocabulary::kPad || t == Vocabulary::kBos) continue;
        cands.push_back({ongoing[i].logprob + lp[t], static_cast<int>(t), i});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });
    if (cands.size() > config.beam_size) cands.resize(config.beam_size);

    std::vector<Partial> next;
    for (const auto& c : cands) {
      Partial p = ongoing[c.parent];
      p.gen.push_back(c.token);
      p.logprob = c.logprob;
      if (c.token == Vocabulary::kEos) {
        finished.push_back(finish(p, alpha));
      } else {
        next.push_back(std::move(p));
      }
    }
    ongoing = std::move(next);

    if (!finished.empty() && !ongoing.empty()) {
      // an ongoing hypothesis can at best keep its logprob and grow to max_len
      double best_bound = kNegInf;
      for (const auto& p : ongoing) {
        best_bound = std::max(best_bound, normalized_score(p.logprob, max_len, alpha));
      }
      double best_finished = kNegInf;
      for (const auto& h : finished) best_finished = std::max(best_finished, h.score);
      if (best_bound < best_finished) break;
    }
  }

  if (finished.empty()) {
    // unreachable through normal flow (the cap forces EOS); defensive fallback
    Partial p = ongoing.empty() ? Partial{} : ongoing.front();
    p.gen.push_back(Vocabulary::kEos);
    finished.push_back(finish(p, alpha));
  }
  std::sort(finished.begin(), finished.end(), hyp_better);
  if (nbest) {
    nbest->assign(finished.begin(),
                  finished.begin() + std::min<std::size_t>(finished.size(), config.beam_size));
  }
  return finished.front();
}

Hypothesis sample_decode(Scorer& scorer, std::size_t source_len, const DecodeConfig& config,
                         Rng& rng) {
  if (!(config.temperature > 0.0)) {
    throw std::invalid_argument("sample_decode: temperature must be > 0");
  }
  const std::size_t vocab = scorer.vocab_size();
  const std::size_t max_len = config.max_output_len(source_len);
  const double inv_t = 1.0 / config.temperature;

  Partial p;
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto lp = scorer.next_log_probs(p.gen);
    std::vector<double> scaled(vocab, kNegInf);
    double max_s = kNegInf;
    for (std::size_t t = 0; t < vocab; ++t) {
      if (t == Vocabulary::kPad || t == Vocabulary::kBos) continue;
      scaled[t] = lp[t] * inv_t;
      max_s = std::max(max_s, scaled[t]);
    }
    double z = 0.0;
    for (std::size_t t = 0; t < vocab; ++t) {
      if (std::isfinite(scaled[t])) z += std::exp(scaled[t] - max_s);
    }
    const double log_z = max_s + std::log(z);

    int token;
    if (step + 1 == max_len) {
      token = Vocabulary::kEos;
    } else {
      const double u = rng.uniform();
      double cum = 0.0;
      token = -1;
      for (std::size_t t = 0; t < vocab; ++t) {
        if (!std::isfinite(scaled[t])) continue;
        cum += std::exp(scaled[t] - log_z);
        if (u < cum) {
          token = static_cast<int>(t);
          break;
        }
      }
      if (token < 0) token = Vocabulary::kEos;  // numeric tail
    }
    p.gen.push_back(token);
    p.logprob += scaled[token] - log_z;
    if (token == Vocabulary::kEos) break;
  }
  if (p.gen.empty() || p.gen.back() != Vocabulary::kEos) {
    p.gen.push_back(Vocabulary::kEos);
  }
  return finish(p, config.length_penalty_alpha);
}

GreedyTrace greedy_trace(Scorer& scorer, std::size_t source_len, const DecodeConfig& config) {
  const std::size_t vocab = scorer.vocab_size();
  const std::size_t max_len = config.max_output_len(source_len);
  GreedyTrace trace;
  std::vector<int> gen;
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto lp = scorer.next_log_probs(gen);
    int token = Vocabulary::kEos;
    if (step + 1 < max_len) {
      double best = kNegInf;
      for (std::size_t t = 0; t < vocab; ++t) {
        if (t == Vocabulary::kPad || t == Vocabulary::kBos) continue;
        if (lp[t] > best) {
          best = lp[t];
          token = static_cast<int>(t);
        }
      }
    }
    trace.tokens.push_back(token);
    trace.probs.push_back(std::exp(lp[token]));
    gen.push_back(token);
    if (token == Vocabulary::kEos) break;
  }
  return trace;
}

Hypothesis decode_sentence(const Seq2SeqModel& model, const std::vector<int>& source,
                           const DecodeConfig& config, std::uint64_t seed) {
  auto scorer = model.scorer(source);
  switch (config.mode) {
    case DecodeMode::Greedy: {
      DecodeConfig greedy = config;
      greedy.beam_size = 1;
      return beam_search(*scorer, source.size(), greedy);
    }
    case DecodeMode::Beam:
      return beam_search(*scorer, source.size(), config);
    case DecodeMode::Sample: {
      Rng rng(seed);
      return sample_decode(*scorer, source.size(), config, rng);
    }
  }
  throw std::logic_error("decode_sentence: unknown mode");
}

std::vector<std::vector<int>> translate_corpus(const Seq2SeqModel& model,
                                               const std::vector<std::vector<int>>& sources,
                                               const DecodeConfig& config, std::uint64_t seed) {
  std::vector<std::vector<int>> out(sources.size());
  parallel_for(sources.size(), [&](std::size_t i) {
    const Hypothesis hyp = decode_sentence(model, sources[i], config, Rng::mix(seed, i));
    out[i] = hyp.stripped();
  });
  return out;
}

std::string format_nbest(const std::vector<Hypothesis>& nbest, const Vocabulary& vocab) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < nbest.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t", i, nbest[i].score);
    out += buf;
    const auto tokens = vocab.decode(nbest[i].tokens);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (t) out += ' ';
      out += tokens[t];
    }
    out += '\n';
  }
  return out;
}

}  // namespace nmt
