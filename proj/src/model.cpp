#include "nmt/model.hpp"

#include <cmath>
#include <array>
#include <cstring>
#include <stdexcept>

#include "nmt/kernels.hpp"
#include "nmt/ops.hpp"

namespace nmt {

namespace {

const kernels::Kernels& K() { return kernels::active(); }

constexpr double kMaskValue = -1e30;  // exp underflows to exactly 0

std::string pn(const std::string& prefix, const char* rest) { return prefix + rest; }

Tensor sinusoidal_positions(std::size_t len, std::size_t d) {
  Tensor pos({len, d});
  for (std::size_t p = 0; p < len; ++p) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle =
          static_cast<double>(p) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pos(p, i) = std::sin(angle);
      if (i + 1 < d) pos(p, i + 1) = std::cos(angle);
    }
  }
  return pos;
}

// Inverted dropout: mask entries are 0 or 1/(1-p).
Tensor draw_dropout_mask(Rng& rng, const std::vector<std::size_t>& shape, double p) {
  Tensor mask(shape);
  const double keep = 1.0 - p;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask(i) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

Tensor colsum(const Tensor& g) {
  const std::size_t cols = g.shape().back();
  const std::size_t rows = g.size() / cols;
  Tensor out({cols});
  for (std::size_t r = 0; r < rows; ++r) {
    K().add(out.data(), g.data() + r * cols, out.data(), cols);
  }
  return out;
}

void add_into(Tensor& acc, const Tensor& g) {
  K().add(acc.data(), g.data(), acc.data(), acc.size());
}

void add_param_grad(Parameters& grads, const std::string& name, const Tensor& g) {
  Tensor& t = grads.at(name);
  K().add(t.data(), g.data(), t.data(), t.size());
}

// ---------------------------------------------------------------------------
// forward contexts (stored only when gradients are needed)

struct AttnCtx {
  Tensor h_q;  // LN output feeding the queries
  Tensor kv;   // activations the keys/values were computed from
  Tensor q, k, v;
  std::vector<Tensor> probs;       // per head, post-softmax
  std::vector<Tensor> probs_drop;  // per head, post-dropout (== probs without)
  std::vector<Tensor> drop_mask;   // empty tensors when dropout is off
  Tensor ctx_concat;
};

struct FfnCtx {
  Tensor h;        // LN output
  Tensor pre_act;  // h*w1 + b1
  Tensor hidden;   // relu(pre_act), post-dropout
  Tensor drop_mask;
};

struct EmbCtx {
  std::vector<int> ids;
  Tensor drop_mask;
};

// ---------------------------------------------------------------------------

Tensor embed_sequence(const TranslationModel& model, const std::vector<int>& ids, Rng* rng,
                      EmbCtx* ctx) {
  const auto& cfg = model.config;
  Tensor x = ops::embedding_lookup(model.params.at("embed"), ids);
  const double s = std::sqrt(static_cast<double>(cfg.d_model));
  K().scale(x.data(), s, x.data(), x.size());
  const Tensor pos = sinusoidal_positions(ids.size(), cfg.d_model);
  add_into(x, pos);
  if (rng && cfg.dropout > 0.0) {
    Tensor mask = draw_dropout_mask(*rng, x.shape(), cfg.dropout);
    K().mul(x.data(), mask.data(), x.data(), x.size());
    if (ctx) ctx->drop_mask = std::move(mask);
  }
  if (ctx) ctx->ids = ids;
  return x;
}

void embed_backward(const TranslationModel& model, const EmbCtx& ctx, Tensor g,
                    Parameters& grads) {
  const auto& cfg = model.config;
  if (ctx.drop_mask.size() > 0) {
    K().mul(g.data(), ctx.drop_mask.data(), g.data(), g.size());
  }
  const double s = std::sqrt(static_cast<double>(cfg.d_model));
  K().scale(g.data(), s, g.data(), g.size());
  ops::embedding_backward(g, ctx.ids, &grads.at("embed"));
}

// h_q: LN output feeding the queries; kv: the activations keys/values are
// computed from (h_q itself for self-attention, the encoder output for
// cross-attention).
Tensor attention_forward(const TranslationModel& model, const std::string& prefix,
                         const Tensor& h_q, const Tensor& kv, bool causal, Rng* rng,
                         AttnCtx* ctx) {
  const auto& cfg = model.config;
  const auto& P = model.params;
  const std::size_t heads = cfg.n_heads;
  const std::size_t dh = cfg.d_model / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = ops::add(ops::matmul(h_q, P.at(pn(prefix, "wq"))), P.at(pn(prefix, "bq")));
  // keys carry no bias: softmax over keys is invariant to the per-query
  // constant shift a key bias would add, so the parameter would be dead
  Tensor k = ops::matmul(kv, P.at(pn(prefix, "wk")));
  Tensor v = ops::add(ops::matmul(kv, P.at(pn(prefix, "wv"))), P.at(pn(prefix, "bv")));

  std::vector<const Tensor*> head_parts;
  std::vector<Tensor> head_ctx(heads);
  if (ctx) {
    ctx->probs.resize(heads);
    ctx->probs_drop.resize(heads);
    ctx->drop_mask.resize(heads);
  }
  for (std::size_t hh = 0; hh < heads; ++hh) {
    const Tensor qh = ops::slice(q, 1, hh * dh, dh);
    const Tensor kh = ops::slice(k, 1, hh * dh, dh);
    const Tensor vh = ops::slice(v, 1, hh * dh, dh);
    Tensor scores = ops::matmul(qh, ops::transpose(kh));
    K().scale(scores.data(), scale, scores.data(), scores.size());
    if (causal) {
      for (std::size_t r = 0; r < scores.dim(0); ++r) {
        for (std::size_t c = r + 1; c < scores.dim(1); ++c) scores(r, c) = kMaskValue;
      }
    }
    Tensor probs = ops::softmax(scores);
    Tensor probs_drop = probs;
    if (rng && cfg.dropout > 0.0) {
      Tensor mask = draw_dropout_mask(*rng, probs.shape(), cfg.dropout);
      K().mul(probs_drop.data(), mask.data(), probs_drop.data(), probs_drop.size());
      if (ctx) ctx->drop_mask[hh] = std::move(mask);
    }
    head_ctx[hh] = ops::matmul(probs_drop, vh);
    if (ctx) {
      ctx->probs[hh] = std::move(probs);
      ctx->probs_drop[hh] = std::move(probs_drop);
    }
  }
  for (const auto& t : head_ctx) head_parts.push_back(&t);
  Tensor concat = ops::concat(head_parts, 1);
  Tensor out = ops::add(ops::matmul(concat, P.at(pn(prefix, "wo"))), P.at(pn(prefix, "bo")));
  if (ctx) {
    ctx->h_q = h_q;
    ctx->kv = kv;
    ctx->q = std::move(q);
    ctx->k = std::move(k);
    ctx->v = std::move(v);
    ctx->ctx_concat = std::move(concat);
  }
  return out;
}

// Returns d(h_q). The kv-stream gradient is added into *d_kv_acc when given
// (cross-attention); for self-attention (d_kv_acc == nullptr) it is folded
// into the returned query-stream gradient since both streams are the same
// tensor.
Tensor attention_backward(const TranslationModel& model, const std::string& prefix,
                          const AttnCtx& ctx, const Tensor& d_out, Tensor* d_kv_acc,
                          Parameters& grads) {
  const auto& cfg = model.config;
  const auto& P = model.params;
  const std::size_t heads = cfg.n_heads;
  const std::size_t dh = cfg.d_model / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor d_concat, d_wo;
  ops::matmul_backward(ctx.ctx_concat, P.at(pn(prefix, "wo")), d_out, &d_concat, &d_wo);
  add_param_grad(grads, pn(prefix, "wo"), d_wo);
  add_param_grad(grads, pn(prefix, "bo"), colsum(d_out));

  Tensor dq(ctx.q.shape()), dk(ctx.k.shape()), dv(ctx.v.shape());
  for (std::size_t hh = 0; hh < heads; ++hh) {
    const Tensor qh = ops::slice(ctx.q, 1, hh * dh, dh);
    const Tensor kh = ops::slice(ctx.k, 1, hh * dh, dh);
    const Tensor vh = ops::slice(ctx.v, 1, hh * dh, dh);
    const Tensor d_ctxh = ops::slice(d_concat, 1, hh * dh, dh);

    Tensor d_probs_drop, d_vh;
    ops::matmul_backward(ctx.probs_drop[hh], vh, d_ctxh, &d_probs_drop, &d_vh);
    Tensor d_probs = std::move(d_probs_drop);
    if (ctx.drop_mask.size() > hh && ctx.drop_mask[hh].size() > 0) {
      K().mul(d_probs.data(), ctx.drop_mask[hh].data(), d_probs.data(), d_probs.size());
    }
    Tensor d_scores = ops::softmax_backward(ctx.probs[hh], d_probs);
    K().scale(d_scores.data(), scale, d_scores.data(), d_scores.size());
    Tensor d_qh, d_khT;
    ops::matmul_backward(qh, ops::transpose(kh), d_scores, &d_qh, &d_khT);
    ops::slice_backward_into(d_qh, 1, hh * dh, &dq);
    ops::slice_backward_into(ops::transpose(d_khT), 1, hh * dh, &dk);
    ops::slice_backward_into(d_vh, 1, hh * dh, &dv);
  }

  Tensor d_hq, d_w;
  ops::matmul_backward(ctx.h_q, P.at(pn(prefix, "wq")), dq, &d_hq, &d_w);
  add_param_grad(grads, pn(prefix, "wq"), d_w);
  add_param_grad(grads, pn(prefix, "bq"), colsum(dq));

  Tensor d_kv_k, d_wk;
  ops::matmul_backward(ctx.kv, P.at(pn(prefix, "wk")), dk, &d_kv_k, &d_wk);
  add_param_grad(grads, pn(prefix, "wk"), d_wk);

  Tensor d_kv_v, d_wv;
  ops::matmul_backward(ctx.kv, P.at(pn(prefix, "wv")), dv, &d_kv_v, &d_wv);
  add_param_grad(grads, pn(prefix, "wv"), d_wv);
  add_param_grad(grads, pn(prefix, "bv"), colsum(dv));

  if (d_kv_acc) {
    add_into(*d_kv_acc, d_kv_k);
    add_into(*d_kv_acc, d_kv_v);
  } else {
    // self-attention: fold the kv gradient into the query-stream gradient
    add_into(d_hq, d_kv_k);
    add_into(d_hq, d_kv_v);
  }
  return d_hq;
}

Tensor ffn_forward(const TranslationModel& model, const std::string& prefix, const Tensor& h,
                   Rng* rng, FfnCtx* ctx) {
  const auto& cfg = model.config;
  const auto& P = model.params;
  Tensor pre = ops::add(ops::matmul(h, P.at(pn(prefix, "w1"))), P.at(pn(prefix, "b1")));
  Tensor hid = ops::relu(pre);
  Tensor hid_drop = hid;
  Tensor mask;
  if (rng && cfg.dropout > 0.0) {
    mask = draw_dropout_mask(*rng, hid.shape(), cfg.dropout);
    K().mul(hid_drop.data(), mask.data(), hid_drop.data(), hid_drop.size());
  }
  Tensor out = ops::add(ops::matmul(hid_drop, P.at(pn(prefix, "w2"))), P.at(pn(prefix, "b2")));
  if (ctx) {
    ctx->h = h;
    ctx->pre_act = std::move(pre);
    ctx->hidden = std::move(hid_drop);
    ctx->drop_mask = std::move(mask);
  }
  return out;
}

Tensor ffn_backward(const TranslationModel& model, const std::string& prefix, const FfnCtx& ctx,
                    const Tensor& d_out, Parameters& grads) {
  const auto& P = model.params;
  Tensor d_hidden, d_w2;
  ops::matmul_backward(ctx.hidden, P.at(pn(prefix, "w2")), d_out, &d_hidden, &d_w2);
  add_param_grad(grads, pn(prefix, "w2"), d_w2);
  add_param_grad(grads, pn(prefix, "b2"), colsum(d_out));
  if (ctx.drop_mask.size() > 0) {
    K().mul(d_hidden.data(), ctx.drop_mask.data(), d_hidden.data(), d_hidden.size());
  }
  Tensor d_pre = ops::relu_backward(ctx.pre_act, d_hidden);
  Tensor d_h, d_w1;
  ops::matmul_backward(ctx.h, P.at(pn(prefix, "w1")), d_pre, &d_h, &d_w1);
  add_param_grad(grads, pn(prefix, "w1"), d_w1);
  add_param_grad(grads, pn(prefix, "b1"), colsum(d_pre));
  return d_h;
}

Tensor layer_norm_fwd(const TranslationModel& model, const std::string& g_name,
                      const std::string& b_name, const Tensor& x) {
  return ops::layer_norm(x, model.params.at(g_name), model.params.at(b_name),
                         ops::kLayerNormEps);
}

Tensor layer_norm_bwd(const TranslationModel& model, const std::string& g_name,
                      const std::string& b_name, const Tensor& x, const Tensor& g,
                      Parameters& grads) {
  Tensor dx, dgain, dbias;
  ops::layer_norm_backward(x, model.params.at(g_name), ops::kLayerNormEps, g, &dx, &dgain,
                           &dbias);
  add_param_grad(grads, g_name, dgain);
  add_param_grad(grads, b_name, dbias);
  return dx;
}

struct FullCtx {
  EmbCtx src_emb, tgt_emb;
  std::vector<std::pair<AttnCtx, FfnCtx>> enc;  // attention + ffn per layer
  std::vector<Tensor> enc_att_in, enc_ffn_in;   // residual-stream inputs
  Tensor enc_ln_in;
  Tensor enc_out;
  std::vector<std::array<AttnCtx, 2>> dec_att;  // self, cross
  std::vector<FfnCtx> dec_ffn;
  std::vector<Tensor> dec_self_in, dec_cross_in, dec_ffn_in;
  Tensor dec_ln_in;
  Tensor dec_out;
};

std::string enc_prefix(std::size_t layer) { return "enc" + std::to_string(layer) + "."; }
std::string dec_prefix(std::size_t layer) { return "dec" + std::to_string(layer) + "."; }

Tensor encoder_forward(const TranslationModel& model, const std::vector<int>& src_framed,
                       Rng* rng, FullCtx* ctx) {
  const auto& cfg = model.config;
  Tensor x = embed_sequence(model, src_framed, rng, ctx ? &ctx->src_emb : nullptr);
  if (ctx) {
    ctx->enc.resize(cfg.n_layers);
    ctx->enc_att_in.resize(cfg.n_layers);
    ctx->enc_ffn_in.resize(cfg.n_layers);
  }
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = enc_prefix(l);
    if (ctx) ctx->enc_att_in[l] = x;
    Tensor h = layer_norm_fwd(model, p + "ln1.g", p + "ln1.b", x);
    Tensor a = attention_forward(model, p + "att.", h, h, /*causal=*/false, rng,
                                 ctx ? &ctx->enc[l].first : nullptr);
    add_into(x, a);
    if (ctx) ctx->enc_ffn_in[l] = x;
    Tensor h2 = layer_norm_fwd(model, p + "ln2.g", p + "ln2.b", x);
    Tensor f = ffn_forward(model, p + "ffn.", h2, rng, ctx ? &ctx->enc[l].second : nullptr);
    add_into(x, f);
  }
  if (ctx) ctx->enc_ln_in = x;
  Tensor out = layer_norm_fwd(model, "enc_ln.g", "enc_ln.b", x);
  if (ctx) ctx->enc_out = out;
  return out;
}

Tensor decoder_forward(const TranslationModel& model, const Tensor& enc_out,
                       const std::vector<int>& dec_input, Rng* rng, FullCtx* ctx) {
  const auto& cfg = model.config;
  Tensor y = embed_sequence(model, dec_input, rng, ctx ? &ctx->tgt_emb : nullptr);
  if (ctx) {
    ctx->dec_att.resize(cfg.n_layers);
    ctx->dec_ffn.resize(cfg.n_layers);
    ctx->dec_self_in.resize(cfg.n_layers);
    ctx->dec_cross_in.resize(cfg.n_layers);
    ctx->dec_ffn_in.resize(cfg.n_layers);
  }
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = dec_prefix(l);
    if (ctx) ctx->dec_self_in[l] = y;
    Tensor h = layer_norm_fwd(model, p + "ln1.g", p + "ln1.b", y);
    Tensor a = attention_forward(model, p + "self.", h, h, /*causal=*/true, rng,
                                 ctx ? &ctx->dec_att[l][0] : nullptr);
    add_into(y, a);
    if (ctx) ctx->dec_cross_in[l] = y;
    Tensor h2 = layer_norm_fwd(model, p + "ln2.g", p + "ln2.b", y);
    Tensor c = attention_forward(model, p + "cross.", h2, enc_out, /*causal=*/false, rng,
                                 ctx ? &ctx->dec_att[l][1] : nullptr);
    add_into(y, c);
    if (ctx) ctx->dec_ffn_in[l] = y;
    Tensor h3 = layer_norm_fwd(model, p + "ln3.g", p + "ln3.b", y);
    Tensor f = ffn_forward(model, p + "ffn.", h3, rng, ctx ? &ctx->dec_ffn[l] : nullptr);
    add_into(y, f);
  }
  if (ctx) ctx->dec_ln_in = y;
  Tensor out = layer_norm_fwd(model, "dec_ln.g", "dec_ln.b", y);
  if (ctx) ctx->dec_out = out;
  return out;
}

Tensor output_logits(const TranslationModel& model, const Tensor& dec_out) {
  const auto& cfg = model.config;
  Tensor logits;
  if (cfg.tied_embeddings) {
    logits = ops::matmul(dec_out, ops::transpose(model.params.at("embed")));
  } else {
    logits = ops::matmul(dec_out, model.params.at("out.w"));
  }
  return ops::add(logits, model.params.at("out.b"));
}

std::vector<int> frame_source(const TranslationModel& model, const std::vector<int>& src) {
  std::vector<int> framed = src;
  framed.push_back(Vocabulary::kEos);
  if (framed.size() > model.config.max_positions) {
    throw std::runtime_error("source length " + std::to_string(framed.size()) +
                             " exceeds max_positions " +
                             std::to_string(model.config.max_positions));
  }
  return framed;
}

// Backward through the whole network for one sentence. d_logits is the
// gradient of the (token-summed) loss wrt logits.
void full_backward(const TranslationModel& model, const FullCtx& ctx, const Tensor& d_logits,
                   Parameters& grads) {
  const auto& cfg = model.config;

  // logits = dec_out * W + b
  Tensor d_dec_out;
  if (cfg.tied_embeddings) {
    const Tensor embT = ops::transpose(model.params.at("embed"));
    Tensor d_embT;
    ops::matmul_backward(ctx.dec_out, embT, d_logits, &d_dec_out, &d_embT);
    add_param_grad(grads, "embed", ops::transpose(d_embT));
  } else {
    Tensor d_w;
    ops::matmul_backward(ctx.dec_out, model.params.at("out.w"), d_logits, &d_dec_out, &d_w);
    add_param_grad(grads, "out.w", d_w);
  }
  add_param_grad(grads, "out.b", colsum(d_logits));

  Tensor dy = layer_norm_bwd(model, "dec_ln.g", "dec_ln.b", ctx.dec_ln_in, d_dec_out, grads);

  Tensor d_enc_out(ctx.enc_out.shape());
  for (std::size_t l = cfg.n_layers; l-- > 0;) {
    const std::string p = dec_prefix(l);
    // ffn block
    Tensor d_h3 = ffn_backward(model, p + "ffn.", ctx.dec_ffn[l], dy, grads);
    add_into(dy, layer_norm_bwd(model, p + "ln3.g", p + "ln3.b", ctx.dec_ffn_in[l], d_h3, grads));
    // cross-attention block
    Tensor d_h2 =
        attention_backward(model, p + "cross.", ctx.dec_att[l][1], dy, &d_enc_out, grads);
    add_into(dy,
             layer_norm_bwd(model, p + "ln2.g", p + "ln2.b", ctx.dec_cross_in[l], d_h2, grads));
    // self-attention block
    Tensor d_h1 =
        attention_backward(model, p + "self.", ctx.dec_att[l][0], dy, nullptr, grads);
    add_into(dy,
             layer_norm_bwd(model, p + "ln1.g", p + "ln1.b", ctx.dec_self_in[l], d_h1, grads));
  }
  embed_backward(model, ctx.tgt_emb, dy, grads);

  Tensor dx =
      layer_norm_bwd(model, "enc_ln.g", "enc_ln.b", ctx.enc_ln_in, d_enc_out, grads);
  for (std::size_t l = cfg.n_layers; l-- > 0;) {
    const std::string p = enc_prefix(l);
    Tensor d_h2 = ffn_backward(model, p + "ffn.", ctx.enc[l].second, dx, grads);
    add_into(dx, layer_norm_bwd(model, p + "ln2.g", p + "ln2.b", ctx.enc_ffn_in[l], d_h2, grads));
    Tensor d_h1 =
        attention_backward(model, p + "att.", ctx.enc[l].first, dx, nullptr, grads);
    add_into(dx, layer_norm_bwd(model, p + "ln1.g", p + "ln1.b", ctx.enc_att_in[l], d_h1, grads));
  }
  embed_backward(model, ctx.src_emb, dx, grads);
}

void check_ids(const TranslationModel& model, const std::vector<int>& ids) {
  const int v = static_cast<int>(model.config.vocab_size());
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw std::runtime_error("token id " + std::to_string(id) + " out of vocabulary (size " +
                               std::to_string(v) + ")");
    }
  }
}

}  // namespace

const char* direction_name(Direction d) {
  return d == Direction::SourceToTarget ? "s2t" : "t2s";
}

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ffn == 0 || max_positions == 0) {
    throw std::invalid_argument("ModelConfig: dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("ModelConfig: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("ModelConfig: dropout must be in [0,1)");
  }
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw std::invalid_argument("ModelConfig: label_smoothing must be in [0,1)");
  }
  if (!vocab) throw std::invalid_argument("ModelConfig: vocabulary is not set");
}

double warmup_inv_sqrt_lr(double base_lr, std::uint64_t warmup, std::uint64_t t) {
  const double td = static_cast<double>(t);
  const double wd = static_cast<double>(warmup);
  return base_lr * std::min(td / wd, std::sqrt(wd / td));
}

EncodedCorpus encode_corpus(const ParallelCorpus& corpus, const Vocabulary& vocab) {
  EncodedCorpus out;
  out.reserve(corpus.pairs.size());
  for (const auto& pair : corpus.pairs) {
    out.push_back({vocab.encode(pair.source), vocab.encode(pair.target)});
  }
  return out;
}

TranslationModel init_model(const ModelConfig& config, std::uint64_t seed, Direction direction) {
  config.validate();
  TranslationModel model;
  model.config = config;
  model.direction = direction;
  model.seed = seed;

  Rng rng(Rng::mix(seed, 0x1a17));
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  const std::size_t d = config.d_model;
  const std::size_t V = config.vocab_size();

  auto gaussian_tensor = [&](std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t(i) = scale * rng.gaussian();
    return t;
  };
  auto ones = [&](std::size_t n) {
    Tensor t({n});
    for (std::size_t i = 0; i < n; ++i) t(i) = 1.0;
    return t;
  };

  Parameters& P = model.params;
  P.emplace("embed", gaussian_tensor({V, d}));
  auto add_attn = [&](const std::string& prefix) {
    P.emplace(prefix + "wq", gaussian_tensor({d, d}));
    P.emplace(prefix + "bq", Tensor({d}));
    P.emplace(prefix + "wk", gaussian_tensor({d, d}));
    P.emplace(prefix + "wv", gaussian_tensor({d, d}));
    P.emplace(prefix + "bv", Tensor({d}));
    P.emplace(prefix + "wo", gaussian_tensor({d, d}));
    P.emplace(prefix + "bo", Tensor({d}));
  };
  auto add_ln = [&](const std::string& prefix) {
    P.emplace(prefix + "g", ones(d));
    P.emplace(prefix + "b", Tensor({d}));
  };
  auto add_ffn = [&](const std::string& prefix) {
    P.emplace(prefix + "w1", gaussian_tensor({d, config.d_ffn}));
    P.emplace(prefix + "b1", Tensor({config.d_ffn}));
    P.emplace(prefix + "w2", gaussian_tensor({config.d_ffn, d}));
    P.emplace(prefix + "b2", Tensor({d}));
  };

  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::string p = enc_prefix(l);
    add_ln(p + "ln1.");
    add_attn(p + "att.");
    add_ln(p + "ln2.");
    add_ffn(p + "ffn.");
  }
  add_ln("enc_ln.");
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::string p = dec_prefix(l);
    add_ln(p + "ln1.");
    add_attn(p + "self.");
    add_ln(p + "ln2.");
    add_attn(p + "cross.");
    add_ln(p + "ln3.");
    add_ffn(p + "ffn.");
  }
  add_ln("dec_ln.");
  if (!config.tied_embeddings) {
    P.emplace("out.w", gaussian_tensor({d, V}));
  }
  P.emplace("out.b", Tensor({V}));
  return model;
}

Tensor encode_source(const TranslationModel& model, const std::vector<int>& source_ids) {
  check_ids(model, source_ids);
  return encoder_forward(model, frame_source(model, source_ids), nullptr, nullptr);
}

Tensor forward_logits(const TranslationModel& model, const std::vector<int>& source_ids,
                      const std::vector<int>& target_prefix_ids) {
  check_ids(model, source_ids);
  check_ids(model, target_prefix_ids);
  if (target_prefix_ids.empty()) {
    throw std::invalid_argument("forward_logits: empty target prefix");
  }
  if (target_prefix_ids.size() > model.config.max_positions) {
    throw std::runtime_error("target length " + std::to_string(target_prefix_ids.size()) +
                             " exceeds max_positions " +
                             std::to_string(model.config.max_positions));
  }
  const Tensor enc_out = encoder_forward(model, frame_source(model, source_ids), nullptr, nullptr);
  std::vector<int> dec_input;
  dec_input.reserve(target_prefix_ids.size());
  dec_input.push_back(Vocabulary::kBos);
  dec_input.insert(dec_input.end(), target_prefix_ids.begin(), target_prefix_ids.end() - 1);
  const Tensor dec_out = decoder_forward(model, enc_out, dec_input, nullptr, nullptr);
  return output_logits(model, dec_out);
}

std::vector<double> next_token_log_probs(const TranslationModel& model, const Tensor& enc_out,
                                         const std::vector<int>& prefix) {
  std::vector<int> dec_input;
  dec_input.reserve(prefix.size() + 1);
  dec_input.push_back(Vocabulary::kBos);
  dec_input.insert(dec_input.end(), prefix.begin(), prefix.end());
  if (dec_input.size() > model.config.max_positions) {
    throw std::runtime_error("decode length " + std::to_string(dec_input.size()) +
                             " exceeds max_positions " +
                             std::to_string(model.config.max_positions));
  }
  const Tensor dec_out = decoder_forward(model, enc_out, dec_input, nullptr, nullptr);
  const Tensor logits = output_logits(model, dec_out);
  const std::size_t V = logits.dim(1);
  Tensor last({1, V});
  std::memcpy(last.data(), logits.data() + (logits.dim(0) - 1) * V, V * sizeof(double));
  const Tensor lp = ops::log_softmax(last);
  return lp.values();
}

LossResult loss_and_grads(const TranslationModel& model, const Batch& batch,
                          double label_smoothing,
                          std::optional<std::uint64_t> dropout_seed) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grads: empty batch");
  const std::size_t V = model.config.vocab_size();
  LossResult result;
  result.grads = zeros_like(model.params);
  double loss_sum = 0.0;
  std::size_t token_count = 0;

  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& pair = batch[s];
    check_ids(model, pair.source);
    check_ids(model, pair.target);
    std::vector<int> gold = pair.target;
    gold.push_back(Vocabulary::kEos);
    std::vector<int> dec_input;
    dec_input.reserve(gold.size());
    dec_input.push_back(Vocabulary::kBos);
    dec_input.insert(dec_input.end(), gold.begin(), gold.end() - 1);
    if (dec_input.size() > model.config.max_positions) {
      throw std::runtime_error("target length exceeds max_positions");
    }

    std::optional<Rng> rng;
    if (dropout_seed && model.config.dropout > 0.0) {
      rng.emplace(Rng::mix(*dropout_seed, s));
    }
    FullCtx ctx;
    const Tensor enc_out =
        encoder_forward(model, frame_source(model, pair.source), rng ? &*rng : nullptr, &ctx);
    const Tensor dec_out = decoder_forward(model, enc_out, dec_input, rng ? &*rng : nullptr, &ctx);
    const Tensor logits = output_logits(model, dec_out);
    const Tensor lp = ops::log_softmax(logits);

    Tensor d_logits(logits.shape());
    const double eps = label_smoothing;
    for (std::size_t j = 0; j < gold.size(); ++j) {
      const int g = gold[j];
      if (g == Vocabulary::kPad) continue;  // PAD positions carry no loss
      ++token_count;
      const double* row = lp.data() + j * V;
      double smooth_nll = 0.0;
      if (eps > 0.0) {
        smooth_nll = -kernels::active().sum(row, V) / static_cast<double>(V);
      }
      loss_sum += -(1.0 - eps) * row[g] + eps * smooth_nll;
      double* drow = d_logits.data() + j * V;
      for (std::size_t t = 0; t < V; ++t) {
        drow[t] = std::exp(row[t]) - eps / static_cast<double>(V);
      }
      drow[g] -= 1.0 - eps;
    }
    full_backward(model, ctx, d_logits, result.grads);
  }

  if (token_count == 0) throw std::invalid_argument("loss_and_grads: batch has no target tokens");
  const double inv = 1.0 / static_cast<double>(token_count);
  result.loss = loss_sum * inv;
  result.tokens = token_count;
  for (auto& [name, g] : result.grads) {
    kernels::active().scale(g.data(), inv, g.data(), g.size());
  }
  if (!std::isfinite(result.loss)) {
    throw std::runtime_error("loss_and_grads: non-finite loss (divergence)");
  }
  return result;
}

void adam_step(Parameters& params, const Parameters& grads, OptimizerState& state) {
  if (state.m.empty()) {
    state.m = zeros_like(params);
    state.v = zeros_like(params);
  }
  state.t += 1;
  const double lr = warmup_inv_sqrt_lr(state.base_lr, state.warmup_steps, state.t);
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end() || !git->second.same_shape(p)) {
      throw std::invalid_argument("adam_step: gradient missing or mis-shaped for '" + name + "'");
    }
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    const Tensor& g = git->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m(i) = b1 * m(i) + (1.0 - b1) * g(i);
      v(i) = b2 * v(i) + (1.0 - b2) * g(i) * g(i);
      const double mhat = m(i) / bc1;
      const double vhat = v(i) / bc2;
      p(i) -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

double perplexity(const TranslationModel& model, const EncodedCorpus& corpus) {
  double nll_sum = 0.0;
  std::size_t tokens = 0;
  for (const auto& pair : corpus) {
    std::vector<int> gold = pair.target;
    gold.push_back(Vocabulary::kEos);
    const Tensor enc_out =
        encoder_forward(model, frame_source(model, pair.source), nullptr, nullptr);
    std::vector<int> dec_input;
    dec_input.push_back(Vocabulary::kBos);
    dec_input.insert(dec_input.end(), gold.begin(), gold.end() - 1);
    const Tensor dec_out = decoder_forward(model, enc_out, dec_input, nullptr, nullptr);
    const Tensor lp = ops::log_softmax(output_logits(model, dec_out));
    for (std::size_t j = 0; j < gold.size(); ++j) {
      if (gold[j] == Vocabulary::kPad) continue;
      nll_sum += -lp(j, static_cast<std::size_t>(gold[j]));
      ++tokens;
    }
  }
  if (tokens == 0) return 1.0;
  return std::exp(nll_sum / static_cast<double>(tokens));
}

Parameters average_checkpoints(const std::vector<Checkpoint>& checkpoints) {
  if (checkpoints.empty()) {
    throw std::invalid_argument("average_checkpoints: need at least one checkpoint");
  }
  Parameters sum = zeros_like(checkpoints.front().params);
  for (const auto& ckpt : checkpoints) {
    if (ckpt.params.size() != sum.size()) {
      throw std::invalid_argument("average_checkpoints: parameter sets differ");
    }
    add_scaled(sum, ckpt.params, 1.0);
  }
  const double inv = 1.0 / static_cast<double>(checkpoints.size());
  for (auto& [name, t] : sum) {
    kernels::active().scale(t.data(), inv, t.data(), t.size());
  }
  return sum;
}

TranslationModel model_from_checkpoint(const Checkpoint& ckpt) {
  TranslationModel model;
  model.config = ckpt.config;
  model.params = ckpt.params;
  model.direction = ckpt.direction;
  model.seed = ckpt.seed;
  return model;
}

}  // namespace nmt
