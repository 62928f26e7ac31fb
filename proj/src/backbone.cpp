#include "backbone.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "sft.hpp"

namespace bisel {

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::Tabular: return "tabular";
    case BackboneKind::Linear: return "linear";
    case BackboneKind::AttentionLite: return "attention-lite";
  }
  return "?";
}

BackboneKind backbone_kind_from_string(const std::string& s) {
  if (s == "tabular") return BackboneKind::Tabular;
  if (s == "linear") return BackboneKind::Linear;
  if (s == "attention-lite") return BackboneKind::AttentionLite;
  throw_config("unknown backbone kind '" + s + "'");
}

void BackboneSpec::validate() const {
  if (vocab < 2) throw_config("backbone: vocab must be >= 2");
  if (question_len < 1) throw_config("backbone: question_len must be >= 1");
  if (max_context <= question_len) throw_config("backbone: max_context must exceed question_len");
  if (kind != BackboneKind::Tabular && hidden < 1) throw_config("backbone: hidden must be >= 1");
  if (kind == BackboneKind::Tabular && question_count() > 50'000'000)
    throw_config("backbone: tabular question table too large");
}

std::int64_t BackboneSpec::question_count() const {
  std::int64_t n = 1;
  for (int i = 0; i < question_len; ++i) n *= vocab;
  return n;
}

std::int64_t BackboneSpec::param_count() const {
  switch (kind) {
    case BackboneKind::Tabular:
      return question_count() * max_response_len() * vocab;
    case BackboneKind::Linear:
      return static_cast<std::int64_t>(vocab) * (hidden * vocab + 1);
    case BackboneKind::AttentionLite: {
      const std::int64_t e = hidden;
      return e * vocab + e * max_context + 3 * e * e + static_cast<std::int64_t>(vocab) * e;
    }
  }
  return 0;
}

Params init_params(const BackboneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Params p;
  p.values.assign(spec.param_count(), 0.0);
  if (spec.kind != BackboneKind::Tabular) {
    Rng rng(mix_seed(seed));
    for (double& v : p.values) v = 0.02 * rng.next_gaussian();
  }
  return p;
}

namespace {

void check_sample(const BackboneSpec& spec, std::span<const int> x, std::span<const int> y) {
  if (x.empty()) throw_invalid("backbone: empty question");
  for (int t : x) {
    if (t < 0 || t >= spec.vocab) throw_invalid("backbone: question token outside vocabulary");
  }
  for (int t : y) {
    if (t < 0 || t >= spec.vocab) throw_invalid("backbone: response token outside vocabulary");
  }
  if (spec.kind == BackboneKind::Tabular) {
    if (static_cast<int>(x.size()) != spec.question_len)
      throw_invalid("tabular backbone: question length must equal " +
                    std::to_string(spec.question_len));
    if (static_cast<int>(y.size()) > spec.max_response_len())
      throw_invalid("tabular backbone: response exceeds table positions");
  }
  if (static_cast<int>(x.size() + y.size()) > spec.max_context)
    throw_invalid("backbone: sequence exceeds max context length " +
                  std::to_string(spec.max_context));
}

void check_params(const BackboneSpec& spec, const Params& params) {
  if (static_cast<std::int64_t>(params.values.size()) != spec.param_count())
    throw_invalid("backbone: parameter vector length does not match spec");
}

std::int64_t question_id(const BackboneSpec& spec, std::span<const int> x) {
  std::int64_t id = 0;
  std::int64_t base = 1;
  for (int t : x) {
    id += t * base;
    base *= spec.vocab;
  }
  return id;
}

std::size_t tabular_col_offset(const BackboneSpec& spec, std::int64_t qid, int d) {
  return static_cast<std::size_t>((qid * spec.max_response_len() + d) * spec.vocab);
}

// ---- linear backbone ----------------------------------------------------

// Feature slots for predicting position d: one-hots of the last `window`
// tokens of (x ++ y_<d), youngest first, plus a trailing bias slot.
void linear_feature_indices(const BackboneSpec& spec, std::span<const int> x,
                            std::span<const int> prefix, std::vector<int>& out) {
  const int window = spec.hidden;
  const int V = spec.vocab;
  out.clear();
  const int ctx_len = static_cast<int>(x.size() + prefix.size());
  for (int j = 0; j < window; ++j) {
    const int pos = ctx_len - 1 - j;
    if (pos < 0) break;
    const int tok = pos < static_cast<int>(x.size())
                        ? x[pos]
                        : prefix[pos - static_cast<int>(x.size())];
    out.push_back(j * V + tok);
  }
  out.push_back(window * V);  // bias
}

void linear_col(const BackboneSpec& spec, const Params& params, const std::vector<int>& feats,
                std::span<double> out) {
  const int V = spec.vocab;
  std::fill(out.begin(), out.end(), 0.0);
  for (int f : feats) {
    const double* wcol = params.values.data() + static_cast<std::size_t>(f) * V;
    for (int v = 0; v < V; ++v) out[v] += wcol[v];
  }
}

// ---- attention-lite backbone ---------------------------------------------

struct AttnLayout {
  int e, V, T;
  std::size_t off_embed, off_pos, off_wq, off_wk, off_wv, off_head;

  explicit AttnLayout(const BackboneSpec& spec)
      : e(spec.hidden), V(spec.vocab), T(spec.max_context) {
    off_embed = 0;
    off_pos = off_embed + static_cast<std::size_t>(e) * V;
    off_wq = off_pos + static_cast<std::size_t>(e) * T;
    off_wk = off_wq + static_cast<std::size_t>(e) * e;
    off_wv = off_wk + static_cast<std::size_t>(e) * e;
    off_head = off_wv + static_cast<std::size_t>(e) * e;
  }

  std::span<const double> embed_col(const Params& p, int tok) const {
    return {p.values.data() + off_embed + static_cast<std::size_t>(tok) * e,
            static_cast<std::size_t>(e)};
  }
  std::span<const double> pos_col(const Params& p, int t) const {
    return {p.values.data() + off_pos + static_cast<std::size_t>(t) * e,
            static_cast<std::size_t>(e)};
  }
};

// y = M h for an e x e map stored column-major at `off`.
void apply_map(const Params& p, std::size_t off, int e, std::span<const double> h,
               std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (int j = 0; j < e; ++j) {
    const double hj = h[j];
    const double* col = p.values.data() + off + static_cast<std::size_t>(j) * e;
    for (int i = 0; i < e; ++i) out[i] += col[i] * hj;
  }
}

// Forward state kept for the backward pass.
struct AttnTrace {
  int n = 0;                          // sequence length
  std::vector<std::vector<double>> h, q, k, v, o;  // per position, dim e
  std::vector<std::vector<double>> attn;           // attn[t]: weights over s<=t
};

AttnTrace attn_forward(const BackboneSpec& spec, const Params& params,
                       std::span<const int> seq) {
  const AttnLayout lay(spec);
  const int e = lay.e;
  const int n = static_cast<int>(seq.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(e));
  AttnTrace tr;
  tr.n = n;
  tr.h.assign(n, std::vector<double>(e));
  tr.q.assign(n, std::vector<double>(e));
  tr.k.assign(n, std::vector<double>(e));
  tr.v.assign(n, std::vector<double>(e));
  tr.o.assign(n, std::vector<double>(e));
  tr.attn.assign(n, {});
  for (int t = 0; t < n; ++t) {
    const auto emb = lay.embed_col(params, seq[t]);
    const auto pos = lay.pos_col(params, t);
    for (int i = 0; i < e; ++i) tr.h[t][i] = emb[i] + pos[i];
    apply_map(params, lay.off_wq, e, tr.h[t], tr.q[t]);
    apply_map(params, lay.off_wk, e, tr.h[t], tr.k[t]);
    apply_map(params, lay.off_wv, e, tr.h[t], tr.v[t]);
  }
  std::vector<double> scores;
  for (int t = 0; t < n; ++t) {
    scores.assign(t + 1, 0.0);
    for (int s = 0; s <= t; ++s) {
      double dot = 0.0;
      for (int i = 0; i < e; ++i) dot += tr.q[t][i] * tr.k[s][i];
      scores[s] = dot * scale;
    }
    tr.attn[t].assign(t + 1, 0.0);
    detail::softmax_col(scores, tr.attn[t]);
    for (int s = 0; s <= t; ++s) {
      const double a = tr.attn[t][s];
      for (int i = 0; i < e; ++i) tr.o[t][i] += a * tr.v[s][i];
    }
  }
  return tr;
}

void attn_head_logits(const BackboneSpec& spec, const Params& params, const AttnTrace& tr, int t,
                      std::span<double> out) {
  const AttnLayout lay(spec);
  std::fill(out.begin(), out.end(), 0.0);
  for (int i = 0; i < lay.e; ++i) {
    const double ri = tr.h[t][i] + tr.o[t][i];
    const double* ucol = params.values.data() + lay.off_head + static_cast<std::size_t>(i) * lay.V;
    for (int v = 0; v < lay.V; ++v) out[v] += ucol[v] * ri;
  }
}

std::vector<double> attn_backward(const BackboneSpec& spec, const Params& params,
                                  std::span<const int> seq, const AttnTrace& tr,
                                  const Matrix& logit_grad, int first_pred_pos) {
  const AttnLayout lay(spec);
  const int e = lay.e;
  const int V = lay.V;
  const int n = tr.n;
  const double scale = 1.0 / std::sqrt(static_cast<double>(e));
  std::vector<double> grad(params.values.size(), 0.0);

  std::vector<std::vector<double>> dh(n, std::vector<double>(e, 0.0));
  std::vector<std::vector<double>> dq(n, std::vector<double>(e, 0.0));
  std::vector<std::vector<double>> dk(n, std::vector<double>(e, 0.0));
  std::vector<std::vector<double>> dv(n, std::vector<double>(e, 0.0));

  // Head and attention backward for each predicting position.
  std::vector<double> dr(e), dout(e), dalpha, dscore;
  for (int d = 0; d < logit_grad.cols; ++d) {
    const int t = first_pred_pos + d;
    const auto gl = logit_grad.col(d);
    // dr = U^T gl; dU += gl (h_t + o_t)^T
    for (int i = 0; i < e; ++i) {
      const double ri = tr.h[t][i] + tr.o[t][i];
      const double* ucol = params.values.data() + lay.off_head + static_cast<std::size_t>(i) * V;
      double* gucol = grad.data() + lay.off_head + static_cast<std::size_t>(i) * V;
      double acc = 0.0;
      for (int v = 0; v < V; ++v) {
        acc += ucol[v] * gl[v];
        gucol[v] += gl[v] * ri;
      }
      dr[i] = acc;
    }
    for (int i = 0; i < e; ++i) {
      dh[t][i] += dr[i];
      dout[i] = dr[i];
    }
    // o_t = sum_s a_s v_s
    dalpha.assign(t + 1, 0.0);
    for (int s = 0; s <= t; ++s) {
      double acc = 0.0;
      const double a = tr.attn[t][s];
      for (int i = 0; i < e; ++i) {
        acc += dout[i] * tr.v[s][i];
        dv[s][i] += a * dout[i];
      }
      dalpha[s] = acc;
    }
    // softmax backward
    double inner = 0.0;
    for (int s = 0; s <= t; ++s) inner += tr.attn[t][s] * dalpha[s];
    dscore.assign(t + 1, 0.0);
    for (int s = 0; s <= t; ++s) dscore[s] = tr.attn[t][s] * (dalpha[s] - inner);
    // score_s = q_t . k_s * scale
    for (int s = 0; s <= t; ++s) {
      const double g = dscore[s] * scale;
      for (int i = 0; i < e; ++i) {
        dq[t][i] += g * tr.k[s][i];
        dk[s][i] += g * tr.q[t][i];
      }
    }
  }

  // Projections and embeddings.
  for (int s = 0; s < n; ++s) {
    for (int j = 0; j < e; ++j) {
      const double hj = tr.h[s][j];
      const double* wq = params.values.data() + lay.off_wq + static_cast<std::size_t>(j) * e;
      const double* wk = params.values.data() + lay.off_wk + static_cast<std::size_t>(j) * e;
      const double* wv = params.values.data() + lay.off_wv + static_cast<std::size_t>(j) * e;
      double* gwq = grad.data() + lay.off_wq + static_cast<std::size_t>(j) * e;
      double* gwk = grad.data() + lay.off_wk + static_cast<std::size_t>(j) * e;
      double* gwv = grad.data() + lay.off_wv + static_cast<std::size_t>(j) * e;
      double acc = 0.0;
      for (int i = 0; i < e; ++i) {
        acc += wq[i] * dq[s][i] + wk[i] * dk[s][i] + wv[i] * dv[s][i];
        gwq[i] += dq[s][i] * hj;
        gwk[i] += dk[s][i] * hj;
        gwv[i] += dv[s][i] * hj;
      }
      dh[s][j] += acc;
    }
    double* gemb = grad.data() + lay.off_embed + static_cast<std::size_t>(seq[s]) * e;
    double* gpos = grad.data() + lay.off_pos + static_cast<std::size_t>(s) * e;
    for (int i = 0; i < e; ++i) {
      gemb[i] += dh[s][i];
      gpos[i] += dh[s][i];
    }
  }
  return grad;
}

}  // namespace

Matrix forward(const BackboneSpec& spec, const Params& params, const TokenSample& sample) {
  spec.validate();
  check_params(spec, params);
  check_sample(spec, sample.x, sample.y);
  const int V = spec.vocab;
  const int D = static_cast<int>(sample.y.size());
  Matrix z(V, D);
  switch (spec.kind) {
    case BackboneKind::Tabular: {
      const std::int64_t qid = question_id(spec, sample.x);
      for (int d = 0; d < D; ++d) {
        const double* src = params.values.data() + tabular_col_offset(spec, qid, d);
        std::copy(src, src + V, z.col(d).begin());
      }
      break;
    }
    case BackboneKind::Linear: {
      std::vector<int> feats;
      for (int d = 0; d < D; ++d) {
        linear_feature_indices(spec, sample.x, std::span<const int>(sample.y).first(d), feats);
        linear_col(spec, params, feats, z.col(d));
      }
      break;
    }
    case BackboneKind::AttentionLite: {
      std::vector<int> seq(sample.x);
      seq.insert(seq.end(), sample.y.begin(), sample.y.end());
      const AttnTrace tr = attn_forward(spec, params, seq);
      const int lx = static_cast<int>(sample.x.size());
      for (int d = 0; d < D; ++d) attn_head_logits(spec, params, tr, lx + d - 1, z.col(d));
      break;
    }
  }
  return z;
}

std::vector<double> next_token_logits(const BackboneSpec& spec, const Params& params,
                                      std::span<const int> x, std::span<const int> prefix) {
  spec.validate();
  check_params(spec, params);
  check_sample(spec, x, prefix);
  if (static_cast<int>(x.size() + prefix.size()) >= spec.max_context)
    throw_invalid("backbone: no room to extend sequence within max context");
  if (spec.kind == BackboneKind::Tabular &&
      static_cast<int>(prefix.size()) >= spec.max_response_len())
    throw_invalid("tabular backbone: response exceeds table positions");
  const int V = spec.vocab;
  std::vector<double> out(V, 0.0);
  switch (spec.kind) {
    case BackboneKind::Tabular: {
      const std::int64_t qid = question_id(spec, x);
      const double* src =
          params.values.data() + tabular_col_offset(spec, qid, static_cast<int>(prefix.size()));
      std::copy(src, src + V, out.begin());
      break;
    }
    case BackboneKind::Linear: {
      std::vector<int> feats;
      linear_feature_indices(spec, x, prefix, feats);
      linear_col(spec, params, feats, out);
      break;
    }
    case BackboneKind::AttentionLite: {
      // Single-query decode: attention only at the last position.
      const AttnLayout lay(spec);
      const int e = lay.e;
      std::vector<int> seq(x.begin(), x.end());
      seq.insert(seq.end(), prefix.begin(), prefix.end());
      const int n = static_cast<int>(seq.size());
      const int t = n - 1;
      const double scale = 1.0 / std::sqrt(static_cast<double>(e));
      std::vector<std::vector<double>> h(n, std::vector<double>(e));
      for (int s = 0; s < n; ++s) {
        const auto emb = lay.embed_col(params, seq[s]);
        const auto pos = lay.pos_col(params, s);
        for (int i = 0; i < e; ++i) h[s][i] = emb[i] + pos[i];
      }
      std::vector<double> q(e);
      apply_map(params, lay.off_wq, e, h[t], q);
      std::vector<double> keys(e), scores(n);
      for (int s = 0; s <= t; ++s) {
        apply_map(params, lay.off_wk, e, h[s], keys);
        double dot = 0.0;
        for (int i = 0; i < e; ++i) dot += q[i] * keys[i];
        scores[s] = dot * scale;
      }
      std::vector<double> alpha(n);
      detail::softmax_col(std::span<const double>(scores.data(), n),
                          std::span<double>(alpha.data(), n));
      std::vector<double> o(e, 0.0), val(e);
      for (int s = 0; s <= t; ++s) {
        apply_map(params, lay.off_wv, e, h[s], val);
        for (int i = 0; i < e; ++i) o[i] += alpha[s] * val[i];
      }
      for (int i = 0; i < e; ++i) {
        const double ri = h[t][i] + o[i];
        const double* ucol =
            params.values.data() + lay.off_head + static_cast<std::size_t>(i) * V;
        for (int v = 0; v < V; ++v) out[v] += ucol[v] * ri;
      }
      break;
    }
  }
  return out;
}

std::vector<double> backprop_logit_grad(const BackboneSpec& spec, const Params& params,
                                        const TokenSample& sample, const Matrix& logit_grad) {
  check_params(spec, params);
  check_sample(spec, sample.x, sample.y);
  const int V = spec.vocab;
  const int D = static_cast<int>(sample.y.size());
  if (logit_grad.rows != V || logit_grad.cols != D)
    throw_invalid("backprop_logit_grad: gradient shape mismatch");
  switch (spec.kind) {
    case BackboneKind::Tabular: {
      std::vector<double> grad(params.values.size(), 0.0);
      const std::int64_t qid = question_id(spec, sample.x);
      for (int d = 0; d < D; ++d) {
        double* dst = grad.data() + tabular_col_offset(spec, qid, d);
        const auto src = logit_grad.col(d);
        for (int v = 0; v < V; ++v) dst[v] += src[v];
      }
      return grad;
    }
    case BackboneKind::Linear: {
      std::vector<double> grad(params.values.size(), 0.0);
      std::vector<int> feats;
      for (int d = 0; d < D; ++d) {
        linear_feature_indices(spec, sample.x, std::span<const int>(sample.y).first(d), feats);
        const auto src = logit_grad.col(d);
        for (int f : feats) {
          double* dst = grad.data() + static_cast<std::size_t>(f) * V;
          for (int v = 0; v < V; ++v) dst[v] += src[v];
        }
      }
      return grad;
    }
    case BackboneKind::AttentionLite: {
      std::vector<int> seq(sample.x);
      seq.insert(seq.end(), sample.y.begin(), sample.y.end());
      const AttnTrace tr = attn_forward(spec, params, seq);
      return attn_backward(spec, params, seq, tr, logit_grad,
                           static_cast<int>(sample.x.size()) - 1);
    }
  }
  throw Error(ErrorCode::Internal, "unreachable backbone kind");
}

LossGrad loss_and_grad(const BackboneSpec& spec, const Params& params, const TokenSample& sample) {
  const Matrix z = forward(spec, params, sample);
  LossGrad out;
  out.loss = sft_loss(z, sample.y);
  out.grad = backprop_logit_grad(spec, params, sample, sft_loss_grad_z(z, sample.y));
  return out;
}

std::vector<int> generate(const BackboneSpec& spec, const Params& params, std::span<const int> x,
                          const GenerationConfig& cfg, Rng& rng) {
  if (cfg.temperature < 0.0) throw_invalid("generate: temperature must be nonnegative");
  if (cfg.max_tokens < 1) throw_invalid("generate: max_tokens must be positive");
  std::vector<int> out;
  out.reserve(cfg.max_tokens);
  std::vector<double> probs(spec.vocab);
  for (int step = 0; step < cfg.max_tokens; ++step) {
    std::vector<double> logits = next_token_logits(spec, params, x, out);
    if (cfg.temperature == 0.0) {
      int best = 0;
      for (int v = 1; v < spec.vocab; ++v) {
        if (logits[v] > logits[best]) best = v;
      }
      out.push_back(best);
    } else {
      for (double& l : logits) l /= cfg.temperature;
      detail::softmax_col(logits, probs);
      out.push_back(static_cast<int>(rng.next_categorical(probs)));
    }
  }
  return out;
}

}  // namespace bisel
