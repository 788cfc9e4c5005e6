#include "verirl/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "verirl/common.hpp"
#include "verirl/rng.hpp"

namespace verirl::kernels {

using policy::Layout;
using policy::PolicyParams;

namespace {

constexpr int kChunks = 8;

void head_forward(const PolicyParams& p, const Layout& lay, const std::vector<double>& h, ForwardCache& cache) {
  const int V = p.arch.vocab_size;
  const int H = lay.policy_head.in;
  const double* W = p.theta.data() + lay.policy_head.weight;
  const double* b = p.theta.data() + lay.policy_head.bias;
  cache.logp.resize(V);
  double maxz = -std::numeric_limits<double>::infinity();
  for (int v = 0; v < V; ++v) {
    if (v == p.arch.pad_id) continue;
    double z = b[v];
    const double* row = W + static_cast<std::size_t>(v) * H;
    for (int k = 0; k < H; ++k) z += row[k] * h[k];
    cache.logp[v] = z;
    maxz = std::max(maxz, z);
  }
  double sum = 0.0;
  for (int v = 0; v < V; ++v) {
    if (v != p.arch.pad_id) sum += std::exp(cache.logp[v] - maxz);
  }
  const double lse = maxz + std::log(sum);
  for (int v = 0; v < V; ++v) {
    cache.logp[v] = v == p.arch.pad_id ? -std::numeric_limits<double>::infinity() : cache.logp[v] - lse;
  }
  const double* wv = p.theta.data() + lay.value_weight;
  double value = p.theta[lay.value_bias];
  for (int k = 0; k < H; ++k) value += wv[k] * h[k];
  cache.value = value;
}

void dense_tanh(const double* W, const double* b, const std::vector<double>& in, int out_dim,
                std::vector<double>& out) {
  const int in_dim = static_cast<int>(in.size());
  out.resize(out_dim);
  for (int j = 0; j < out_dim; ++j) {
    double a = b[j];
    const double* row = W + static_cast<std::size_t>(j) * in_dim;
    for (int i = 0; i < in_dim; ++i) a += row[i] * in[i];
    out[j] = std::tanh(a);
  }
}

struct Terms {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double logprob = 0.0;
  double log_ratio = 0.0;
  bool clipped = false;
};

// Per-sample loss pieces and the gradient w.r.t. logits (dz) and value (dv),
// already scaled by weight / N.
Terms sample_terms(const PolicyParams& p, const ForwardCache& c, const TokenSample& s, const LossWeights& w,
                   double scale, double* dz, double* dv) {
  const int V = p.arch.vocab_size;
  const int pad = p.arch.pad_id;
  Terms t;
  const double lp = c.logp[s.token];
  double H = 0.0;
  for (int v = 0; v < V; ++v) {
    if (v == pad) continue;
    H -= std::exp(c.logp[v]) * c.logp[v];
  }
  t.entropy = H;
  t.logprob = lp;
  t.log_ratio = lp - s.old_logp;
  const double ratio = std::exp(lp - s.old_logp);
  const double unclipped = ratio * s.advantage;
  const double clipped = std::clamp(ratio, 1.0 - w.clip_eps, 1.0 + w.clip_eps) * s.advantage;
  double objective = std::min(unclipped, clipped);
  // Dual clip: a negative advantage cannot push the loss past (1 + eps)|A|.
  if (s.advantage < 0) objective = std::max(objective, (1.0 + w.clip_eps) * s.advantage);
  const bool active = objective == unclipped;
  t.policy_loss = -objective;
  t.clipped = !active;
  const double diff = c.value - s.ret;
  t.value_loss = 0.5 * diff * diff;

  if (dz) {
    // d/dlogp of the per-sample objective, then through log-softmax.
    double dlogp = w.logprob;
    if (w.policy != 0.0 && active) dlogp += -w.policy * unclipped;
    for (int v = 0; v < V; ++v) {
      if (v == pad) {
        dz[v] = 0.0;
        continue;
      }
      const double pv = std::exp(c.logp[v]);
      double g = -dlogp * pv + w.entropy * pv * (c.logp[v] + H);
      if (v == s.token) g += dlogp;
      dz[v] = g * s.weight * scale;
    }
    *dv = w.value * diff * s.weight * scale;
  }
  return t;
}

void accumulate(LossResult& r, const Terms& t, const TokenSample& s, const LossWeights& w, double scale) {
  const double k = s.weight * scale;
  r.policy_loss += k * t.policy_loss;
  r.value_loss += k * t.value_loss;
  r.entropy += k * t.entropy;
  r.loss += k * (w.policy * t.policy_loss + w.value * t.value_loss - w.entropy * t.entropy + w.logprob * t.logprob);
  r.clip_frac += t.clipped ? scale : 0.0;
  r.approx_kl += -t.log_ratio * scale;
}

// Backprop from (dz, dv) through the head and all hidden layers except the
// first layer's input side. Returns d(pre-activation) of layer 0 in `da0`.
void backprop_trunk(const PolicyParams& p, const Layout& lay, const ForwardCache& c, const double* dz, double dv,
                    double* grad, std::vector<double>& da0, std::vector<double>& scratch) {
  const int V = p.arch.vocab_size;
  const int L = static_cast<int>(lay.layers.size());
  const int H = lay.policy_head.in;
  const double* theta = p.theta.data();
  const std::vector<double>& hL = c.hidden[L - 1];

  std::vector<double> dh(H, 0.0);
  {
    const double* W = theta + lay.policy_head.weight;
    double* gW = grad + lay.policy_head.weight;
    double* gb = grad + lay.policy_head.bias;
    for (int v = 0; v < V; ++v) {
      const double g = dz[v];
      if (g == 0.0) continue;
      gb[v] += g;
      const double* row = W + static_cast<std::size_t>(v) * H;
      double* grow = gW + static_cast<std::size_t>(v) * H;
      for (int k = 0; k < H; ++k) {
        grow[k] += g * hL[k];
        dh[k] += g * row[k];
      }
    }
    const double* wv = theta + lay.value_weight;
    double* gwv = grad + lay.value_weight;
    grad[lay.value_bias] += dv;
    for (int k = 0; k < H; ++k) {
      gwv[k] += dv * hL[k];
      dh[k] += dv * wv[k];
    }
  }
  for (int l = L - 1; l >= 0; --l) {
    const auto& d = lay.layers[l];
    const std::vector<double>& h = c.hidden[l];
    std::vector<double>& da = (l == 0) ? da0 : scratch;
    da.resize(d.out);
    for (int j = 0; j < d.out; ++j) da[j] = dh[j] * (1.0 - h[j] * h[j]);
    if (l == 0) break;
    const std::vector<double>& in = c.hidden[l - 1];
    const double* W = theta + d.weight;
    double* gW = grad + d.weight;
    double* gb = grad + d.bias;
    std::vector<double> dprev(d.in, 0.0);
    for (int j = 0; j < d.out; ++j) {
      const double g = da[j];
      gb[j] += g;
      const double* row = W + static_cast<std::size_t>(j) * d.in;
      double* grow = gW + static_cast<std::size_t>(j) * d.in;
      for (int i = 0; i < d.in; ++i) {
        grow[i] += g * in[i];
        dprev[i] += g * row[i];
      }
    }
    dh = std::move(dprev);
  }
}

void check_token(const PolicyParams& p, const TokenSample& s) {
  if (s.token < 0 || s.token >= p.arch.vocab_size || s.token == p.arch.pad_id)
    throw Error(ErrorCode::LengthMismatch, "loss sample references an invalid token");
}

LossResult reference_loss(const PolicyParams& p, std::span<const TokenSample> samples, const LossWeights& w,
                          bool want_grad) {
  const Layout lay(p.arch);
  const int V = p.arch.vocab_size;
  const int E = p.arch.embed_dim;
  const int Wn = p.arch.window;
  LossResult r;
  if (want_grad) r.grad.assign(lay.total, 0.0);
  if (samples.empty()) return r;
  const double scale = 1.0 / static_cast<double>(samples.size());
  ForwardCache cache;
  std::vector<double> dz(V), da0, scratch;
  for (const TokenSample& s : samples) {
    check_token(p, s);
    reference::forward(p, s.context, cache);
    double dv = 0.0;
    Terms t = sample_terms(p, cache, s, w, scale, want_grad ? dz.data() : nullptr, &dv);
    accumulate(r, t, s, w, scale);
    if (!want_grad) continue;
    backprop_trunk(p, lay, cache, dz.data(), dv, r.grad.data(), da0, scratch);
    // first layer on the explicit embedded window
    const auto& d0 = lay.layers[0];
    const double* W0 = p.theta.data() + d0.weight;
    double* gW0 = r.grad.data() + d0.weight;
    double* gb0 = r.grad.data() + d0.bias;
    for (int j = 0; j < d0.out; ++j) {
      const double g = da0[j];
      gb0[j] += g;
      for (int pos = 0; pos < Wn; ++pos) {
        const int tok = s.context[pos];
        const double* emb = p.theta.data() + lay.embedding + static_cast<std::size_t>(tok) * E;
        double* gemb = r.grad.data() + lay.embedding + static_cast<std::size_t>(tok) * E;
        for (int e = 0; e < E; ++e) {
          const std::size_t col = static_cast<std::size_t>(pos) * E + e;
          gW0[static_cast<std::size_t>(j) * d0.in + col] += g * emb[e];
          gemb[e] += g * W0[static_cast<std::size_t>(j) * d0.in + col];
        }
      }
    }
  }
  return r;
}

LossResult fast_loss(const PolicyParams& p, std::span<const TokenSample> samples, const LossWeights& w,
                     bool want_grad) {
  const Layout lay(p.arch);
  const int V = p.arch.vocab_size;
  const int E = p.arch.embed_dim;
  const int Wn = p.arch.window;
  const int H1 = lay.layers[0].out;
  LossResult total;
  if (want_grad) total.grad.assign(lay.total, 0.0);
  if (samples.empty()) return total;
  for (const TokenSample& s : samples) check_token(p, s);

  const CompiledPolicy compiled(p);
  const double scale = 1.0 / static_cast<double>(samples.size());
  const std::size_t n = samples.size();
  const std::size_t table = static_cast<std::size_t>(Wn) * V * H1;

  std::vector<LossResult> parts(kChunks);
  std::vector<std::vector<double>> tables(want_grad ? kChunks : 0);

#pragma omp parallel for schedule(static, 1)
  for (int chunk = 0; chunk < kChunks; ++chunk) {
    const std::size_t begin = n * chunk / kChunks;
    const std::size_t end = n * (chunk + 1) / kChunks;
    LossResult& r = parts[chunk];
    if (begin == end) continue;
    if (want_grad) {
      r.grad.assign(lay.total, 0.0);
      tables[chunk].assign(table, 0.0);
    }
    ForwardCache cache;
    std::vector<double> dz(V), da0, scratch;
    for (std::size_t i = begin; i < end; ++i) {
      const TokenSample& s = samples[i];
      compiled.forward(s.context, cache);
      double dv = 0.0;
      Terms t = sample_terms(p, cache, s, w, scale, want_grad ? dz.data() : nullptr, &dv);
      accumulate(r, t, s, w, scale);
      if (!want_grad) continue;
      backprop_trunk(p, lay, cache, dz.data(), dv, r.grad.data(), da0, scratch);
      double* gb0 = r.grad.data() + lay.layers[0].bias;
      for (int j = 0; j < H1; ++j) gb0[j] += da0[j];
      double* G = tables[chunk].data();
      for (int pos = 0; pos < Wn; ++pos) {
        double* g = G + (static_cast<std::size_t>(pos) * V + s.context[pos]) * H1;
        for (int j = 0; j < H1; ++j) g[j] += da0[j];
      }
    }
    if (!want_grad) continue;
    // Expand the (position, token) accumulators into layer-0 and embedding grads.
    const auto& d0 = lay.layers[0];
    const double* W0 = p.theta.data() + d0.weight;
    double* gW0 = r.grad.data() + d0.weight;
    const double* G = tables[chunk].data();
    for (int pos = 0; pos < Wn; ++pos) {
      for (int tok = 0; tok < V; ++tok) {
        const double* g = G + (static_cast<std::size_t>(pos) * V + tok) * H1;
        bool any = false;
        for (int j = 0; j < H1 && !any; ++j) any = g[j] != 0.0;
        if (!any) continue;
        const double* emb = p.theta.data() + lay.embedding + static_cast<std::size_t>(tok) * E;
        double* gemb = r.grad.data() + lay.embedding + static_cast<std::size_t>(tok) * E;
        for (int j = 0; j < H1; ++j) {
          const std::size_t base = static_cast<std::size_t>(j) * d0.in + static_cast<std::size_t>(pos) * E;
          for (int e = 0; e < E; ++e) {
            gW0[base + e] += g[j] * emb[e];
            gemb[e] += g[j] * W0[base + e];
          }
        }
      }
    }
    tables[chunk].clear();
    tables[chunk].shrink_to_fit();
  }

  for (const LossResult& r : parts) {
    total.loss += r.loss;
    total.policy_loss += r.policy_loss;
    total.value_loss += r.value_loss;
    total.entropy += r.entropy;
    total.clip_frac += r.clip_frac;
    total.approx_kl += r.approx_kl;
    if (want_grad && !r.grad.empty()) {
      for (std::size_t k = 0; k < total.grad.size(); ++k) total.grad[k] += r.grad[k];
    }
  }
  return total;
}

}  // namespace

namespace reference {

void forward(const PolicyParams& p, const int* window, ForwardCache& cache) {
  const Layout lay(p.arch);
  const int E = p.arch.embed_dim;
  std::vector<double> x(static_cast<std::size_t>(p.arch.window) * E);
  for (int pos = 0; pos < p.arch.window; ++pos) {
    const double* emb = p.theta.data() + lay.embedding + static_cast<std::size_t>(window[pos]) * E;
    std::copy(emb, emb + E, x.begin() + static_cast<std::ptrdiff_t>(pos) * E);
  }
  cache.hidden.resize(lay.layers.size());
  const std::vector<double>* in = &x;
  for (std::size_t l = 0; l < lay.layers.size(); ++l) {
    const auto& d = lay.layers[l];
    dense_tanh(p.theta.data() + d.weight, p.theta.data() + d.bias, *in, d.out, cache.hidden[l]);
    in = &cache.hidden[l];
  }
  head_forward(p, lay, cache.hidden.back(), cache);
}

}  // namespace reference

CompiledPolicy::CompiledPolicy(const PolicyParams& params) : params_(&params), layout_(params.arch) {
  const int V = params.arch.vocab_size;
  const int E = params.arch.embed_dim;
  const int Wn = params.arch.window;
  const auto& d0 = layout_.layers[0];
  const int H1 = d0.out;
  table_.assign(static_cast<std::size_t>(Wn) * V * H1, 0.0);
  const double* W0 = params.theta.data() + d0.weight;
#pragma omp parallel for schedule(static)
  for (int pos = 0; pos < Wn; ++pos) {
    for (int tok = 0; tok < V; ++tok) {
      const double* emb = params.theta.data() + layout_.embedding + static_cast<std::size_t>(tok) * E;
      double* out = table_.data() + (static_cast<std::size_t>(pos) * V + tok) * H1;
      for (int j = 0; j < H1; ++j) {
        const double* w = W0 + static_cast<std::size_t>(j) * d0.in + static_cast<std::size_t>(pos) * E;
        double a = 0.0;
        for (int e = 0; e < E; ++e) a += w[e] * emb[e];
        out[j] = a;
      }
    }
  }
}

void CompiledPolicy::forward(const int* window, ForwardCache& cache) const {
  const PolicyParams& p = *params_;
  const int V = p.arch.vocab_size;
  const auto& d0 = layout_.layers[0];
  const int H1 = d0.out;
  cache.hidden.resize(layout_.layers.size());
  std::vector<double>& h0 = cache.hidden[0];
  h0.assign(p.theta.begin() + static_cast<std::ptrdiff_t>(d0.bias),
            p.theta.begin() + static_cast<std::ptrdiff_t>(d0.bias + H1));
  for (int pos = 0; pos < p.arch.window; ++pos) {
    const double* row = table_.data() + (static_cast<std::size_t>(pos) * V + window[pos]) * H1;
    for (int j = 0; j < H1; ++j) h0[j] += row[j];
  }
  for (double& v : h0) v = std::tanh(v);
  for (std::size_t l = 1; l < layout_.layers.size(); ++l) {
    const auto& d = layout_.layers[l];
    dense_tanh(p.theta.data() + d.weight, p.theta.data() + d.bias, cache.hidden[l - 1], d.out, cache.hidden[l]);
  }
  head_forward(p, layout_, cache.hidden.back(), cache);
}

LossResult loss_and_grad(const PolicyParams& params, std::span<const TokenSample> samples, const LossWeights& weights,
                         Exec exec, bool want_grad) {
  LossResult r = exec == Exec::Reference ? reference_loss(params, samples, weights, want_grad)
                                         : fast_loss(params, samples, weights, want_grad);
  if (!std::isfinite(r.loss)) throw Error(ErrorCode::NonfiniteLoss, "loss is not finite");
  for (double g : r.grad) {
    if (!std::isfinite(g)) throw Error(ErrorCode::NonfiniteLoss, "gradient is not finite");
  }
  return r;
}

void forward_batch(const PolicyParams& params, std::span<const int> windows, std::span<double> logp_out,
                   std::span<double> values_out, Exec exec) {
  const int Wn = params.arch.window;
  const int V = params.arch.vocab_size;
  const std::size_t n = windows.size() / static_cast<std::size_t>(Wn);
  if (windows.size() % Wn != 0 || logp_out.size() != n * V || values_out.size() != n)
    throw Error(ErrorCode::LengthMismatch, "forward_batch buffer sizes disagree");
  if (exec == Exec::Reference) {
    ForwardCache cache;
    for (std::size_t i = 0; i < n; ++i) {
      reference::forward(params, windows.data() + i * Wn, cache);
      std::copy(cache.logp.begin(), cache.logp.end(), logp_out.begin() + static_cast<std::ptrdiff_t>(i * V));
      values_out[i] = cache.value;
    }
    return;
  }
  const CompiledPolicy compiled(params);
#pragma omp parallel
  {
    ForwardCache cache;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      compiled.forward(windows.data() + i * Wn, cache);
      std::copy(cache.logp.begin(), cache.logp.end(), logp_out.begin() + i * V);
      values_out[i] = cache.value;
    }
  }
}

policy::SampledSequence sample(const CompiledPolicy& compiled, std::span<const int> prompt, double temperature,
                               int max_len, std::uint64_t seed) {
  const PolicyParams& params = compiled.params();
  if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be >= 0");
  const int V = params.arch.vocab_size;
  const int Wn = params.arch.window;
  Rng rng(seed);
  policy::SampledSequence out;
  std::vector<int> ctx = policy::make_window(prompt, Wn, params.arch.pad_id);
  ForwardCache cache;
  std::vector<double> weights(V);
  for (int step = 0; step < max_len; ++step) {
    compiled.forward(ctx.data(), cache);
    int tok = -1;
    if (temperature == 0.0) {
      double best = -std::numeric_limits<double>::infinity();
      for (int v = 0; v < V; ++v) {
        if (v != params.arch.pad_id && cache.logp[v] > best) {
          best = cache.logp[v];
          tok = v;
        }
      }
    } else {
      double top = -std::numeric_limits<double>::infinity();
      for (int v = 0; v < V; ++v)
        if (v != params.arch.pad_id) top = std::max(top, cache.logp[v]);
      double total = 0.0;
      for (int v = 0; v < V; ++v) {
        weights[v] = v == params.arch.pad_id ? 0.0 : std::exp((cache.logp[v] - top) / temperature);
        total += weights[v];
      }
      double u = rng.uniform() * total;
      for (int v = 0; v < V; ++v) {
        if (weights[v] == 0.0) continue;
        tok = v;
        u -= weights[v];
        if (u < 0.0) break;
      }
    }
    out.tokens.push_back(tok);
    out.logprobs.push_back(cache.logp[tok]);
    out.values.push_back(cache.value);
    if (tok == params.arch.eos_id) {
      out.hit_eos = true;
      break;
    }
    std::rotate(ctx.begin(), ctx.begin() + 1, ctx.end());
    ctx.back() = tok;
  }
  return out;
}

}  // namespace verirl::kernels
