#pragma once

// Batched forward/backward kernels for the built-in MLP policy.
//
// Two implementations share one contract:
//   * reference: straight-line serial code that materializes the embedded
//     input window and runs every dense layer naively.
//   * fast: first layer folded into per-(position, token) tables, samples
//     processed in fixed-size chunks under OpenMP and reduced in chunk order.
// Results agree to rounding; the fast path is deterministic regardless of
// thread count.

#include <span>
#include <vector>

#include "verirl/policy.hpp"

namespace verirl::kernels {

enum class Exec { Reference, Fast };

// One token position of a loss. `context` points at `window` token ids.
struct TokenSample {
  const int* context = nullptr;
  int token = 0;
  double old_logp = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
  double weight = 1.0;
};

// L = (1/N) sum_i w_i [ policy * surrogate_i + value * 0.5 (v_i - ret_i)^2
//                       - entropy * H_i + logprob * log pi(token_i) ]
// surrogate_i = -min(r A, clip(r, 1-eps, 1+eps) A), floored at -(1+eps)|A|
// when A < 0.
struct LossWeights {
  double policy = 1.0;
  double value = 0.5;
  double entropy = 0.0;
  double logprob = 0.0;
  double clip_eps = 0.2;
};

struct LossResult {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;  // mean(old_logp - logp)
  std::vector<double> grad;  // empty when not requested
};

LossResult loss_and_grad(const policy::PolicyParams& params, std::span<const TokenSample> samples,
                         const LossWeights& weights, Exec exec, bool want_grad = true);

// Forward over N windows stored contiguously (N * window ids).
void forward_batch(const policy::PolicyParams& params, std::span<const int> windows,
                   std::span<double> logp_out, std::span<double> values_out, Exec exec);

struct ForwardCache {
  std::vector<std::vector<double>> hidden;  // post-activation per layer
  std::vector<double> logp;
  double value = 0.0;
};

// First layer precomputed per (window position, token). Rebuild after every
// parameter change.
class CompiledPolicy {
 public:
  explicit CompiledPolicy(const policy::PolicyParams& params);

  const policy::PolicyParams& params() const { return *params_; }
  void forward(const int* window, ForwardCache& cache) const;

 private:
  const policy::PolicyParams* params_;
  policy::Layout layout_;
  std::vector<double> table_;  // window x vocab x hidden[0]
};

// Ancestral sampling with a precompiled policy; temperature 0 is greedy.
policy::SampledSequence sample(const CompiledPolicy& compiled, std::span<const int> prompt, double temperature,
                               int max_len, std::uint64_t seed);

namespace reference {
void forward(const policy::PolicyParams& params, const int* window, ForwardCache& cache);
}

}  // namespace verirl::kernels
