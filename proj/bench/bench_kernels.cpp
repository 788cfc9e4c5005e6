// Reference vs fast policy kernels.
#include <benchmark/benchmark.h>

#include "verirl/kernels.hpp"
#include "verirl/policy.hpp"
#include "verirl/rng.hpp"

using namespace verirl;

namespace {

struct Fixture {
  policy::PolicyParams params;
  std::vector<int> windows;
  std::vector<kernels::TokenSample> samples;

  Fixture(int n, int window, int hidden) {
    policy::Vocab vocab;
    params = policy::init(1, policy::Architecture::for_vocab(vocab, 8, {hidden}, window));
    Rng rng(2);
    windows.resize(static_cast<std::size_t>(n) * window);
    for (auto& t : windows) t = static_cast<int>(rng.below(vocab.size()));
    for (int i = 0; i < n; ++i) {
      kernels::TokenSample s;
      s.context = windows.data() + static_cast<std::size_t>(i) * window;
      s.token = 1 + static_cast<int>(rng.below(vocab.size() - 1));
      s.old_logp = -3.5;
      s.advantage = rng.uniform() - 0.5;
      s.ret = rng.uniform();
      samples.push_back(s);
    }
  }
};

void loss_grad(benchmark::State& state, kernels::Exec exec) {
  Fixture f(static_cast<int>(state.range(0)), 64, 64);
  const kernels::LossWeights w{1.0, 0.5, 0.01, 0.0, 0.2};
  for (auto _ : state) {
    auto r = kernels::loss_and_grad(f.params, f.samples, w, exec);
    benchmark::DoNotOptimize(r.grad.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void forward(benchmark::State& state, kernels::Exec exec) {
  const int n = static_cast<int>(state.range(0));
  Fixture f(n, 64, 64);
  std::vector<double> logp(static_cast<std::size_t>(n) * f.params.arch.vocab_size), values(n);
  for (auto _ : state) {
    kernels::forward_batch(f.params, f.windows, logp, values, exec);
    benchmark::DoNotOptimize(logp.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK_CAPTURE(loss_grad, reference, kernels::Exec::Reference)->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(loss_grad, fast, kernels::Exec::Fast)->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(forward, reference, kernels::Exec::Reference)->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(forward, fast, kernels::Exec::Fast)->Arg(64)->Arg(512);

BENCHMARK_MAIN();
