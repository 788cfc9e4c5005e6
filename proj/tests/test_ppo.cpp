#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "verirl/common.hpp"
#include "verirl/ppo.hpp"

using namespace verirl;
using namespace verirl::ppo;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.rollout_batch_size = 4;
  cfg.n_samples_per_prompt = 16;
  cfg.train_batch_size = 32;
  cfg.generate_max_len = 6;
  cfg.embed_dim = 4;
  cfg.hidden = {16};
  cfg.window = 16;
  cfg.seed = 3;
  return cfg;
}

MathTask arithmetic_task(std::size_t n, std::uint64_t seed) {
  return MathTask(corpus::arithmetic_corpus(n, seed), agent::AgentPromptBundle::compact());
}

policy::PolicyParams fresh(const TrainConfig& cfg, std::uint64_t seed = 1) {
  return policy::init(seed, cfg.architecture(policy::Vocab()));
}

// Every third prompt fails to score.
class FlakyTask : public Task {
 public:
  explicit FlakyTask(const MathTask& inner) : inner_(inner) {}
  std::size_t size() const override { return inner_.size(); }
  std::string id(std::size_t i) const override { return inner_.id(i); }
  Outcome run(agent::BuiltinPolicy& policy, std::size_t i, double temperature, std::uint64_t seed,
              const TrainConfig& cfg) const override {
    if (i % 3 == 0) throw Error(ErrorCode::ScorerFailure, "scorer unavailable");
    return inner_.run(policy, i, temperature, seed, cfg);
  }

 private:
  const MathTask& inner_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("gae examples") {
  auto z = gae({0, 0, 0}, {0, 0, 0}, 1, 1);
  CHECK(z.advantages == std::vector<double>{0, 0, 0});
  auto s = gae({0, 0, 1}, {0, 0, 0}, 1, 1);
  CHECK(s.advantages == std::vector<double>{1, 1, 1});
  CHECK(s.returns == std::vector<double>{1, 1, 1});
  auto g0 = gae({0.5, -1, 2}, {0.25, 0.5, -0.75}, 0.9, 0);
  CHECK(g0.advantages == std::vector<double>{0.25, -1.5, 2.75});
  try {
    gae({1, 2}, {1}, 1, 1);
    FAIL("expected LENGTH_MISMATCH");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
  CHECK(gae({}, {}, 1, 1).advantages.empty());
}

TEST_CASE("gae identities on random vectors") {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(-2, 2);
  std::uniform_int_distribution<int> len(1, 40);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len(gen);
    std::vector<double> r(n), v(n);
    for (int i = 0; i < n; ++i) {
      r[i] = u(gen);
      v[i] = u(gen);
    }
    auto one = gae(r, v, 1, 1);
    auto zero = gae(r, v, 0.7, 0);
    const double lam = 0.3 + 0.7 * (trial % 7) / 6.0, gam = 0.5 + 0.5 * (trial % 5) / 4.0;
    auto gen_l = gae(r, v, lam, gam);
    for (int t = 0; t < n; ++t) {
      double tail = 0;
      for (int k = t; k < n; ++k) tail += r[k];
      CHECK(std::abs(one.advantages[t] - (tail - v[t])) <= 1e-12);
      CHECK(std::abs(one.returns[t] - tail) <= 1e-12);
      CHECK(std::abs(zero.advantages[t] - (r[t] - v[t])) <= 1e-12);
      // Direct sum of discounted TD errors.
      double direct = 0, w = 1;
      for (int k = t; k < n; ++k) {
        const double next = k + 1 < n ? v[k + 1] : 0.0;
        direct += w * (r[k] + gam * next - v[k]);
        w *= gam * lam;
      }
      CHECK(std::abs(gen_l.advantages[t] - direct) <= 1e-12);
    }
  }
}

TEST_CASE("collect shapes rollouts") {
  auto cfg = small_config();
  const auto task = arithmetic_task(8, 1);
  const auto actor = fresh(cfg);
  const auto ref = policy::snapshot(actor);
  auto rs = collect(actor, ref, task, {0, 1, 2, 3}, cfg, 11);
  REQUIRE(rs.size() == 64);
  for (std::size_t k = 0; k < rs.size(); ++k) {
    const auto& r = rs[k];
    CHECK(r.prompt_id == task.id(k / 16));
    const std::size_t n = r.tokens.size();
    REQUIRE(n >= 1);
    CHECK(n <= 6);
    CHECK(r.logprobs.size() == n);
    CHECK(r.ref_logprobs.size() == n);
    CHECK(r.values.size() == n);
    CHECK(r.kl.size() == n);
    CHECK(r.shaped_rewards.size() == n);
    CHECK(r.windows.size() == n * cfg.window);
    for (std::size_t t = 0; t < n; ++t) {
      CHECK(r.kl[t] == 0.0);  // actor is the reference
      CHECK(r.ref_logprobs[t] == doctest::Approx(r.logprobs[t]).epsilon(1e-12));
      CHECK(r.shaped_rewards[t] == (t + 1 == n ? r.reward : 0.0));
    }
  }
  // Samples for one prompt differ.
  bool differs = false;
  for (int k = 1; k < 16; ++k) differs = differs || rs[k].tokens != rs[0].tokens;
  CHECK(differs);
}

TEST_CASE("beta zero leaves only the terminal reward") {
  auto cfg = small_config();
  cfg.init_kl_coef = 0.0;
  const auto task = arithmetic_task(4, 2);
  const auto ref = policy::snapshot(fresh(cfg, 1));
  const auto actor = fresh(cfg, 2);
  auto rs = collect(actor, ref, task, {0, 1}, cfg, 5);
  bool positive_kl = false;
  for (const auto& r : rs) {
    for (std::size_t t = 0; t + 1 < r.tokens.size(); ++t) CHECK(r.shaped_rewards[t] == 0.0);
    CHECK(r.shaped_rewards.back() == r.reward);
    for (double k : r.kl) {
      CHECK(k >= 0.0);
      positive_kl = positive_kl || k > 0;
    }
  }
  CHECK(positive_kl);

  cfg.init_kl_coef = 0.1;
  auto shaped = collect(actor, ref, task, {0, 1}, cfg, 5);
  for (std::size_t k = 0; k < shaped.size(); ++k) {
    const auto& r = shaped[k];
    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      const double expect = -0.1 * r.kl[t] + (t + 1 == r.tokens.size() ? r.reward : 0.0);
      CHECK(r.shaped_rewards[t] == doctest::Approx(expect).epsilon(1e-15));
    }
  }
}

TEST_CASE("scorer failures drop the rollout and are counted") {
  auto cfg = small_config();
  cfg.n_samples_per_prompt = 2;
  const auto inner = arithmetic_task(6, 4);
  FlakyTask flaky(inner);
  const auto actor = fresh(cfg);
  CollectStats stats;
  auto rs = collect(actor, policy::snapshot(actor), flaky, {0, 1, 2, 3, 4, 5}, cfg, 9, &stats);
  CHECK(rs.size() == 8);
  CHECK(stats.dropped == 4);
  CHECK(stats.errors.size() == 4);
}

TEST_CASE("advantage normalization") {
  auto cfg = small_config();
  const auto task = arithmetic_task(4, 3);
  const auto actor = fresh(cfg);
  auto rs = collect(actor, policy::snapshot(actor), task, {0, 1}, cfg, 7);
  for (auto& r : rs) r.shaped_rewards.back() += static_cast<double>(r.tokens.size() % 3);
  compute_advantages(rs, cfg);
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& r : rs)
    for (double a : r.advantages) {
      sum += a;
      sq += a * a;
      ++n;
    }
  CHECK(std::abs(sum / n) < 1e-12);
  CHECK(std::sqrt(sq / n) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("zero advantages give no policy-head gradient") {
  auto cfg = small_config();
  const auto task = arithmetic_task(4, 5);
  auto actor = fresh(cfg);
  auto rs = collect(actor, policy::snapshot(actor), task, {0, 1}, cfg, 13);
  cfg.normalize_advantages = false;
  compute_advantages(rs, cfg);
  for (auto& r : rs) std::fill(r.advantages.begin(), r.advantages.end(), 0.0);
  std::vector<const Rollout*> batch;
  for (const auto& r : rs) batch.push_back(&r);
  auto samples = token_samples(batch);
  auto w = loss_weights(cfg);
  w.entropy = 0.0;
  auto g = kernels::loss_and_grad(actor, samples, w, kernels::Exec::Reference);
  const policy::Layout L(actor.arch);
  for (int i = 0; i < L.policy_head.in * L.policy_head.out; ++i) CHECK(g.grad[L.policy_head.weight + i] == 0.0);
  for (int i = 0; i < L.policy_head.out; ++i) CHECK(g.grad[L.policy_head.bias + i] == 0.0);
  w.value = 0.0;
  auto none = kernels::loss_and_grad(actor, samples, w, kernels::Exec::Reference);
  for (double x : none.grad) CHECK(x == 0.0);
}

TEST_CASE("first pass equals the vanilla policy gradient") {
  auto cfg = small_config();
  const auto task = arithmetic_task(4, 6);
  auto actor = fresh(cfg);
  auto rs = collect(actor, policy::snapshot(actor), task, {0, 1, 2}, cfg, 21);
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  for (auto& r : rs) {
    r.advantages.resize(r.tokens.size());
    r.returns.assign(r.tokens.size(), 0.0);
    for (double& a : r.advantages) a = nd(gen);
  }
  std::vector<const Rollout*> batch;
  for (const auto& r : rs) batch.push_back(&r);
  auto samples = token_samples(batch);
  kernels::LossWeights ppo_w{1.0, 0.0, 0.0, 0.0, 0.2};
  auto ppo = kernels::loss_and_grad(actor, samples, ppo_w, kernels::Exec::Fast);
  double mean_a = 0;
  for (const auto& s : samples) mean_a += s.advantage;
  mean_a /= samples.size();
  CHECK(ppo.policy_loss == doctest::Approx(-mean_a).epsilon(1e-10));
  CHECK(ppo.clip_frac == 0.0);
  // -(1/N) sum A_i grad log pi_i expressed as a weighted log-prob loss.
  auto pg_samples = samples;
  for (auto& s : pg_samples) s.weight = s.advantage;
  kernels::LossWeights pg_w{0.0, 0.0, 0.0, -1.0, 0.2};
  auto pg = kernels::loss_and_grad(actor, pg_samples, pg_w, kernels::Exec::Reference);
  double scale = 0;
  for (double x : pg.grad) scale = std::max(scale, std::abs(x));
  REQUIRE(scale > 0);
  for (std::size_t i = 0; i < pg.grad.size(); ++i) CHECK(std::abs(ppo.grad[i] - pg.grad[i]) <= 1e-10 * scale);
}

TEST_CASE("clipped loss per sample is bounded by (1+eps)|A|") {
  auto cfg = small_config();
  const auto task = arithmetic_task(4, 8);
  auto actor = fresh(cfg);
  auto rs = collect(actor, policy::snapshot(actor), task, {0, 1}, cfg, 3);
  // Move the policy far from the sampling policy.
  auto moved = actor;
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd(0, 0.5);
  for (double& x : moved.theta) x += nd(gen);
  std::uniform_real_distribution<double> ua(-3, 3);
  for (double eps : {0.1, 0.2, 0.3}) {
    for (const auto& r : rs) {
      for (std::size_t t = 0; t < r.tokens.size(); ++t) {
        kernels::TokenSample s;
        s.context = r.windows.data() + t * r.window;
        s.token = r.tokens[t];
        s.old_logp = r.logprobs[t];
        s.advantage = ua(gen);
        kernels::LossWeights w{1.0, 0.0, 0.0, 0.0, eps};
        auto one = kernels::loss_and_grad(moved, std::span(&s, 1), w, kernels::Exec::Reference, false);
        CHECK(std::abs(one.policy_loss) <= (1 + eps) * std::abs(s.advantage) + 1e-12);
      }
    }
  }
}

TEST_CASE("nonfinite loss aborts without touching parameters") {
  auto cfg = small_config();
  const auto task = arithmetic_task(4, 9);
  auto actor = fresh(cfg);
  auto rs = collect(actor, policy::snapshot(actor), task, {0}, cfg, 3);
  compute_advantages(rs, cfg);
  rs[0].advantages[0] = std::numeric_limits<double>::quiet_NaN();
  std::vector<const Rollout*> batch;
  for (const auto& r : rs) batch.push_back(&r);
  Optimizer opt(cfg, actor.theta.size(), policy::Layout(actor.arch).value_begin(), 10);
  const auto before = actor.theta;
  try {
    ppo_step(actor, opt, batch, cfg);
    FAIL("expected NONFINITE_LOSS");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonfiniteLoss);
  }
  CHECK(actor.theta == before);
  CHECK(opt.steps() == 0);
}

TEST_CASE("optimizer learning rates and warmup") {
  TrainConfig cfg;
  cfg.optimizer = "sgd";
  cfg.momentum = 0.0;
  cfg.actor_learning_rate = 0.1;
  cfg.critic_learning_rate = 0.01;
  cfg.warmup_ratio = 0.5;
  Optimizer opt(cfg, 4, 2, 4);  // two warmup steps
  std::vector<double> theta(4, 0.0), grad(4, 1.0);
  CHECK(opt.apply(theta, grad) == 0.5);
  CHECK(theta == std::vector<double>{-0.05, -0.05, -0.005, -0.005});
  CHECK(opt.apply(theta, grad) == 1.0);
  CHECK(opt.apply(theta, grad) == 1.0);
  CHECK(theta[0] == doctest::Approx(-0.25));
  CHECK(theta[3] == doctest::Approx(-0.025));

  cfg.optimizer = "adam";
  cfg.warmup_ratio = 0;
  Optimizer adam(cfg, 2, 1, 4);
  std::vector<double> t2(2, 0.0), g2 = {3.0, -5.0};
  adam.apply(t2, g2);
  // First bias-corrected Adam step moves each coordinate by lr * sign(g).
  CHECK(t2[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(t2[1] == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("zero episodes leave the policy unchanged") {
  auto cfg = small_config();
  cfg.num_episodes = 0;
  const auto task = arithmetic_task(8, 10);
  auto init = fresh(cfg);
  auto res = train(cfg, task, nullptr, init);
  CHECK(res.params.theta == init.theta);
  CHECK(res.metrics.empty());
  CHECK(res.optimizer_steps == 0);
}

TEST_CASE("training bookkeeping, checkpoints and determinism") {
  auto cfg = small_config();
  cfg.num_episodes = 2;
  cfg.rollout_batch_size = 2;
  cfg.n_samples_per_prompt = 4;
  cfg.train_batch_size = 3;
  cfg.max_epochs = 2;
  cfg.eval_every = 3;
  const auto task = arithmetic_task(4, 12);
  const auto eval = arithmetic_task(5, 13);
  const auto init = fresh(cfg);
  const std::string dir = (std::filesystem::temp_directory_path() / "verirl_ppo_test").string();
  std::filesystem::remove_all(dir);
  TrainOutputs out;
  out.dir = dir;
  out.run_name = "a";
  auto a = train(cfg, task, &eval, init, out);
  // 2 episodes x 2 batches x 2 epochs x ceil(8 / 3) minibatches.
  CHECK(a.optimizer_steps == 24);
  CHECK(a.metrics.size() == 24);
  CHECK(a.reference_hash == init.hash());
  CHECK(a.params.theta != init.theta);
  CHECK(a.checkpoints.size() == 2);
  CHECK(policy::load_checkpoint(a.checkpoints[1]).hash() == a.params.hash());
  const auto csv = slurp(dir + "/a.metrics.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 25);
  CHECK(csv.rfind(kMetricsHeader, 0) == 0);
  CHECK(a.evals.front().step == 0);
  CHECK(a.evals.back().step == 24);
  CHECK(a.evals.size() == 9);
  for (std::size_t i = 1; i < a.evals.size(); ++i) CHECK(a.evals[i].env_steps >= a.evals[i - 1].env_steps);

  out.run_name = "b";
  auto b = train(cfg, task, &eval, init, out);
  CHECK(slurp(dir + "/b.metrics.csv") == csv);
  CHECK(slurp(dir + "/b.eval.csv") == slurp(dir + "/a.eval.csv"));
  CHECK(b.params.hash() == a.params.hash());

  cfg.seed = 4;
  auto c = train(cfg, task, &eval, init);
  CHECK(metrics_csv(c.metrics) != csv);
  std::filesystem::remove_all(dir);
}

TEST_CASE("env step budget stops collection") {
  auto cfg = small_config();
  cfg.rollout_batch_size = 1;
  cfg.n_samples_per_prompt = 2;
  cfg.generate_max_len = 1;
  cfg.max_env_steps = 25;
  cfg.horizon = 5;
  auto levels = agent::generate_levels(sokoban::Difficulty::SmallV0, 20, 1);
  SokobanTask task(levels, agent::AgentPromptBundle::compact());
  cfg.window = 64;
  auto res = train(cfg, task, nullptr, fresh(cfg));
  CHECK(res.env_steps >= 25);
  CHECK(res.env_steps < 25 + 10);
}

TEST_CASE("config parsing and validation") {
  auto cfg = config_from_text(R"({"init_kl_coef": 0.0, "lambd": 1, "hidden": [32, 16], "protocol": "global"})");
  CHECK(cfg.init_kl_coef == 0.0);
  CHECK(cfg.hidden == std::vector<int>{32, 16});
  CHECK(cfg.protocol == agent::Protocol::Global);
  auto kv = config_from_text("# desk preset\nn_samples_per_prompt = 8\ntemperature=0.5\noptimizer = sgd\n");
  CHECK(kv.n_samples_per_prompt == 8);
  CHECK(kv.temperature == 0.5);
  CHECK(kv.optimizer == "sgd");
  auto round = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(round) == config_to_json(cfg));

  auto expect_invalid = [](const std::string& text, const std::string& field) {
    try {
      config_from_text(text).validate();
      FAIL("expected INVALID_CONFIG for " << field);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidConfig);
      CHECK(std::string(e.what()).find(field) != std::string::npos);
    }
  };
  expect_invalid(R"({"lambd": 1.5})", "lambd");
  expect_invalid(R"({"gamma": -0.1})", "gamma");
  expect_invalid(R"({"init_kl_coef": -1})", "init_kl_coef");
  expect_invalid(R"({"actor_learning_rate": 0})", "actor_learning_rate");
  expect_invalid(R"({"n_samples_per_prompt": 0})", "n_samples_per_prompt");
  expect_invalid(R"({"optimizer": "rmsprop"})", "optimizer");
  expect_invalid(R"({"no_such_field": 1})", "no_such_field");
  expect_invalid("temperature = warm", "temperature");
}

TEST_CASE("area under the eval curve") {
  std::vector<EvalRow> rows = {{0, 0, 0.0, 0}, {1, 100, 0.5, 0}, {2, 300, 1.0, 0}};
  // (0.25 * 100 + 0.75 * 200) / 300
  CHECK(area_under_curve(rows) == doctest::Approx(175.0 / 300.0));
  CHECK(area_under_curve({}) == 0.0);
  CHECK(area_under_curve({{0, 0, 0.4, 0}}) == 0.4);
}
