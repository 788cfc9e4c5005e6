#include "verirl/ppo.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "verirl/common.hpp"
#include "verirl/rng.hpp"

namespace verirl::ppo {

using nlohmann::json;
using policy::PolicyParams;

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw Error(ErrorCode::InvalidConfig, std::string(field) + " " + what);
}

}  // namespace

void TrainConfig::validate() const {
  require(train_batch_size >= 1, "train_batch_size", "must be >= 1");
  require(rollout_batch_size >= 1, "rollout_batch_size", "must be >= 1");
  require(temperature > 0, "temperature", "must be > 0");
  require(n_samples_per_prompt >= 1, "n_samples_per_prompt", "must be >= 1");
  require(max_epochs >= 1, "max_epochs", "must be >= 1");
  require(num_episodes >= 0, "num_episodes", "must be >= 0");
  require(generate_max_len >= 1, "generate_max_len", "must be >= 1");
  require(init_kl_coef >= 0, "init_kl_coef", "must be >= 0");
  require(lambd >= 0 && lambd <= 1, "lambd", "must be in [0, 1]");
  require(gamma >= 0 && gamma <= 1, "gamma", "must be in [0, 1]");
  require(actor_learning_rate > 0, "actor_learning_rate", "must be > 0");
  require(critic_learning_rate > 0, "critic_learning_rate", "must be > 0");
  require(warmup_ratio >= 0 && warmup_ratio <= 1, "warmup_ratio", "must be in [0, 1]");
  require(alpha >= 0, "alpha", "must be >= 0");
  require(clip_eps > 0 && clip_eps < 1, "clip_eps", "must be in (0, 1)");
  require(value_coef >= 0, "value_coef", "must be >= 0");
  require(entropy_coef >= 0, "entropy_coef", "must be >= 0");
  require(optimizer == "adam" || optimizer == "sgd", "optimizer", "must be adam or sgd");
  require(momentum >= 0 && momentum < 1, "momentum", "must be in [0, 1)");
  require(max_env_steps >= 0, "max_env_steps", "must be >= 0");
  require(eval_every >= 0, "eval_every", "must be >= 0");
  require(embed_dim >= 1 && window >= 1 && !hidden.empty(), "architecture", "needs embed_dim, window and hidden");
  require(horizon >= 1, "horizon", "must be >= 1");
  require(action_memory >= 0, "action_memory", "must be >= 0");
  require(observation_memory >= 1, "observation_memory", "must be >= 1");
  require(agent_alpha >= 0, "agent_alpha", "must be >= 0");
  require(view_radius >= 0, "view_radius", "must be >= 0");
  require(std::isfinite(init_action_bias), "init_action_bias", "must be finite");
}

policy::PolicyParams initial_policy(const TrainConfig& cfg, const policy::Vocab& vocab) {
  policy::PolicyParams p = policy::init(cfg.seed, cfg.architecture(vocab));
  if (cfg.init_action_bias != 0.0) {
    const policy::Layout layout(p.arch);
    for (const char* a : {"U", "D", "L", "R"})
      if (auto id = vocab.id(a)) p.theta[layout.policy_head.bias + *id] += cfg.init_action_bias;
  }
  return p;
}

policy::Architecture TrainConfig::architecture(const policy::Vocab& vocab) const {
  return policy::Architecture::for_vocab(vocab, embed_dim, hidden, window);
}

agent::EpisodeSettings TrainConfig::episode_settings(double temp, std::uint64_t s) const {
  agent::EpisodeSettings st;
  st.protocol = protocol;
  st.horizon = horizon;
  st.action_memory = action_memory;
  st.observation_memory = observation_memory;
  st.alpha = agent_alpha;
  st.view_radius = view_radius;
  st.max_tokens = generate_max_len;
  st.temperature = temp;
  st.seed = s;
  return st;
}

#define VERIRL_CONFIG_FIELDS(X)                                                                               \
  X(train_batch_size) X(rollout_batch_size) X(temperature) X(n_samples_per_prompt) X(max_epochs)             \
  X(num_episodes) X(generate_max_len) X(init_kl_coef) X(lambd) X(gamma) X(actor_learning_rate)                \
  X(critic_learning_rate) X(warmup_ratio) X(alpha) X(clip_eps) X(value_coef) X(entropy_coef)                  \
  X(normalize_advantages) X(max_grad_norm) X(optimizer) X(momentum) X(adam_beta1) X(adam_beta2) X(adam_eps)   \
  X(seed) X(max_env_steps) X(eval_every) X(embed_dim) X(hidden) X(window) X(horizon) X(action_memory)        \
  X(observation_memory) X(agent_alpha) X(view_radius) X(init_action_bias)

TrainConfig config_from_json(const json& j, TrainConfig cfg) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    try {
      bool known = false;
#define X(name)                                  \
  if (key == #name) {                            \
    it.value().get_to(cfg.name);                 \
    known = true;                                \
  }
      VERIRL_CONFIG_FIELDS(X)
#undef X
      if (key == "warm_up_ratio" || key == "warmup") {
        it.value().get_to(cfg.warmup_ratio);
        known = true;
      }
      if (key == "protocol") {
        auto p = agent::protocol_from_name(it.value().get<std::string>());
        if (!p) throw Error(ErrorCode::InvalidConfig, "protocol must be global or online");
        cfg.protocol = *p;
        known = true;
      }
      if (!known) throw Error(ErrorCode::InvalidConfig, "unknown config field " + key);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, "config field " + key + ": " + e.what());
    }
  }
  return cfg;
}

json config_to_json(const TrainConfig& cfg) {
  json j;
#define X(name) j[#name] = cfg.name;
  VERIRL_CONFIG_FIELDS(X)
#undef X
  j["protocol"] = std::string(agent::protocol_name(cfg.protocol));
  return j;
}

TrainConfig config_from_text(const std::string& text, TrainConfig base) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::InvalidConfig, "config is not valid JSON");
    return config_from_json(j, std::move(base));
  }
  // key=value lines; values are read as JSON where possible, else as strings.
  json j = json::object();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "expected key=value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    json v = json::parse(value, nullptr, false);
    j[key] = v.is_discarded() ? json(value) : v;
  }
  return config_from_json(j, std::move(base));
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
  return config_from_text(read_file(path), std::move(base));
}

MathTask::MathTask(std::vector<corpus::VerifiableSample> samples, agent::AgentPromptBundle bundle)
    : samples_(std::move(samples)), bundle_(std::move(bundle)) {
  for (const auto& s : samples_) truths_.push_back(verifier::try_parse_answer(s.answer, s.answer_kind));
}

std::string MathTask::prompt(std::size_t i) const {
  return bundle_.p_sys + bundle_.p_task + samples_.at(i).prompt + bundle_.p_cot + bundle_.p_io;
}

Outcome MathTask::run(agent::BuiltinPolicy& policy, std::size_t i, double temperature, std::uint64_t seed,
                      const TrainConfig& cfg) const {
  Outcome o;
  o.calls.push_back(policy.generate({prompt(i), cfg.generate_max_len, temperature, seed}));
  o.response = o.calls.back().text;
  const auto r = verifier::score_parsed(o.response, truths_[i], cfg.alpha, samples_[i].answer_kind);
  o.format_reward = r.format_reward;
  o.accuracy = r.accuracy_reward;
  o.reward = r.combined;
  return o;
}

SokobanTask::SokobanTask(std::vector<agent::Level> levels, agent::AgentPromptBundle bundle)
    : levels_(std::move(levels)), bundle_(std::move(bundle)) {}

Outcome SokobanTask::run(agent::BuiltinPolicy& policy, std::size_t i, double temperature, std::uint64_t seed,
                         const TrainConfig& cfg) const {
  const auto& level = levels_.at(i);
  auto rec = agent::run_episode(policy, level.id, level.state, bundle_, cfg.episode_settings(temperature, seed));
  if (!rec.error.empty()) throw Error(ErrorCode::ScorerFailure, rec.error);
  Outcome o;
  for (auto& c : rec.calls) {
    o.response += c.generation.text;
    o.calls.push_back(std::move(c.generation));
  }
  o.format_reward = rec.format_reward;
  o.accuracy = rec.solved ? 1.0 : 0.0;
  o.reward = rec.reward;
  o.env_steps = rec.steps_used;
  return o;
}

std::vector<Rollout> collect(const PolicyParams& actor, const policy::FrozenPolicy& reference, const Task& task,
                             const std::vector<std::size_t>& prompts, const TrainConfig& cfg, std::uint64_t seed,
                             CollectStats* stats) {
  if (!(actor.arch == reference.params().arch))
    throw Error(ErrorCode::BadArch, "actor and reference architectures differ");
  const std::size_t n = prompts.size() * cfg.n_samples_per_prompt;
  auto shared = std::make_shared<const PolicyParams>(actor);
  agent::BuiltinPolicy policy(shared);
  const kernels::CompiledPolicy ref_compiled(reference.params());
  const kernels::CompiledPolicy actor_compiled(*shared);
  const int Wn = actor.arch.window;

  std::vector<Rollout> all(n);
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t p = prompts[k / cfg.n_samples_per_prompt];
    Rollout& r = all[k];
    r.prompt_id = task.id(p);
    r.window = Wn;
    Outcome o;
    try {
      o = task.run(policy, p, cfg.temperature, mix_seed(seed, k), cfg);
    } catch (const Error& e) {
      errors[k] = e.what();
      continue;
    }
    r.response = std::move(o.response);
    r.reward = o.reward;
    r.format_reward = o.format_reward;
    r.accuracy = o.accuracy;
    r.env_steps = o.env_steps;
    kernels::ForwardCache actor_cache, ref_cache;
    for (const auto& call : o.calls) {
      std::vector<int> ctx = policy::make_window(call.prompt_tokens, Wn, actor.arch.pad_id);
      for (std::size_t t = 0; t < call.tokens.size(); ++t) {
        r.windows.insert(r.windows.end(), ctx.begin(), ctx.end());
        const int tok = call.tokens[t];
        r.tokens.push_back(tok);
        r.logprobs.push_back(call.logprobs[t]);
        r.values.push_back(call.values[t]);
        ref_compiled.forward(ctx.data(), ref_cache);
        actor_compiled.forward(ctx.data(), actor_cache);
        r.ref_logprobs.push_back(ref_cache.logp[tok]);
        r.kl.push_back(policy::exact_kl(actor_cache.logp, ref_cache.logp));
        std::rotate(ctx.begin(), ctx.begin() + 1, ctx.end());
        ctx.back() = tok;
      }
    }
    r.shaped_rewards.resize(r.tokens.size());
    for (std::size_t t = 0; t < r.tokens.size(); ++t) r.shaped_rewards[t] = -cfg.init_kl_coef * r.kl[t];
    if (!r.shaped_rewards.empty()) r.shaped_rewards.back() += r.reward;
  }

  std::vector<Rollout> kept;
  kept.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!errors[k].empty()) {
      if (stats) {
        ++stats->dropped;
        stats->errors.push_back(errors[k]);
      }
      continue;
    }
    kept.push_back(std::move(all[k]));
  }
  return kept;
}

Advantages gae(const std::vector<double>& rewards, const std::vector<double>& values, double lambd, double gamma) {
  if (rewards.size() != values.size())
    throw Error(ErrorCode::LengthMismatch, "rewards and values differ in length (" + std::to_string(rewards.size()) +
                                               " vs " + std::to_string(values.size()) + ")");
  const std::size_t n = rewards.size();
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_value = i + 1 < n ? values[i + 1] : 0.0;
    const double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lambd * running;
    out.advantages[i] = running;
    out.returns[i] = running + values[i];
  }
  return out;
}

void compute_advantages(std::vector<Rollout>& rollouts, const TrainConfig& cfg) {
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (auto& r : rollouts) {
    auto a = gae(r.shaped_rewards, r.values, cfg.lambd, cfg.gamma);
    r.advantages = std::move(a.advantages);
    r.returns = std::move(a.returns);
    for (double v : r.advantages) {
      sum += v;
      sq += v * v;
      ++count;
    }
  }
  if (!cfg.normalize_advantages || count < 2) return;
  const double mean = sum / static_cast<double>(count);
  const double var = std::max(0.0, sq / static_cast<double>(count) - mean * mean);
  const double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (auto& r : rollouts)
    for (double& v : r.advantages) v = (v - mean) * inv;
}

Optimizer::Optimizer(const TrainConfig& cfg, std::size_t n_params, std::size_t critic_begin,
                     std::int64_t total_steps)
    : cfg_(cfg),
      critic_begin_(critic_begin),
      warmup_steps_(static_cast<std::int64_t>(std::ceil(cfg.warmup_ratio * static_cast<double>(total_steps)))),
      m_(n_params, 0.0),
      v_(cfg.optimizer == "adam" ? n_params : 0, 0.0) {}

double Optimizer::apply(std::vector<double>& theta, const std::vector<double>& grad) {
  ++t_;
  const double scale = warmup_steps_ > 0 ? std::min(1.0, static_cast<double>(t_) / static_cast<double>(warmup_steps_)) : 1.0;
  const bool adam = cfg_.optimizer == "adam";
  const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double lr = scale * (i < critic_begin_ ? cfg_.actor_learning_rate : cfg_.critic_learning_rate);
    if (adam) {
      m_[i] = cfg_.adam_beta1 * m_[i] + (1 - cfg_.adam_beta1) * grad[i];
      v_[i] = cfg_.adam_beta2 * v_[i] + (1 - cfg_.adam_beta2) * grad[i] * grad[i];
      theta[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.adam_eps);
    } else {
      m_[i] = cfg_.momentum * m_[i] + grad[i];
      theta[i] -= lr * m_[i];
    }
  }
  return scale;
}

kernels::LossWeights loss_weights(const TrainConfig& cfg) {
  kernels::LossWeights w;
  w.policy = 1.0;
  w.value = cfg.value_coef;
  w.entropy = cfg.entropy_coef;
  w.logprob = 0.0;
  w.clip_eps = cfg.clip_eps;
  return w;
}

std::vector<kernels::TokenSample> token_samples(const std::vector<const Rollout*>& batch) {
  std::vector<kernels::TokenSample> out;
  for (const Rollout* r : batch) {
    if (r->advantages.size() != r->tokens.size() || r->returns.size() != r->tokens.size())
      throw Error(ErrorCode::LengthMismatch, "rollout " + r->prompt_id + " has no advantages");
    for (std::size_t t = 0; t < r->tokens.size(); ++t) {
      kernels::TokenSample s;
      s.context = r->windows.data() + t * static_cast<std::size_t>(r->window);
      s.token = r->tokens[t];
      s.old_logp = r->logprobs[t];
      s.advantage = r->advantages[t];
      s.ret = r->returns[t];
      out.push_back(s);
    }
  }
  return out;
}

StepStats ppo_step(PolicyParams& params, Optimizer& opt, const std::vector<const Rollout*>& batch,
                   const TrainConfig& cfg) {
  StepStats st;
  const auto samples = token_samples(batch);
  st.tokens = samples.size();
  if (samples.empty()) return st;
  auto r = kernels::loss_and_grad(params, samples, loss_weights(cfg), kernels::Exec::Fast);
  double norm = 0.0;
  for (double g : r.grad) norm += g * g;
  norm = std::sqrt(norm);
  if (!std::isfinite(norm)) throw Error(ErrorCode::NonfiniteLoss, "gradient norm is not finite");
  st.grad_norm = norm;
  if (cfg.max_grad_norm > 0 && norm > cfg.max_grad_norm) {
    const double k = cfg.max_grad_norm / norm;
    for (double& g : r.grad) g *= k;
  }
  opt.apply(params.theta, r.grad);
  st.loss = r.loss;
  st.policy_loss = r.policy_loss;
  st.value_loss = r.value_loss;
  st.entropy = r.entropy;
  st.clip_frac = r.clip_frac;
  st.approx_kl = r.approx_kl;
  return st;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

MetricsRow batch_metrics(std::int64_t step, const std::vector<const Rollout*>& batch, const StepStats& st) {
  MetricsRow m;
  m.step = step;
  double kl_sum = 0.0;
  std::size_t tokens = 0;
  for (const Rollout* r : batch) {
    m.mean_reward += r->reward;
    m.format_rate += r->format_reward;
    m.acc_rate += r->accuracy;
    m.mean_len += static_cast<double>(r->tokens.size());
    for (double k : r->kl) kl_sum += k;
    tokens += r->tokens.size();
  }
  const double n = batch.empty() ? 1.0 : static_cast<double>(batch.size());
  m.mean_reward /= n;
  m.format_rate /= n;
  m.acc_rate /= n;
  m.mean_len /= n;
  m.kl = tokens ? kl_sum / static_cast<double>(tokens) : 0.0;
  m.entropy = st.entropy;
  m.clip_frac = st.clip_frac;
  return m;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& m : rows) {
    out += std::to_string(m.step) + "," + fmt(m.mean_reward) + "," + fmt(m.format_rate) + "," + fmt(m.acc_rate) +
           "," + fmt(m.mean_len) + "," + fmt(m.kl) + "," + fmt(m.entropy) + "," + fmt(m.clip_frac) + "\n";
  }
  return out;
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::string out = std::string(kEvalHeader) + "\n";
  for (const auto& e : rows)
    out += std::to_string(e.step) + "," + std::to_string(e.env_steps) + "," + fmt(e.score) + "," + fmt(e.mean_reward) + "\n";
  return out;
}

EvalRow evaluate_greedy(const PolicyParams& params, const Task& task, const TrainConfig& cfg, std::uint64_t seed) {
  agent::BuiltinPolicy policy(std::make_shared<const PolicyParams>(params));
  EvalRow row;
  const std::size_t n = task.size();
  if (n == 0) return row;
  std::vector<double> score(n, 0.0), reward(n, 0.0);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      Outcome o = task.run(policy, i, 0.0, mix_seed(seed, i), cfg);
      score[i] = o.accuracy;
      reward[i] = o.reward;
    } catch (const Error&) {
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    row.score += score[i];
    row.mean_reward += reward[i];
  }
  row.score /= static_cast<double>(n);
  row.mean_reward /= static_cast<double>(n);
  return row;
}

TrainResult train(const TrainConfig& cfg, const Task& task, const Task* eval_task, PolicyParams init,
                  const TrainOutputs& out) {
  cfg.validate();
  if (!init.finite() || init.theta.size() != init.arch.param_count())
    throw Error(ErrorCode::BadArch, "initial policy is malformed");
  TrainResult res;
  res.params = std::move(init);
  const policy::FrozenPolicy reference = policy::snapshot(res.params);
  res.reference_hash = reference.hash();

  const std::size_t n_prompts = task.size();
  const std::size_t batches_per_episode =
      n_prompts == 0 ? 0 : (n_prompts + cfg.rollout_batch_size - 1) / cfg.rollout_batch_size;
  const std::size_t rollouts_per_batch = static_cast<std::size_t>(cfg.rollout_batch_size) * cfg.n_samples_per_prompt;
  const std::size_t steps_per_batch =
      cfg.max_epochs * ((rollouts_per_batch + cfg.train_batch_size - 1) / cfg.train_batch_size);
  const auto planned_steps = static_cast<std::int64_t>(cfg.num_episodes * batches_per_episode * steps_per_batch);
  Optimizer opt(cfg, res.params.theta.size(), policy::Layout(res.params.arch).value_begin(), planned_steps);

  if (!out.dir.empty()) std::filesystem::create_directories(out.dir);
  const std::uint64_t eval_seed = mix_seed(cfg.seed, 0xe7a1);
  auto evaluate_now = [&] {
    if (!eval_task) return;
    EvalRow row = evaluate_greedy(res.params, *eval_task, cfg, eval_seed);
    row.step = res.optimizer_steps;
    row.env_steps = res.env_steps;
    res.evals.push_back(row);
  };
  auto flush = [&] {
    if (out.dir.empty()) return;
    write_file(out.dir + "/" + out.run_name + ".metrics.csv", metrics_csv(res.metrics));
    if (eval_task) write_file(out.dir + "/" + out.run_name + ".eval.csv", eval_csv(res.evals));
  };

  evaluate_now();
  std::int64_t last_eval = 0;
  bool budget_spent = false;
  std::uint64_t batch_counter = 0;
  for (int episode = 0; episode < cfg.num_episodes && !budget_spent; ++episode) {
    std::vector<std::size_t> order(n_prompts);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(mix_seed(cfg.seed, 0x5000 + episode));
    for (std::size_t i = n_prompts; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    for (std::size_t b = 0; b < batches_per_episode; ++b) {
      if (cfg.max_env_steps > 0 && res.env_steps >= cfg.max_env_steps) {
        budget_spent = true;
        break;
      }
      const std::size_t begin = b * cfg.rollout_batch_size;
      const std::size_t end = std::min(n_prompts, begin + cfg.rollout_batch_size);
      std::vector<std::size_t> prompts(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                       order.begin() + static_cast<std::ptrdiff_t>(end));
      CollectStats cs;
      auto rollouts = collect(res.params, reference, task, prompts, cfg, mix_seed(cfg.seed, 0x10000 + batch_counter), &cs);
      ++batch_counter;
      res.dropped_rollouts += cs.dropped;
      for (const auto& r : rollouts) res.env_steps += r.env_steps;
      compute_advantages(rollouts, cfg);

      Rng mb_rng(mix_seed(cfg.seed, 0x20000 + batch_counter));
      for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::vector<const Rollout*> ptrs;
        for (const auto& r : rollouts) ptrs.push_back(&r);
        for (std::size_t i = ptrs.size(); i > 1; --i) std::swap(ptrs[i - 1], ptrs[mb_rng.below(i)]);
        for (std::size_t s = 0; s < ptrs.size(); s += cfg.train_batch_size) {
          std::vector<const Rollout*> mb(ptrs.begin() + static_cast<std::ptrdiff_t>(s),
                                         ptrs.begin() + static_cast<std::ptrdiff_t>(
                                                            std::min(ptrs.size(), s + cfg.train_batch_size)));
          StepStats st = ppo_step(res.params, opt, mb, cfg);
          ++res.optimizer_steps;
          res.metrics.push_back(batch_metrics(res.optimizer_steps, mb, st));
          if (out.on_step) out.on_step(res.metrics.back());
          if (cfg.eval_every > 0 && res.optimizer_steps - last_eval >= cfg.eval_every) {
            evaluate_now();
            last_eval = res.optimizer_steps;
          }
        }
      }
      if (reference.hash() != res.reference_hash)
        throw Error(ErrorCode::InvalidConfig, "reference policy changed during training");
    }
    if (!out.dir.empty()) {
      const std::string path = out.dir + "/" + out.run_name + ".ep" + std::to_string(episode) + ".ckpt";
      json meta = {{"run", out.run_name},
                   {"episode", episode},
                   {"optimizer_steps", res.optimizer_steps},
                   {"env_steps", res.env_steps},
                   {"reference_hash", hex64(res.reference_hash)}};
      policy::save_checkpoint(path, res.params, {meta.dump()});
      res.checkpoints.push_back(path);
      flush();
    }
  }
  if (eval_task && (res.evals.empty() || res.evals.back().step != res.optimizer_steps)) evaluate_now();
  flush();
  return res;
}

double area_under_curve(const std::vector<EvalRow>& rows) {
  if (rows.size() < 2) return rows.empty() ? 0.0 : rows[0].score;
  double area = 0.0;
  const double span = static_cast<double>(rows.back().env_steps - rows.front().env_steps);
  for (std::size_t i = 1; i < rows.size(); ++i)
    area += 0.5 * (rows[i].score + rows[i - 1].score) * static_cast<double>(rows[i].env_steps - rows[i - 1].env_steps);
  return span > 0 ? area / span : rows.back().score;
}

}  // namespace verirl::ppo
