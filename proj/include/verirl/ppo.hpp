#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "verirl/agent.hpp"
#include "verirl/corpus.hpp"
#include "verirl/kernels.hpp"
#include "verirl/policy.hpp"

namespace verirl::ppo {

struct TrainConfig {
  // Field names follow the usual OpenRLHF hyper-parameter table.
  int train_batch_size = 64;    // rollouts per optimizer step
  int rollout_batch_size = 4;   // prompts per collection round
  double temperature = 1.0;
  int n_samples_per_prompt = 16;
  int max_epochs = 1;
  int num_episodes = 1;         // passes over the prompt set
  int generate_max_len = 64;    // tokens per policy call
  double init_kl_coef = 1e-3;   // beta
  double lambd = 1.0;
  double gamma = 1.0;
  double actor_learning_rate = 3e-3;
  double critic_learning_rate = 3e-3;
  double warmup_ratio = 0.03;

  double alpha = 0.5;  // format weight for math prompts
  double clip_eps = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  bool normalize_advantages = true;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
  std::string optimizer = "adam";  // adam | sgd (momentum)
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  std::uint64_t seed = 0;
  std::int64_t max_env_steps = 0;  // stop collecting once reached; 0 = no budget
  int eval_every = 0;              // optimizer steps between evaluations; 0 = only start and end

  // Policy architecture used when training starts from scratch.
  int embed_dim = 8;
  std::vector<int> hidden = {64};
  int window = 32;
  // Added to the policy-head bias of the action tokens U/D/L/R at init, a
  // stand-in for a pretrained model that already answers with moves.
  double init_action_bias = 0.0;

  // Agent episodes.
  agent::Protocol protocol = agent::Protocol::Online;
  int horizon = 20;
  int action_memory = 5;
  int observation_memory = 1;
  double agent_alpha = agent::kDefaultAgentAlpha;
  int view_radius = 0;

  // Throws INVALID_CONFIG naming the first offending field.
  void validate() const;
  policy::Architecture architecture(const policy::Vocab& vocab) const;
  agent::EpisodeSettings episode_settings(double temperature, std::uint64_t seed) const;
};

// Fresh policy for a run that does not start from a checkpoint.
policy::PolicyParams initial_policy(const TrainConfig& cfg, const policy::Vocab& vocab = {});

TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json config_to_json(const TrainConfig& cfg);
// JSON object or key=value lines.
TrainConfig load_config(const std::string& path, TrainConfig base = {});
TrainConfig config_from_text(const std::string& text, TrainConfig base = {});

// Outcome of one rollout before token bookkeeping.
struct Outcome {
  std::vector<agent::Generation> calls;
  std::string response;
  double format_reward = 0.0;
  double accuracy = 0.0;  // r_a for math, solved for Sokoban
  double reward = 0.0;
  std::int64_t env_steps = 0;
};

// A prompt source the trainer can roll out against.
class Task {
 public:
  virtual ~Task() = default;
  virtual std::size_t size() const = 0;
  virtual std::string id(std::size_t i) const = 0;
  virtual Outcome run(agent::BuiltinPolicy& policy, std::size_t i, double temperature, std::uint64_t seed,
                      const TrainConfig& cfg) const = 0;
};

class MathTask : public Task {
 public:
  MathTask(std::vector<corpus::VerifiableSample> samples, agent::AgentPromptBundle bundle);
  std::size_t size() const override { return samples_.size(); }
  std::string id(std::size_t i) const override { return samples_.at(i).id; }
  Outcome run(agent::BuiltinPolicy& policy, std::size_t i, double temperature, std::uint64_t seed,
              const TrainConfig& cfg) const override;
  std::string prompt(std::size_t i) const;

 private:
  std::vector<corpus::VerifiableSample> samples_;
  std::vector<std::optional<verifier::ParsedAnswer>> truths_;
  agent::AgentPromptBundle bundle_;
};

class SokobanTask : public Task {
 public:
  SokobanTask(std::vector<agent::Level> levels, agent::AgentPromptBundle bundle);
  std::size_t size() const override { return levels_.size(); }
  std::string id(std::size_t i) const override { return levels_.at(i).id; }
  Outcome run(agent::BuiltinPolicy& policy, std::size_t i, double temperature, std::uint64_t seed,
              const TrainConfig& cfg) const override;

 private:
  std::vector<agent::Level> levels_;
  agent::AgentPromptBundle bundle_;
};

struct Rollout {
  std::string prompt_id;
  std::string response;
  int window = 0;
  std::vector<int> windows;  // tokens.size() * window ids
  std::vector<int> tokens;
  std::vector<double> logprobs;
  std::vector<double> ref_logprobs;
  std::vector<double> values;
  std::vector<double> kl;  // exact per-position KL(actor || reference)
  std::vector<double> shaped_rewards;
  std::vector<double> advantages;
  std::vector<double> returns;
  double reward = 0.0;
  double format_reward = 0.0;
  double accuracy = 0.0;
  std::int64_t env_steps = 0;
};

struct CollectStats {
  std::size_t dropped = 0;  // SCORER_FAILURE
  std::vector<std::string> errors;
};

// n_samples_per_prompt rollouts for each prompt index, in prompt-major order.
std::vector<Rollout> collect(const policy::PolicyParams& actor, const policy::FrozenPolicy& reference,
                             const Task& task, const std::vector<std::size_t>& prompts, const TrainConfig& cfg,
                             std::uint64_t seed, CollectStats* stats = nullptr);

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};
// Throws LENGTH_MISMATCH when the arrays differ in length.
Advantages gae(const std::vector<double>& rewards, const std::vector<double>& values, double lambd, double gamma);

// Fills advantages/returns of every rollout, optionally normalizing the
// advantages over all tokens of the batch.
void compute_advantages(std::vector<Rollout>& rollouts, const TrainConfig& cfg);

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::size_t n_params, std::size_t critic_begin, std::int64_t total_steps);
  // Applies one update in place; returns the learning-rate scale used.
  double apply(std::vector<double>& theta, const std::vector<double>& grad);
  std::int64_t steps() const { return t_; }

 private:
  TrainConfig cfg_;
  std::size_t critic_begin_;
  std::int64_t warmup_steps_;
  std::int64_t t_ = 0;
  std::vector<double> m_, v_;
};

struct StepStats {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  std::size_t tokens = 0;
};

// One optimizer step on the given rollouts. NONFINITE_LOSS leaves `params`
// and the optimizer untouched.
StepStats ppo_step(policy::PolicyParams& params, Optimizer& opt, const std::vector<const Rollout*>& batch,
                   const TrainConfig& cfg);

kernels::LossWeights loss_weights(const TrainConfig& cfg);
std::vector<kernels::TokenSample> token_samples(const std::vector<const Rollout*>& batch);

struct MetricsRow {
  std::int64_t step = 0;
  double mean_reward = 0.0;
  double format_rate = 0.0;
  double acc_rate = 0.0;
  double mean_len = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
};
inline constexpr const char* kMetricsHeader = "step,mean_reward,format_rate,acc_rate,mean_len,kl,entropy,clip_frac";
std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct EvalRow {
  std::int64_t step = 0;
  std::int64_t env_steps = 0;
  double score = 0.0;  // accuracy or greedy solve rate
  double mean_reward = 0.0;
};
inline constexpr const char* kEvalHeader = "step,env_steps,score,mean_reward";
std::string eval_csv(const std::vector<EvalRow>& rows);

// Greedy evaluation: mean accuracy (math) or solve rate (Sokoban).
EvalRow evaluate_greedy(const policy::PolicyParams& params, const Task& task, const TrainConfig& cfg,
                        std::uint64_t seed);

struct TrainOutputs {
  std::string dir;  // empty: nothing written
  std::string run_name = "run";
  std::function<void(const MetricsRow&)> on_step;
};

struct TrainResult {
  policy::PolicyParams params;
  std::vector<MetricsRow> metrics;
  std::vector<EvalRow> evals;
  std::int64_t env_steps = 0;
  std::int64_t optimizer_steps = 0;
  std::uint64_t reference_hash = 0;
  std::size_t dropped_rollouts = 0;
  std::vector<std::string> checkpoints;
};

// Reference policy is snapshotted from `init` at the start. `eval_task`
// (may be null) is scored greedily at step 0, every eval_every steps and at
// the end.
TrainResult train(const TrainConfig& cfg, const Task& task, const Task* eval_task, policy::PolicyParams init,
                  const TrainOutputs& out = {});

double area_under_curve(const std::vector<EvalRow>& rows);

}  // namespace verirl::ppo
