#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "verirl/kernels.hpp"
#include "verirl/policy.hpp"
#include "verirl/sokoban.hpp"

namespace verirl::agent {

inline constexpr double kDefaultAgentAlpha = 0.1;

// Markers used by the prompt template around history entries.
inline constexpr std::string_view kActionMarker = "<act>";
inline constexpr std::string_view kObservationMarker = "<obs>";
inline constexpr std::string_view kViewMarker = "<view>";

struct AgentPromptBundle {
  std::string p_sys;
  std::string p_task;
  std::string p_cot;
  std::string p_io;

  // Long-form instructions for external models.
  static AgentPromptBundle english();
  // One tag per segment; sized for the builtin policy's context window.
  static AgentPromptBundle compact();
  bool valid() const;
};

struct GenerateRequest {
  std::string prompt;
  int max_tokens = 64;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

// What a policy returned for one call. Token fields are filled only by the
// builtin policy, whose samples the trainer learns from.
struct Generation {
  std::string text;
  std::vector<double> logprobs;
  std::vector<int> prompt_tokens;
  std::vector<int> tokens;
  std::vector<double> values;
};

class GenerativePolicy {
 public:
  virtual ~GenerativePolicy() = default;
  // Throws Error(POLICY_FAILURE) (or TIMEOUT etc. for remote policies).
  virtual Generation generate(const GenerateRequest& req) = 0;
  // Whether generate() may be called from several threads at once.
  virtual bool concurrent() const { return true; }
};

class BuiltinPolicy : public GenerativePolicy {
 public:
  BuiltinPolicy(std::shared_ptr<const policy::PolicyParams> params, policy::Vocab vocab = {});
  Generation generate(const GenerateRequest& req) override;
  const policy::Vocab& vocab() const { return vocab_; }
  const policy::PolicyParams& params() const { return *params_; }

 private:
  std::shared_ptr<const policy::PolicyParams> params_;
  policy::Vocab vocab_;
  kernels::CompiledPolicy compiled_;
};

// Replies from a fixed list, one entry per call; repeats the last entry when
// exhausted. Records every prompt it sees.
class ScriptedPolicy : public GenerativePolicy {
 public:
  explicit ScriptedPolicy(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  Generation generate(const GenerateRequest& req) override;
  bool concurrent() const override { return false; }
  const std::vector<std::string>& prompts() const { return prompts_; }

 private:
  std::vector<std::string> replies_;
  std::vector<std::string> prompts_;
  std::size_t next_ = 0;
};

// Solver-backed policy. Reads the latest observation from the prompt and
// answers with the full optimal plan (global) or its first move (online).
class OraclePolicy : public GenerativePolicy {
 public:
  explicit OraclePolicy(bool single_move) : single_move_(single_move) {}
  Generation generate(const GenerateRequest& req) override;

 private:
  bool single_move_;
};

enum class Protocol { Global, Online };
std::string_view protocol_name(Protocol p);
std::optional<Protocol> protocol_from_name(std::string_view name);

struct EpisodeSettings {
  Protocol protocol = Protocol::Online;
  int horizon = 20;
  int action_memory = 5;       // AM
  int observation_memory = 1;  // OM
  double alpha = kDefaultAgentAlpha;
  int view_radius = 0;  // > 0 appends a player-centred view of the current state
  int max_tokens = 64;  // per policy call
  double temperature = 0.0;
  std::uint64_t seed = 0;
};

struct CallTrace {
  std::string prompt;
  Generation generation;
  bool well_formed = false;
  bool action_parsed = false;
};

struct EpisodeRecord {
  std::string level_id;
  Protocol protocol = Protocol::Online;
  std::vector<sokoban::Action> actions;
  std::vector<std::string> observations;  // after each step; o_0 is the initial render
  double task_reward = 0.0;
  double format_reward = 0.0;
  double reward = 0.0;
  int steps_used = 0;  // environment steps (online: policy calls, global: applied actions)
  bool solved = false;
  bool truncated = false;
  int skipped_chars = 0;
  int no_action_steps = 0;
  std::string error;
  std::vector<CallTrace> calls;
};

// Prompt for the online protocol after `t` steps, built from the full
// action/observation history of the episode so far. A non-empty `view` is
// placed after the observations.
std::string online_prompt(const AgentPromptBundle& bundle, const std::vector<sokoban::Action>& actions,
                          const std::vector<std::string>& observations, int am, int om,
                          std::string_view view = {});
std::string global_prompt(const AgentPromptBundle& bundle, const std::string& observation,
                          std::string_view view = {});

// The `<answer>` content (or lenient fallback) of a response.
std::string action_text(std::string_view response);

EpisodeRecord run_global(GenerativePolicy& policy, const std::string& level_id, const sokoban::State& level,
                         const AgentPromptBundle& bundle, const EpisodeSettings& settings);
EpisodeRecord run_online(GenerativePolicy& policy, const std::string& level_id, const sokoban::State& level,
                         const AgentPromptBundle& bundle, const EpisodeSettings& settings);
EpisodeRecord run_episode(GenerativePolicy& policy, const std::string& level_id, const sokoban::State& level,
                          const AgentPromptBundle& bundle, const EpisodeSettings& settings);

struct Level {
  std::string id;
  sokoban::State state;
};

// Runs every level (episode i uses seed mix_seed(settings.seed, i)); calls
// into policies that are not concurrent are serialized.
std::vector<EpisodeRecord> run_suite(GenerativePolicy& policy, const std::vector<Level>& levels,
                                     const AgentPromptBundle& bundle, const EpisodeSettings& settings);

struct SuiteSummary {
  std::size_t episodes = 0;
  double mean_reward = 0.0;
  double solve_rate = 0.0;
  double mean_steps = 0.0;
  double format_rate = 0.0;
};
SuiteSummary summarize(const std::vector<EpisodeRecord>& records);

double idle_baseline(const std::vector<Level>& levels);

// Re-applies the recorded actions and recomputes the task reward.
double replay_reward(const sokoban::State& level, const EpisodeRecord& record);

std::vector<Level> generate_levels(sokoban::Difficulty d, std::size_t count, std::uint64_t seed);

}  // namespace verirl::agent
