#include "verirl/agent.hpp"

#include <omp.h>

#include <algorithm>

#include "verirl/common.hpp"
#include "verirl/verifier.hpp"

namespace verirl::agent {

using sokoban::Action;
using sokoban::State;

AgentPromptBundle AgentPromptBundle::english() {
  return {
      "You are playing Sokoban. The grid legend is: # wall, space floor, . target, $ box, * box on target, "
      "@ player, + player on target.\n",
      "Push every box onto a target. Moves are U (up), D (down), L (left) and R (right); walking into a box "
      "pushes it if the cell behind it is free.\n",
      "Think about where the player must stand before each push, then reason step by step inside "
      "<think></think>.\n",
      "Put the move letters inside <answer></answer>, for example <answer>RRU</answer>.\n",
  };
}

AgentPromptBundle AgentPromptBundle::compact() { return {"<sys>", "<task>", "<cot>", "<io>"}; }

bool AgentPromptBundle::valid() const {
  return !p_sys.empty() && !p_task.empty() && !p_cot.empty() && !p_io.empty();
}

BuiltinPolicy::BuiltinPolicy(std::shared_ptr<const policy::PolicyParams> params, policy::Vocab vocab)
    : params_(params ? std::move(params) : throw Error(ErrorCode::BadArch, "builtin policy needs parameters")),
      vocab_(std::move(vocab)),
      compiled_(*params_) {
  if (params_->arch.vocab_size != vocab_.size())
    throw Error(ErrorCode::BadArch, "policy vocabulary size does not match the tokenizer");
}

Generation BuiltinPolicy::generate(const GenerateRequest& req) {
  Generation g;
  g.prompt_tokens = vocab_.encode(req.prompt);
  auto s = kernels::sample(compiled_, g.prompt_tokens, req.temperature, req.max_tokens, req.seed);
  g.text = vocab_.decode(s.tokens);
  g.tokens = std::move(s.tokens);
  g.logprobs = std::move(s.logprobs);
  g.values = std::move(s.values);
  return g;
}

Generation ScriptedPolicy::generate(const GenerateRequest& req) {
  prompts_.push_back(req.prompt);
  if (replies_.empty()) return {};
  Generation g;
  g.text = replies_[std::min(next_, replies_.size() - 1)];
  ++next_;
  return g;
}

namespace {

std::string latest_observation(std::string_view prompt) {
  const auto at = prompt.rfind(kObservationMarker);
  if (at == std::string_view::npos) throw Error(ErrorCode::PolicyFailure, "prompt has no observation");
  std::string_view rest = prompt.substr(at + kObservationMarker.size());
  std::string out;
  // The grid runs until the first line holding anything but grid characters.
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    const std::string_view line = rest.substr(0, nl);
    if (line.empty() || line.find_first_not_of("#.$*@+ ") != std::string_view::npos) break;
    if (!out.empty()) out.push_back('\n');
    out.append(line);
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  return out;
}

}  // namespace

Generation OraclePolicy::generate(const GenerateRequest& req) {
  const State s = sokoban::parse_text(latest_observation(req.prompt));
  auto sol = sokoban::solve(s);
  if (!sol.actions) throw Error(ErrorCode::PolicyFailure, "oracle could not solve the observed level");
  std::vector<Action> plan = *sol.actions;
  if (single_move_ && plan.size() > 1) plan.resize(1);
  Generation g;
  g.text = "<think>search</think><answer>" + sokoban::actions_to_string(plan) + "</answer>";
  return g;
}

std::string_view protocol_name(Protocol p) { return p == Protocol::Global ? "global" : "online"; }

std::optional<Protocol> protocol_from_name(std::string_view name) {
  if (name == "global") return Protocol::Global;
  if (name == "online") return Protocol::Online;
  return std::nullopt;
}

std::string online_prompt(const AgentPromptBundle& bundle, const std::vector<Action>& actions,
                          const std::vector<std::string>& observations, int am, int om, std::string_view view) {
  std::string out = bundle.p_sys + bundle.p_task;
  const std::size_t na = std::min<std::size_t>(actions.size(), static_cast<std::size_t>(std::max(am, 0)));
  for (std::size_t i = actions.size() - na; i < actions.size(); ++i) {
    out += kActionMarker;
    out += sokoban::action_char(actions[i]);
  }
  const std::size_t no = std::min<std::size_t>(observations.size(), static_cast<std::size_t>(std::max(om, 0)));
  for (std::size_t i = observations.size() - no; i < observations.size(); ++i) {
    out += kObservationMarker;
    out += observations[i];
    out += '\n';
  }
  if (!view.empty()) {
    out += kViewMarker;
    out += view;
    out += '\n';
  }
  return out + bundle.p_cot + bundle.p_io;
}

std::string global_prompt(const AgentPromptBundle& bundle, const std::string& observation, std::string_view view) {
  return online_prompt(bundle, {}, {observation}, 0, 1, view);
}

std::string action_text(std::string_view response) { return verifier::extract_answer(response); }

namespace {

void validate(const AgentPromptBundle& bundle, const EpisodeSettings& st) {
  if (!bundle.valid()) throw Error(ErrorCode::InvalidConfig, "prompt bundle segments must be non-empty");
  if (st.horizon < 1) throw Error(ErrorCode::InvalidConfig, "horizon must be >= 1");
  if (st.action_memory < 0 || st.observation_memory < 1)
    throw Error(ErrorCode::InvalidConfig, "memory windows need AM >= 0 and OM >= 1");
  if (st.alpha < 0) throw Error(ErrorCode::InvalidConfig, "alpha must be >= 0");
  if (st.view_radius < 0) throw Error(ErrorCode::InvalidConfig, "view_radius must be >= 0");
}

void finish(EpisodeRecord& rec, const State& level, const State& final_state, double alpha) {
  rec.task_reward = sokoban::task_reward(level, final_state);
  rec.solved = final_state.solved();
  rec.reward = alpha * rec.format_reward + rec.task_reward;
}

}  // namespace

EpisodeRecord run_global(GenerativePolicy& policy, const std::string& level_id, const State& level,
                         const AgentPromptBundle& bundle, const EpisodeSettings& st) {
  validate(bundle, st);
  EpisodeRecord rec;
  rec.level_id = level_id;
  rec.protocol = Protocol::Global;
  rec.observations.push_back(sokoban::render_text(level));
  State cur = level;
  CallTrace call;
  call.prompt = global_prompt(bundle, rec.observations[0],
                              st.view_radius > 0 ? sokoban::render_local(level, st.view_radius) : std::string());
  try {
    call.generation = policy.generate({call.prompt, st.max_tokens, st.temperature, mix_seed(st.seed, 0)});
  } catch (const Error& e) {
    rec.error = e.what();
    rec.truncated = true;
    rec.calls.push_back(std::move(call));
    finish(rec, level, cur, st.alpha);
    return rec;
  }
  call.well_formed = verifier::check_format(call.generation.text).score == 1;
  rec.format_reward = call.well_formed ? 1.0 : 0.0;
  auto plan = sokoban::parse_actions(action_text(call.generation.text), &rec.skipped_chars);
  call.action_parsed = !plan.empty();
  if (plan.size() > static_cast<std::size_t>(st.horizon)) {
    plan.resize(st.horizon);
    rec.truncated = true;
  }
  for (Action a : plan) {
    if (cur.solved()) break;
    cur = sokoban::step(cur, a).state;
    rec.actions.push_back(a);
    rec.observations.push_back(sokoban::render_text(cur));
  }
  rec.steps_used = static_cast<int>(rec.actions.size());
  rec.calls.push_back(std::move(call));
  finish(rec, level, cur, st.alpha);
  return rec;
}

EpisodeRecord run_online(GenerativePolicy& policy, const std::string& level_id, const State& level,
                         const AgentPromptBundle& bundle, const EpisodeSettings& st) {
  validate(bundle, st);
  EpisodeRecord rec;
  rec.level_id = level_id;
  rec.protocol = Protocol::Online;
  rec.observations.push_back(sokoban::render_text(level));
  State cur = level;
  bool all_formatted = true;
  for (int t = 0; t < st.horizon && !cur.solved(); ++t) {
    CallTrace call;
    call.prompt = online_prompt(bundle, rec.actions, rec.observations, st.action_memory, st.observation_memory,
                                st.view_radius > 0 ? sokoban::render_local(cur, st.view_radius) : std::string());
    try {
      call.generation = policy.generate({call.prompt, st.max_tokens, st.temperature, mix_seed(st.seed, t)});
    } catch (const Error& e) {
      rec.error = e.what();
      rec.truncated = true;
      rec.calls.push_back(std::move(call));
      all_formatted = false;
      break;
    }
    ++rec.steps_used;
    call.well_formed = verifier::check_format(call.generation.text).score == 1;
    all_formatted = all_formatted && call.well_formed;
    const std::string text = action_text(call.generation.text);
    auto it = std::find_if(text.begin(), text.end(), [](char c) { return sokoban::action_from_char(c).has_value(); });
    if (it == text.end()) {
      ++rec.no_action_steps;
    } else {
      const Action a = *sokoban::action_from_char(*it);
      cur = sokoban::step(cur, a).state;
      rec.actions.push_back(a);
      call.action_parsed = true;
    }
    rec.observations.push_back(sokoban::render_text(cur));
    rec.calls.push_back(std::move(call));
  }
  if (!cur.solved() && rec.steps_used >= st.horizon) rec.truncated = true;
  rec.format_reward = all_formatted && !rec.calls.empty() ? 1.0 : 0.0;
  finish(rec, level, cur, st.alpha);
  return rec;
}

EpisodeRecord run_episode(GenerativePolicy& policy, const std::string& level_id, const State& level,
                          const AgentPromptBundle& bundle, const EpisodeSettings& settings) {
  return settings.protocol == Protocol::Global ? run_global(policy, level_id, level, bundle, settings)
                                               : run_online(policy, level_id, level, bundle, settings);
}

namespace {

// Serializes generate() for policies that cannot take concurrent calls.
class SerializedPolicy : public GenerativePolicy {
 public:
  explicit SerializedPolicy(GenerativePolicy& inner) : inner_(inner) {}
  Generation generate(const GenerateRequest& req) override {
    std::lock_guard lock(mu_);
    return inner_.generate(req);
  }

 private:
  GenerativePolicy& inner_;
  std::mutex mu_;
};

}  // namespace

std::vector<EpisodeRecord> run_suite(GenerativePolicy& policy, const std::vector<Level>& levels,
                                     const AgentPromptBundle& bundle, const EpisodeSettings& settings) {
  std::vector<EpisodeRecord> out(levels.size());
  SerializedPolicy serialized(policy);
  GenerativePolicy& target = policy.concurrent() ? policy : static_cast<GenerativePolicy&>(serialized);
  const bool parallel = policy.concurrent();
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::size_t i = 0; i < levels.size(); ++i) {
    EpisodeSettings st = settings;
    st.seed = mix_seed(settings.seed, i);
    out[i] = run_episode(target, levels[i].id, levels[i].state, bundle, st);
  }
  return out;
}

SuiteSummary summarize(const std::vector<EpisodeRecord>& records) {
  SuiteSummary s;
  s.episodes = records.size();
  if (records.empty()) return s;
  for (const auto& r : records) {
    s.mean_reward += r.reward;
    s.solve_rate += r.solved ? 1.0 : 0.0;
    s.mean_steps += r.steps_used;
    s.format_rate += r.format_reward;
  }
  const double n = static_cast<double>(records.size());
  s.mean_reward /= n;
  s.solve_rate /= n;
  s.mean_steps /= n;
  s.format_rate /= n;
  return s;
}

double idle_baseline(const std::vector<Level>& levels) {
  if (levels.empty()) return 0.0;
  double total = 0.0;
  for (const auto& l : levels) total += sokoban::task_reward(l.state, l.state);
  return total / static_cast<double>(levels.size());
}

double replay_reward(const State& level, const EpisodeRecord& record) {
  return sokoban::task_reward(level, sokoban::replay(level, record.actions, true));
}

std::vector<Level> generate_levels(sokoban::Difficulty d, std::size_t count, std::uint64_t seed) {
  std::vector<Level> out(count);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = mix_seed(seed, i);
    out[i].id = std::string(sokoban::difficulty_name(d)) + "-" + std::to_string(s);
    out[i].state = sokoban::generate_level(sokoban::LevelSpec::preset(d, s));
  }
  return out;
}

}  // namespace verirl::agent
