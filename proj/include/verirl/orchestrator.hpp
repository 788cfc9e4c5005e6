#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "verirl/agent.hpp"
#include "verirl/ppo.hpp"

namespace verirl::orchestrator {

// Where a stage's prompts come from.
struct DataSpec {
  std::string kind = "sokoban";  // arithmetic | corpus | sokoban
  std::size_t count = 100;       // arithmetic items or generated levels
  int max_operand = 9;
  std::string path;  // corpus JSONL, or a level file (grids separated by blank lines)
  std::string difficulty = "small-v0";
  std::uint64_t seed = 0;
  std::string bundle = "compact";  // compact | english

  static DataSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;  // INVALID_CONFIG
};

agent::AgentPromptBundle bundle_named(const std::string& name);
std::vector<agent::Level> load_levels(const DataSpec& spec);
std::unique_ptr<ppo::Task> make_task(const DataSpec& spec);

struct Stage {
  std::string name;
  DataSpec data;
  std::optional<DataSpec> eval;
  nlohmann::json overrides = nlohmann::json::object();
  std::string input;   // checkpoint to start from; empty on stage 1 means fresh init
  std::string output;  // defaults to NAME.ckpt inside out_dir
};

struct StagePlan {
  std::string out_dir = "runs/plan";
  nlohmann::json base = nlohmann::json::object();
  std::vector<Stage> stages;

  static StagePlan from_json(const nlohmann::json& j);
  static StagePlan load(const std::string& path);
  nlohmann::json to_json() const;

  // INVALID_PLAN on a broken checkpoint chain, unknown data kinds,
  // architecture changes after the first stage or bad stage configs.
  void validate() const;
  ppo::TrainConfig stage_config(std::size_t k) const;
  std::string output_path(std::size_t k) const;
  std::string input_path(std::size_t k) const;
};

struct StageReport {
  std::string name;
  std::string config_hash;
  std::string input;
  std::string output;
  std::string checkpoint_hash;
  std::string reference_hash;
  bool optimizer_reset = true;
  bool resumed = false;
  std::int64_t env_steps = 0;
  std::int64_t optimizer_steps = 0;
  std::size_t dropped_rollouts = 0;
  std::optional<ppo::MetricsRow> final_metrics;
  std::vector<ppo::EvalRow> evals;

  nlohmann::json to_json() const;
  static StageReport from_json(const nlohmann::json& j);
};

struct PlanResult {
  std::vector<StageReport> stages;
  std::string final_checkpoint;
  std::string final_hash;
};

// Stages whose report and checkpoint already match their config hash are
// skipped when `resume` is set.
PlanResult run_plan(const StagePlan& plan, bool resume = true);

struct EvalItem {
  std::string id;
  double reward = 0.0;
  double format_reward = 0.0;
  double accuracy = 0.0;  // r_a or solved
  int steps = 0;
  std::string response;
  std::string error;
  nlohmann::json to_json() const;
};

struct EvalReport {
  std::string key;  // content address
  std::string summary_path;
  std::string items_path;
  bool cached = false;
  nlohmann::json summary;
  std::vector<EvalItem> items;
};

// Scores `policy` on a math or level suite. Item failures are recorded and
// the run continues. Reports live at OUT/eval-KEY.{json,jsonl}; an existing
// report with the same key is returned as is. cfg.temperature is ignored in
// favour of `temperature`, which may be 0 (greedy).
EvalReport evaluate(agent::GenerativePolicy& policy, const std::string& policy_id, const DataSpec& suite,
                    const ppo::TrainConfig& cfg, double temperature, const std::string& out_dir,
                    bool reuse = true);

struct CurvePoint {
  std::string run;
  std::int64_t step = 0;
  std::string metric;
  double value = 0.0;
};
inline constexpr const char* kLongHeader = "run,step,metric,value";

// Wide CSV (first column `step`) to long rows. SCHEMA_MISMATCH on malformed input.
std::vector<CurvePoint> wide_to_long(const std::string& run, const std::string& wide_csv);
std::string long_csv(const std::vector<CurvePoint>& rows);
std::vector<CurvePoint> parse_long_csv(const std::string& text);
// Rebuilds one run's wide CSV; metric columns keep first-seen order.
std::string long_to_wide(const std::vector<CurvePoint>& rows, const std::string& run);
// Merges runs given as (name, csv path); all must share one header.
std::string export_curves(const std::vector<std::pair<std::string, std::string>>& runs);

}  // namespace verirl::orchestrator
