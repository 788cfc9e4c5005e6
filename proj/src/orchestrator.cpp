#include "verirl/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "verirl/common.hpp"
#include "verirl/corpus.hpp"
#include "verirl/sokoban.hpp"
#include "verirl/verifier.hpp"

namespace verirl::orchestrator {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

bool safe_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

DataSpec DataSpec::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "data spec must be an object");
  DataSpec d;
  try {
    d.kind = get_or<std::string>(j, "kind", d.kind);
    d.count = get_or<std::size_t>(j, "count", d.count);
    d.max_operand = get_or<int>(j, "max_operand", d.max_operand);
    d.path = get_or<std::string>(j, "path", d.path);
    d.difficulty = get_or<std::string>(j, "difficulty", d.difficulty);
    d.seed = get_or<std::uint64_t>(j, "seed", d.seed);
    d.bundle = get_or<std::string>(j, "bundle", d.bundle);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("data spec: ") + e.what());
  }
  return d;
}

json DataSpec::to_json() const {
  return {{"kind", kind},           {"count", count}, {"max_operand", max_operand}, {"path", path},
          {"difficulty", difficulty}, {"seed", seed}, {"bundle", bundle}};
}

void DataSpec::validate() const {
  if (kind != "arithmetic" && kind != "corpus" && kind != "sokoban")
    throw Error(ErrorCode::InvalidConfig, "data kind must be arithmetic, corpus or sokoban, got " + kind);
  if (bundle != "compact" && bundle != "english") throw Error(ErrorCode::InvalidConfig, "unknown bundle " + bundle);
  if (kind == "corpus" && path.empty()) throw Error(ErrorCode::InvalidConfig, "corpus data needs a path");
  if (kind == "sokoban" && path.empty() && !sokoban::difficulty_from_name(difficulty))
    throw Error(ErrorCode::InvalidConfig, "unknown difficulty " + difficulty);
  if (kind != "corpus" && path.empty() && count == 0) throw Error(ErrorCode::InvalidConfig, "count must be >= 1");
  if (max_operand < 1) throw Error(ErrorCode::InvalidConfig, "max_operand must be >= 1");
}

agent::AgentPromptBundle bundle_named(const std::string& name) {
  if (name == "compact") return agent::AgentPromptBundle::compact();
  if (name == "english") return agent::AgentPromptBundle::english();
  throw Error(ErrorCode::InvalidConfig, "unknown bundle " + name);
}

std::vector<agent::Level> load_levels(const DataSpec& spec) {
  if (spec.path.empty()) {
    auto d = sokoban::difficulty_from_name(spec.difficulty);
    if (!d) throw Error(ErrorCode::InvalidConfig, "unknown difficulty " + spec.difficulty);
    return agent::generate_levels(*d, spec.count, spec.seed);
  }
  // Grids separated by blank lines.
  std::vector<agent::Level> levels;
  std::istringstream in(read_file(spec.path));
  std::string block;
  auto flush = [&] {
    if (block.empty()) return;
    if (block.back() == '\n') block.pop_back();
    agent::Level lv;
    lv.id = fs::path(spec.path).filename().string() + "#" + std::to_string(levels.size());
    lv.state = sokoban::parse_text(block);
    levels.push_back(std::move(lv));
    block.clear();
  };
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(' ') == std::string::npos) {
      flush();
    } else {
      block += line + "\n";
    }
  }
  flush();
  return levels;
}

namespace {

std::vector<corpus::VerifiableSample> math_samples(const DataSpec& spec) {
  if (spec.kind == "arithmetic") return corpus::arithmetic_corpus(spec.count, spec.seed, spec.max_operand);
  return corpus::read_samples(spec.path);
}

}  // namespace

std::unique_ptr<ppo::Task> make_task(const DataSpec& spec) {
  spec.validate();
  if (spec.kind == "sokoban") return std::make_unique<ppo::SokobanTask>(load_levels(spec), bundle_named(spec.bundle));
  return std::make_unique<ppo::MathTask>(math_samples(spec), bundle_named(spec.bundle));
}

StagePlan StagePlan::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidPlan, "plan must be a JSON object");
  StagePlan p;
  try {
    p.out_dir = get_or<std::string>(j, "out_dir", p.out_dir);
    if (j.contains("base")) p.base = j.at("base");
    if (!p.base.is_object()) throw Error(ErrorCode::InvalidPlan, "base must be an object");
    if (!j.contains("stages") || !j.at("stages").is_array()) throw Error(ErrorCode::InvalidPlan, "plan needs a stages array");
    for (const auto& s : j.at("stages")) {
      Stage st;
      st.name = get_or<std::string>(s, "name", "");
      st.data = DataSpec::from_json(s.value("data", json::object()));
      if (s.contains("eval") && !s.at("eval").is_null()) st.eval = DataSpec::from_json(s.at("eval"));
      st.overrides = s.value("overrides", json::object());
      st.input = get_or<std::string>(s, "input", "");
      st.output = get_or<std::string>(s, "output", "");
      p.stages.push_back(std::move(st));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidPlan, std::string("plan: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidPlan) throw;
    throw Error(ErrorCode::InvalidPlan, e.what());
  }
  return p;
}

StagePlan StagePlan::load(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidPlan, path + " is not valid JSON");
  return from_json(j);
}

json StagePlan::to_json() const {
  json stages_j = json::array();
  for (const auto& s : stages) {
    json sj = {{"name", s.name},           {"data", s.data.to_json()}, {"overrides", s.overrides},
               {"input", s.input},         {"output", s.output}};
    if (s.eval) sj["eval"] = s.eval->to_json();
    stages_j.push_back(sj);
  }
  return {{"out_dir", out_dir}, {"base", base}, {"stages", stages_j}};
}

ppo::TrainConfig StagePlan::stage_config(std::size_t k) const {
  return ppo::config_from_json(stages.at(k).overrides, ppo::config_from_json(base));
}

std::string StagePlan::output_path(std::size_t k) const {
  const Stage& s = stages.at(k);
  const std::string out = s.output.empty() ? s.name + ".ckpt" : s.output;
  return fs::path(out).is_absolute() ? out : (fs::path(out_dir) / out).string();
}

std::string StagePlan::input_path(std::size_t k) const {
  if (k > 0) return output_path(k - 1);
  return stages.at(0).input;
}

void StagePlan::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidPlan, msg); };
  if (stages.empty()) fail("plan has no stages");
  if (out_dir.empty()) fail("plan needs out_dir");
  std::vector<std::string> names, outputs;
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const Stage& s = stages[k];
    const std::string where = "stage " + std::to_string(k + 1) + " (" + s.name + "): ";
    if (!safe_name(s.name)) fail(where + "name must be non-empty and use [A-Za-z0-9._-]");
    if (std::find(names.begin(), names.end(), s.name) != names.end()) fail(where + "duplicate stage name");
    names.push_back(s.name);
    const std::string out = output_path(k);
    if (std::find(outputs.begin(), outputs.end(), out) != outputs.end()) fail(where + "output reused: " + out);
    outputs.push_back(out);
    if (k == 0) {
      if (!s.input.empty() && !fs::exists(s.input)) fail(where + "input checkpoint not found: " + s.input);
    } else {
      const std::string prev_declared = stages[k - 1].output.empty() ? stages[k - 1].name + ".ckpt" : stages[k - 1].output;
      if (!s.input.empty() && s.input != prev_declared && s.input != output_path(k - 1))
        fail(where + "input " + s.input + " is not the previous stage's output " + output_path(k - 1));
      for (const char* key : {"embed_dim", "hidden", "window"})
        if (s.overrides.contains(key)) fail(where + "architecture field " + key + " cannot change after stage 1");
    }
    if (!s.overrides.is_object()) fail(where + "overrides must be an object");
    try {
      s.data.validate();
      if (s.eval) s.eval->validate();
      if (s.data.kind == "corpus" && !fs::exists(s.data.path)) fail(where + "corpus not found: " + s.data.path);
      if (s.data.kind == "sokoban" && !s.data.path.empty() && !fs::exists(s.data.path))
        fail(where + "level file not found: " + s.data.path);
      stage_config(k).validate();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InvalidPlan) throw;
      fail(where + e.what());
    }
  }
}

json StageReport::to_json() const {
  json j = {{"name", name},
            {"config_hash", config_hash},
            {"input", input},
            {"output", output},
            {"checkpoint_hash", checkpoint_hash},
            {"reference_hash", reference_hash},
            {"optimizer_reset", optimizer_reset},
            {"env_steps", env_steps},
            {"optimizer_steps", optimizer_steps},
            {"dropped_rollouts", dropped_rollouts}};
  if (final_metrics) {
    const auto& m = *final_metrics;
    j["final_metrics"] = {{"step", m.step},         {"mean_reward", m.mean_reward}, {"format_rate", m.format_rate},
                          {"acc_rate", m.acc_rate}, {"mean_len", m.mean_len},       {"kl", m.kl},
                          {"entropy", m.entropy},   {"clip_frac", m.clip_frac}};
  }
  json ev = json::array();
  for (const auto& e : evals)
    ev.push_back({{"step", e.step}, {"env_steps", e.env_steps}, {"score", e.score}, {"mean_reward", e.mean_reward}});
  j["evals"] = ev;
  return j;
}

StageReport StageReport::from_json(const json& j) {
  StageReport r;
  r.name = j.at("name").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.input = j.value("input", "");
  r.output = j.at("output").get<std::string>();
  r.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
  r.reference_hash = j.value("reference_hash", "");
  r.optimizer_reset = j.value("optimizer_reset", true);
  r.env_steps = j.value("env_steps", std::int64_t{0});
  r.optimizer_steps = j.value("optimizer_steps", std::int64_t{0});
  r.dropped_rollouts = j.value("dropped_rollouts", std::size_t{0});
  if (j.contains("final_metrics")) {
    const auto& f = j.at("final_metrics");
    ppo::MetricsRow m;
    m.step = f.at("step").get<std::int64_t>();
    m.mean_reward = f.at("mean_reward").get<double>();
    m.format_rate = f.at("format_rate").get<double>();
    m.acc_rate = f.at("acc_rate").get<double>();
    m.mean_len = f.at("mean_len").get<double>();
    m.kl = f.at("kl").get<double>();
    m.entropy = f.at("entropy").get<double>();
    m.clip_frac = f.at("clip_frac").get<double>();
    r.final_metrics = m;
  }
  for (const auto& e : j.value("evals", json::array())) {
    ppo::EvalRow row;
    row.step = e.at("step").get<std::int64_t>();
    row.env_steps = e.at("env_steps").get<std::int64_t>();
    row.score = e.at("score").get<double>();
    row.mean_reward = e.at("mean_reward").get<double>();
    r.evals.push_back(row);
  }
  return r;
}

namespace {

std::optional<StageReport> reusable(const std::string& report_path, const std::string& config_hash) {
  if (!fs::exists(report_path)) return std::nullopt;
  try {
    json j = json::parse(read_file(report_path));
    StageReport r = StageReport::from_json(j);
    if (r.config_hash != config_hash || !fs::exists(r.output)) return std::nullopt;
    if (hex64(policy::load_checkpoint(r.output).hash()) != r.checkpoint_hash) return std::nullopt;
    r.resumed = true;
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

PlanResult run_plan(const StagePlan& plan, bool resume) {
  plan.validate();
  fs::create_directories(plan.out_dir);
  write_file((fs::path(plan.out_dir) / "plan.json").string(), plan.to_json().dump(2) + "\n");
  PlanResult result;
  const policy::Vocab vocab;

  for (std::size_t k = 0; k < plan.stages.size(); ++k) {
    const Stage& stage = plan.stages[k];
    const ppo::TrainConfig cfg = plan.stage_config(k);
    const std::string input = plan.input_path(k);

    policy::PolicyParams init = input.empty() ? ppo::initial_policy(cfg, vocab)
                                              : policy::load_checkpoint(input);
    const json identity = {{"config", ppo::config_to_json(cfg)},
                           {"data", stage.data.to_json()},
                           {"eval", stage.eval ? stage.eval->to_json() : json()},
                           {"input_hash", hex64(init.hash())}};
    const std::string config_hash = hex64(fnv1a(identity.dump()));
    const std::string report_path = (fs::path(plan.out_dir) / (stage.name + ".report.json")).string();

    if (resume) {
      if (auto r = reusable(report_path, config_hash)) {
        result.stages.push_back(*r);
        continue;
      }
    }

    auto task = make_task(stage.data);
    std::unique_ptr<ppo::Task> eval_task = stage.eval ? make_task(*stage.eval) : nullptr;
    ppo::TrainOutputs outs;
    outs.dir = plan.out_dir;
    outs.run_name = stage.name;
    // train() snapshots its own reference from `init` and builds a fresh optimizer.
    ppo::TrainResult tr = ppo::train(cfg, *task, eval_task.get(), std::move(init), outs);

    StageReport rep;
    rep.name = stage.name;
    rep.config_hash = config_hash;
    rep.input = input;
    rep.output = plan.output_path(k);
    rep.checkpoint_hash = hex64(tr.params.hash());
    rep.reference_hash = hex64(tr.reference_hash);
    rep.optimizer_reset = true;
    rep.env_steps = tr.env_steps;
    rep.optimizer_steps = tr.optimizer_steps;
    rep.dropped_rollouts = tr.dropped_rollouts;
    if (!tr.metrics.empty()) rep.final_metrics = tr.metrics.back();
    rep.evals = tr.evals;
    const json meta = {{"stage", stage.name}, {"config_hash", config_hash}, {"reference_hash", rep.reference_hash}};
    if (const auto parent = fs::path(rep.output).parent_path(); !parent.empty()) fs::create_directories(parent);
    policy::save_checkpoint(rep.output, tr.params, {meta.dump()});
    write_file(report_path, rep.to_json().dump(2) + "\n");
    result.stages.push_back(std::move(rep));
  }
  result.final_checkpoint = result.stages.back().output;
  result.final_hash = result.stages.back().checkpoint_hash;
  return result;
}

json EvalItem::to_json() const {
  json j = {{"id", id},         {"reward", reward}, {"format_reward", format_reward}, {"accuracy", accuracy},
            {"steps", steps},   {"response", response}};
  if (!error.empty()) j["error"] = error;
  return j;
}

namespace {

EvalItem item_from_json(const json& j) {
  EvalItem it;
  it.id = j.at("id").get<std::string>();
  it.reward = j.at("reward").get<double>();
  it.format_reward = j.at("format_reward").get<double>();
  it.accuracy = j.at("accuracy").get<double>();
  it.steps = j.value("steps", 0);
  it.response = j.value("response", "");
  it.error = j.value("error", "");
  return it;
}

std::vector<EvalItem> eval_math(agent::GenerativePolicy& policy, const DataSpec& suite, const ppo::TrainConfig& cfg,
                                double temperature) {
  auto samples = math_samples(suite);
  const ppo::MathTask prompts(samples, bundle_named(suite.bundle));
  std::vector<EvalItem> items(samples.size());
  const auto run_one = [&](std::size_t i) {
    EvalItem& it = items[i];
    it.id = samples[i].id;
    try {
      auto g = policy.generate({prompts.prompt(i), cfg.generate_max_len, temperature, mix_seed(cfg.seed, i)});
      it.response = g.text;
      it.steps = 1;
      const auto r = verifier::score(g.text, samples[i].answer, cfg.alpha, samples[i].answer_kind);
      it.format_reward = r.format_reward;
      it.accuracy = r.accuracy_reward;
      it.reward = r.combined;
    } catch (const std::exception& e) {
      it.error = e.what();
    }
  };
  if (policy.concurrent()) {
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < items.size(); ++i) run_one(i);
  } else {
    for (std::size_t i = 0; i < items.size(); ++i) run_one(i);
  }
  return items;
}

std::vector<EvalItem> eval_levels(agent::GenerativePolicy& policy, const DataSpec& suite, const ppo::TrainConfig& cfg,
                                  double temperature) {
  const auto levels = load_levels(suite);
  const auto records =
      agent::run_suite(policy, levels, bundle_named(suite.bundle), cfg.episode_settings(temperature, cfg.seed));
  std::vector<EvalItem> items;
  for (const auto& r : records) {
    EvalItem it;
    it.id = r.level_id;
    it.reward = r.reward;
    it.format_reward = r.format_reward;
    it.accuracy = r.solved ? 1.0 : 0.0;
    it.steps = r.steps_used;
    it.response = sokoban::actions_to_string(r.actions);
    it.error = r.error;
    items.push_back(std::move(it));
  }
  return items;
}

}  // namespace

EvalReport evaluate(agent::GenerativePolicy& policy, const std::string& policy_id, const DataSpec& suite,
                    const ppo::TrainConfig& cfg, double temperature, const std::string& out_dir, bool reuse) {
  suite.validate();
  ppo::TrainConfig settings = cfg;
  settings.temperature = temperature;
  if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be >= 0");
  json config = ppo::config_to_json(settings);
  const json identity = {{"policy", policy_id}, {"suite", suite.to_json()}, {"config", config}};
  EvalReport rep;
  rep.key = hex64(fnv1a(identity.dump()));
  rep.summary_path = (fs::path(out_dir) / ("eval-" + rep.key + ".json")).string();
  rep.items_path = (fs::path(out_dir) / ("eval-" + rep.key + ".jsonl")).string();

  if (reuse && fs::exists(rep.summary_path) && fs::exists(rep.items_path)) {
    try {
      rep.summary = json::parse(read_file(rep.summary_path));
      for (const auto& line : lines_of(read_file(rep.items_path))) rep.items.push_back(item_from_json(json::parse(line)));
      rep.cached = true;
      return rep;
    } catch (const std::exception&) {
      rep.items.clear();
    }
  }

  rep.items = suite.kind == "sokoban" ? eval_levels(policy, suite, cfg, temperature)
                                         : eval_math(policy, suite, cfg, temperature);
  const double n = static_cast<double>(std::max<std::size_t>(1, rep.items.size()));
  double acc = 0, fmt = 0, reward = 0, steps = 0;
  std::size_t failures = 0;
  std::string items_text;
  for (const auto& it : rep.items) {
    acc += it.accuracy;
    fmt += it.format_reward;
    reward += it.reward;
    steps += it.steps;
    failures += it.error.empty() ? 0 : 1;
    items_text += it.to_json().dump() + "\n";
  }
  rep.summary = {{"key", rep.key},
                 {"policy", policy_id},
                 {"suite", suite.to_json()},
                 {"config", config},
                 {"items", rep.items.size()},
                 {"failures", failures},
                 {"format_rate", fmt / n},
                 {"mean_reward", reward / n}};
  if (suite.kind == "sokoban") {
    rep.summary["solve_rate"] = acc / n;
    rep.summary["mean_steps"] = steps / n;
  } else {
    rep.summary["accuracy"] = acc / n;
  }
  fs::create_directories(out_dir);
  write_file(rep.items_path, items_text);
  write_file(rep.summary_path, rep.summary.dump(2) + "\n");
  return rep;
}

std::vector<CurvePoint> wide_to_long(const std::string& run, const std::string& wide_csv) {
  auto bad = [&](const std::string& msg) { throw Error(ErrorCode::SchemaMismatch, run + ": " + msg); };
  if (run.empty() || run.find_first_of(",\n\r") != std::string::npos) bad("run name must be non-empty without commas");
  const auto lines = lines_of(wide_csv);
  if (lines.empty()) bad("empty CSV");
  const auto header = split(lines[0], ',');
  if (header.size() < 2 || header[0] != "step") bad("header must start with step and name at least one metric");
  std::vector<CurvePoint> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split(lines[li], ',');
    if (cells.size() != header.size()) bad("line " + std::to_string(li + 1) + " has " + std::to_string(cells.size()) + " fields");
    std::int64_t step = 0;
    std::size_t used = 0;
    try {
      step = std::stoll(cells[0], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cells[0].size()) bad("step is not an integer on line " + std::to_string(li + 1));
    for (std::size_t c = 1; c < cells.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (cells[c].empty() || end != cells[c].c_str() + cells[c].size())
        bad("non-numeric value on line " + std::to_string(li + 1));
      out.push_back({run, step, header[c], v});
    }
  }
  return out;
}

std::string long_csv(const std::vector<CurvePoint>& rows) {
  std::string out = std::string(kLongHeader) + "\n";
  for (const auto& r : rows) out += r.run + "," + std::to_string(r.step) + "," + r.metric + "," + fmt17(r.value) + "\n";
  return out;
}

std::vector<CurvePoint> parse_long_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kLongHeader) throw Error(ErrorCode::SchemaMismatch, "long CSV header must be run,step,metric,value");
  std::vector<CurvePoint> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split(lines[li], ',');
    if (cells.size() != 4) throw Error(ErrorCode::SchemaMismatch, "line " + std::to_string(li + 1) + " needs 4 fields");
    CurvePoint p;
    p.run = cells[0];
    p.metric = cells[2];
    char* end = nullptr;
    p.step = std::strtoll(cells[1].c_str(), &end, 10);
    if (cells[1].empty() || *end) throw Error(ErrorCode::SchemaMismatch, "bad step on line " + std::to_string(li + 1));
    p.value = std::strtod(cells[3].c_str(), &end);
    if (cells[3].empty() || *end) throw Error(ErrorCode::SchemaMismatch, "bad value on line " + std::to_string(li + 1));
    rows.push_back(std::move(p));
  }
  return rows;
}

std::string long_to_wide(const std::vector<CurvePoint>& rows, const std::string& run) {
  std::vector<std::string> metrics;
  std::vector<std::int64_t> steps;
  std::map<std::pair<std::int64_t, std::string>, double> cells;
  for (const auto& r : rows) {
    if (r.run != run) continue;
    if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end()) metrics.push_back(r.metric);
    if (std::find(steps.begin(), steps.end(), r.step) == steps.end()) steps.push_back(r.step);
    if (!cells.emplace(std::make_pair(r.step, r.metric), r.value).second)
      throw Error(ErrorCode::SchemaMismatch, "duplicate value for step " + std::to_string(r.step) + " metric " + r.metric);
  }
  if (metrics.empty()) throw Error(ErrorCode::SchemaMismatch, "no rows for run " + run);
  std::string out = "step";
  for (const auto& m : metrics) out += "," + m;
  out += "\n";
  for (auto s : steps) {
    out += std::to_string(s);
    for (const auto& m : metrics) {
      auto it = cells.find({s, m});
      if (it == cells.end()) throw Error(ErrorCode::SchemaMismatch, "missing " + m + " at step " + std::to_string(s));
      out += "," + fmt17(it->second);
    }
    out += "\n";
  }
  return out;
}

std::string export_curves(const std::vector<std::pair<std::string, std::string>>& runs) {
  std::vector<CurvePoint> all;
  std::string header;
  for (const auto& [name, path] : runs) {
    const std::string text = read_file(path);
    const auto lines = lines_of(text);
    const std::string h = lines.empty() ? "" : lines[0];
    if (header.empty()) {
      header = h;
    } else if (h != header) {
      throw Error(ErrorCode::SchemaMismatch, path + " header differs from the first run's header");
    }
    auto rows = wide_to_long(name, text);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return long_csv(all);
}

}  // namespace verirl::orchestrator
