#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"
#include "verirl/agent.hpp"
#include "verirl/common.hpp"
#include "verirl/corpus.hpp"
#include "verirl/orchestrator.hpp"
#include "verirl/policy.hpp"
#include "verirl/ppo.hpp"
#include "verirl/sokoban.hpp"
#include "verirl/verifier.hpp"
#include "verirl/wire.hpp"

using namespace verirl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out = "out";
};

ppo::TrainConfig base_config(const Globals& g) {
  ppo::TrainConfig cfg = g.config.empty() ? ppo::TrainConfig{} : ppo::load_config(g.config);
  if (g.seed_given) cfg.seed = g.seed;
  return cfg;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

json record_json(const agent::EpisodeRecord& r) {
  json calls = json::array();
  for (const auto& c : r.calls)
    calls.push_back({{"prompt", c.prompt}, {"response", c.generation.text}, {"well_formed", c.well_formed},
                     {"action_parsed", c.action_parsed}});
  json j = {{"level_id", r.level_id},
            {"protocol", agent::protocol_name(r.protocol)},
            {"actions", sokoban::actions_to_string(r.actions)},
            {"task_reward", r.task_reward},
            {"format_reward", r.format_reward},
            {"reward", r.reward},
            {"steps_used", r.steps_used},
            {"solved", r.solved},
            {"truncated", r.truncated},
            {"calls", calls}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

// builtin:CKPT | oracle | oracle-step | tcp://HOST:PORT | stdio:CMD...
struct LoadedPolicy {
  std::unique_ptr<agent::GenerativePolicy> policy;
  std::string id;
};

LoadedPolicy load_policy(const std::string& spec, int timeout_ms, int max_concurrent) {
  LoadedPolicy out;
  out.id = spec;
  if (spec.rfind("builtin:", 0) == 0) {
    auto params = std::make_shared<const policy::PolicyParams>(policy::load_checkpoint(spec.substr(8)));
    out.id = "builtin:" + hex64(params->hash());
    out.policy = std::make_unique<agent::BuiltinPolicy>(params);
  } else if (spec == "oracle" || spec == "oracle-step") {
    out.policy = std::make_unique<agent::OraclePolicy>(spec == "oracle-step");
  } else {
    auto ep = wire::Endpoint::parse(spec);
    ep.timeout_ms = timeout_ms;
    ep.max_concurrent = max_concurrent;
    out.policy = std::make_unique<wire::WirePolicy>(ep);
  }
  return out;
}

void add_data_options(CLI::App* cmd, orchestrator::DataSpec& d, const std::string& prefix = "") {
  cmd->add_option("--" + prefix + "kind", d.kind, "arithmetic | corpus | sokoban")->capture_default_str();
  cmd->add_option("--" + prefix + "count", d.count, "items or levels to generate")->capture_default_str();
  cmd->add_option("--" + prefix + "path", d.path, "corpus JSONL or level file");
  cmd->add_option("--" + prefix + "difficulty", d.difficulty)->capture_default_str();
  cmd->add_option("--" + prefix + "data-seed", d.seed)->capture_default_str();
  cmd->add_option("--" + prefix + "bundle", d.bundle, "compact | english")->capture_default_str();
}

std::string levels_text(const std::vector<agent::Level>& levels) {
  std::string out;
  for (const auto& l : levels) out += sokoban::render_text(l.state) + "\n\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verirl: rule-based RL toolkit (verifier, corpus, Sokoban agents, PPO, curricula)"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "training config (JSON object or key=value lines)");
  auto* seed_opt = app.add_option("--seed", g.seed, "global seed")->envname("VERIRL_SEED");
  app.add_option("--out", g.out, "output directory")->capture_default_str();

  // verify
  auto* verify = app.add_subcommand("verify", "score a response against a ground truth");
  std::string response, truth, kind_name;
  double alpha = verifier::kDefaultAlpha;
  verify->add_option("--response", response)->required();
  verify->add_option("--truth", truth)->required();
  verify->add_option("--alpha", alpha)->capture_default_str();
  verify->add_option("--kind", kind_name, "numeric | option | latex | list");

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "prompt set preparation");
  corpus_cmd->require_subcommand(1);
  std::string c_in, c_out, c_tag;
  std::size_t c_n = 0;
  auto* c_filter = corpus_cmd->add_subcommand("filter", "keep records with verifiable answers");
  auto* c_dedupe = corpus_cmd->add_subcommand("dedupe", "drop repeated prompts");
  auto* c_sample = corpus_cmd->add_subcommand("sample", "uniform subset");
  auto* c_split = corpus_cmd->add_subcommand("split", "keep one domain tag");
  auto* c_arith = corpus_cmd->add_subcommand("arithmetic", "generate a synthetic arithmetic corpus");
  for (auto* c : {c_filter, c_dedupe, c_sample, c_split}) c->add_option("input", c_in)->required();
  for (auto* c : {c_filter, c_dedupe, c_sample, c_split, c_arith}) c->add_option("output", c_out)->required();
  c_sample->add_option("-n", c_n)->required();
  c_split->add_option("--tag", c_tag)->required();
  c_arith->add_option("-n", c_n)->required();

  // sokoban
  auto* sok = app.add_subcommand("sokoban", "levels");
  sok->require_subcommand(1);
  std::string difficulty = "small-v0", level_file;
  std::size_t level_count = 10;
  auto* s_gen = sok->add_subcommand("gen", "generate levels to OUT/levels.txt");
  s_gen->add_option("--difficulty", difficulty)->capture_default_str();
  s_gen->add_option("--count", level_count)->capture_default_str();
  auto* s_solve = sok->add_subcommand("solve", "solve every level in a file");
  s_solve->add_option("file", level_file)->required();

  // agent
  auto* agent_cmd = app.add_subcommand("agent", "agent episodes");
  agent_cmd->require_subcommand(1);
  auto* a_run = agent_cmd->add_subcommand("run", "run episodes and write traces to OUT/episodes.jsonl");
  orchestrator::DataSpec a_data;
  std::string policy_spec = "oracle";
  double temperature = 0.0;
  int timeout_ms = 30000, max_concurrent = 4;
  add_data_options(a_run, a_data);
  for (auto* c : {a_run}) {
    c->add_option("--policy", policy_spec, "builtin:CKPT | oracle | oracle-step | tcp://H:P | stdio:CMD")
        ->capture_default_str();
    c->add_option("--temperature", temperature)->capture_default_str();
  }

  // train
  auto* train_cmd = app.add_subcommand("train", "PPO training run");
  orchestrator::DataSpec t_data, t_eval;
  std::string init_ckpt, run_name = "run";
  add_data_options(train_cmd, t_data);
  add_data_options(train_cmd, t_eval, "eval-");
  train_cmd->add_option("--init", init_ckpt, "starting checkpoint");
  train_cmd->add_option("--name", run_name)->capture_default_str();

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "run a multi-stage curriculum");
  std::string plan_file;
  bool no_resume = false;
  plan_cmd->add_option("plan", plan_file)->required();
  plan_cmd->add_flag("--no-resume", no_resume);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a policy on a suite");
  orchestrator::DataSpec e_data;
  bool no_reuse = false;
  add_data_options(eval_cmd, e_data);
  eval_cmd->add_option("--policy", policy_spec)->capture_default_str();
  eval_cmd->add_option("--temperature", temperature)->capture_default_str();
  eval_cmd->add_option("--timeout-ms", timeout_ms)->capture_default_str();
  eval_cmd->add_option("--max-concurrent", max_concurrent)->capture_default_str();
  eval_cmd->add_flag("--no-reuse", no_reuse);

  // curves
  auto* curves = app.add_subcommand("curves", "merge metrics CSVs into run,step,metric,value");
  std::vector<std::string> curve_args;
  std::string curve_out;
  curves->add_option("runs", curve_args, "NAME=PATH")->required();
  curves->add_option("-o,--output", curve_out, "file (default stdout)");

  // policy
  auto* policy_cmd = app.add_subcommand("policy", "checkpoints");
  policy_cmd->require_subcommand(1);
  auto* p_inspect = policy_cmd->add_subcommand("inspect", "print architecture and hash");
  std::string ckpt;
  p_inspect->add_option("checkpoint", ckpt)->required();
  auto* p_init = policy_cmd->add_subcommand("init", "write a freshly initialised checkpoint to OUT/init.ckpt");

  // serve
  auto* serve = app.add_subcommand("serve", "answer wire requests");
  std::string handler = "echo";
  int port = 0;
  bool use_stdio = false;
  serve->add_option("--handler", handler, "echo | oracle | builtin:CKPT")->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_flag("--stdio", use_stdio);

  CLI11_PARSE(app, argc, argv);
  g.seed_given = seed_opt->count() > 0 || std::getenv("VERIRL_SEED") != nullptr;

  try {
    if (*verify) {
      std::optional<verifier::AnswerKind> kind;
      if (!kind_name.empty()) {
        kind = verifier::kind_from_name(kind_name);
        if (!kind) throw Error(ErrorCode::InvalidConfig, "unknown kind " + kind_name);
      }
      const auto r = verifier::score(response, truth, alpha, kind);
      print({{"format_reward", r.format_reward},
             {"accuracy_reward", r.accuracy_reward},
             {"alpha", r.alpha},
             {"reward", r.combined},
             {"extracted", verifier::extract_answer(response)}});
    } else if (*corpus_cmd) {
      corpus::CorpusResult res;
      if (*c_filter) res = corpus::filter_verifiable(corpus::read_records(c_in));
      if (*c_dedupe) res = corpus::dedupe(corpus::read_samples(c_in));
      if (*c_sample) res = corpus::sample_subset(corpus::read_samples(c_in), c_n, g.seed);
      if (*c_split) res = corpus::split_by_tag(corpus::read_samples(c_in), c_tag);
      if (*c_arith) {
        res.samples = corpus::arithmetic_corpus(c_n, g.seed);
        res.manifest.operation = "arithmetic";
        res.manifest.source_count = res.manifest.kept_count = res.manifest.sampled_count = res.samples.size();
        res.manifest.seed = g.seed;
      }
      corpus::write_samples(c_out, res.samples);
      corpus::write_manifest(c_out, res.manifest);
      print(res.manifest.to_json());
    } else if (*sok) {
      if (*s_gen) {
        const auto d = sokoban::difficulty_from_name(difficulty);
        if (!d) throw Error(ErrorCode::InvalidConfig, "unknown difficulty " + difficulty);
        const auto levels = agent::generate_levels(*d, level_count, g.seed);
        fs::create_directories(g.out);
        write_file(g.out + "/levels.txt", levels_text(levels));
        print({{"levels", levels.size()}, {"path", g.out + "/levels.txt"}});
      } else {
        orchestrator::DataSpec spec;
        spec.path = level_file;
        for (const auto& l : orchestrator::load_levels(spec)) {
          const auto s = sokoban::solve(l.state);
          print({{"id", l.id},
                 {"solved", s.actions.has_value()},
                 {"actions", s.actions ? sokoban::actions_to_string(*s.actions) : ""},
                 {"expanded", s.expanded}});
        }
      }
    } else if (*agent_cmd) {
      ppo::TrainConfig cfg = base_config(g);
      auto loaded = load_policy(policy_spec, timeout_ms, max_concurrent);
      const auto levels = orchestrator::load_levels(a_data);
      const auto records = agent::run_suite(*loaded.policy, levels, orchestrator::bundle_named(a_data.bundle),
                                            cfg.episode_settings(temperature, cfg.seed));
      std::string lines;
      for (const auto& r : records) lines += record_json(r).dump() + "\n";
      fs::create_directories(g.out);
      write_file(g.out + "/episodes.jsonl", lines);
      const auto s = agent::summarize(records);
      print({{"episodes", s.episodes},
             {"solve_rate", s.solve_rate},
             {"mean_reward", s.mean_reward},
             {"mean_steps", s.mean_steps},
             {"format_rate", s.format_rate},
             {"idle_baseline", agent::idle_baseline(levels)}});
    } else if (*train_cmd) {
      ppo::TrainConfig cfg = base_config(g);
      auto task = orchestrator::make_task(t_data);
      std::unique_ptr<ppo::Task> eval_task;
      if (train_cmd->count("--eval-kind") > 0) eval_task = orchestrator::make_task(t_eval);
      policy::PolicyParams init = init_ckpt.empty() ? ppo::initial_policy(cfg)
                                                    : policy::load_checkpoint(init_ckpt);
      ppo::TrainOutputs outs;
      outs.dir = g.out;
      outs.run_name = run_name;
      outs.on_step = [](const ppo::MetricsRow& m) {
        if (m.step % 10 == 0)
          std::fprintf(stderr, "step %lld reward %.4f acc %.3f kl %.5f\n", static_cast<long long>(m.step),
                       m.mean_reward, m.acc_rate, m.kl);
      };
      const auto res = ppo::train(cfg, *task, eval_task.get(), std::move(init), outs);
      const std::string final_path = g.out + "/" + run_name + ".final.ckpt";
      policy::save_checkpoint(final_path, res.params);
      json evals = json::array();
      for (const auto& e : res.evals) evals.push_back({{"step", e.step}, {"env_steps", e.env_steps}, {"score", e.score}});
      print({{"optimizer_steps", res.optimizer_steps},
             {"env_steps", res.env_steps},
             {"checkpoint", final_path},
             {"checkpoint_hash", hex64(res.params.hash())},
             {"dropped_rollouts", res.dropped_rollouts},
             {"evals", evals}});
    } else if (*plan_cmd) {
      auto plan = orchestrator::StagePlan::load(plan_file);
      if (app.get_option("--out")->count() > 0) plan.out_dir = g.out;
      if (g.seed_given) plan.base["seed"] = g.seed;
      const auto res = orchestrator::run_plan(plan, !no_resume);
      json stages = json::array();
      for (const auto& s : res.stages) {
        json sj = s.to_json();
        sj["resumed"] = s.resumed;
        stages.push_back(sj);
      }
      print({{"final_checkpoint", res.final_checkpoint}, {"final_hash", res.final_hash}, {"stages", stages}});
    } else if (*eval_cmd) {
      ppo::TrainConfig cfg = base_config(g);
      auto loaded = load_policy(policy_spec, timeout_ms, max_concurrent);
      const auto rep = orchestrator::evaluate(*loaded.policy, loaded.id, e_data, cfg, temperature, g.out, !no_reuse);
      json summary = rep.summary;
      summary["summary_path"] = rep.summary_path;
      summary["items_path"] = rep.items_path;
      summary["cached"] = rep.cached;
      print(summary);
    } else if (*curves) {
      std::vector<std::pair<std::string, std::string>> runs;
      for (const auto& a : curve_args) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) {
          runs.emplace_back(fs::path(a).stem().string(), a);
        } else {
          runs.emplace_back(a.substr(0, eq), a.substr(eq + 1));
        }
      }
      const std::string table = orchestrator::export_curves(runs);
      if (curve_out.empty()) {
        std::cout << table;
      } else {
        write_file(curve_out, table);
      }
    } else if (*policy_cmd) {
      if (*p_inspect) {
        policy::CheckpointMeta meta;
        const auto p = policy::load_checkpoint(ckpt, &meta);
        print({{"version", p.version},
               {"hash", hex64(p.hash())},
               {"params", p.theta.size()},
               {"vocab_size", p.arch.vocab_size},
               {"embed_dim", p.arch.embed_dim},
               {"hidden", p.arch.hidden},
               {"window", p.arch.window},
               {"finite", p.finite()},
               {"meta", json::parse(meta.json, nullptr, false)}});
      } else if (*p_init) {
        ppo::TrainConfig cfg = base_config(g);
        const auto p = ppo::initial_policy(cfg);
        fs::create_directories(g.out);
        policy::save_checkpoint(g.out + "/init.ckpt", p);
        print({{"checkpoint", g.out + "/init.ckpt"}, {"hash", hex64(p.hash())}});
      }
    } else if (*serve) {
      std::unique_ptr<agent::GenerativePolicy> backing;
      wire::Handler h;
      if (handler == "echo") {
        h = wire::echo_handler();
      } else {
        backing = load_policy(handler, timeout_ms, max_concurrent).policy;
        h = wire::policy_handler(*backing);
      }
      if (use_stdio) {
        wire::serve_stream(0, 1, h);
      } else {
        wire::TcpServer server(h, port);
        std::fprintf(stderr, "listening on 127.0.0.1:%d\n", server.port());
        std::string line;
        while (std::getline(std::cin, line)) {
        }
        server.stop();
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
