// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run all criteria
//   acceptance 3 5 9      run a subset
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "format_cases.hpp"
#include "json.hpp"
#include "verirl/agent.hpp"
#include "verirl/common.hpp"
#include "verirl/corpus.hpp"
#include "verirl/kernels.hpp"
#include "verirl/orchestrator.hpp"
#include "verirl/policy.hpp"
#include "verirl/ppo.hpp"
#include "verirl/rng.hpp"
#include "verirl/sokoban.hpp"
#include "verirl/verifier.hpp"

using namespace verirl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

std::string source_path(const std::string& rel) { return std::string(VERIRL_SOURCE_DIR) + "/" + rel; }

std::string scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "verirl_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

// 1. Extraction examples.
Outcome c1() {
  int agree = 0, total = 0;
  std::string misses;
  std::istringstream in(read_file(source_path("tests/fixtures/extraction.jsonl")));
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    ++total;
    const auto kind = verifier::kind_from_name(j["kind"].get<std::string>());
    const std::string response = j["response"];
    const auto got = verifier::try_parse_answer(verifier::extract_answer(response), kind);
    const auto want = verifier::parse_answer(j["extracted"].get<std::string>(), kind);
    if (got && got->canonical() == want.canonical() && verifier::check_equivalence(*got, want) == 1 &&
        verifier::score(response, j["extracted"].get<std::string>(), 0.5, kind).accuracy_reward == 1.0) {
      ++agree;
    } else {
      misses += " " + j["id"].get<std::string>();
    }
  }
  return {total >= 11 && agree == total,
          std::to_string(agree) + "/" + std::to_string(total) + " extractions agree" + misses};
}

// 2. r = alpha * r_f + r_a over random triples.
Outcome c2() {
  Rng rng(2024);
  int bad = 0;
  const std::vector<std::string> thinks = {"<think>t</think>", "", "<think>x", "<think></think>"};
  for (int i = 0; i < 10000; ++i) {
    const long truth = static_cast<long>(rng.below(1000)) - 500;
    const bool right = rng.coin();
    const long shown = right ? truth : truth + 1 + static_cast<long>(rng.below(9));
    const std::string& think = thinks[rng.below(thinks.size())];
    const std::string pad = rng.coin() ? " " : "";
    const std::string num = rng.coin() ? "$" + std::to_string(shown) + "$" : std::to_string(shown);
    const std::string response = think + "<answer>" + pad + num + pad + "</answer>";
    const double alpha = rng.uniform() * 2.0;
    const auto r = verifier::score(response, std::to_string(truth), alpha);
    const double rf = testing::format_regex_oracle(response) ? 1.0 : 0.0;
    const double ra = right ? 1.0 : 0.0;
    const bool ok = r.format_reward == rf && r.accuracy_reward == ra && r.alpha == alpha &&
                    r.combined == alpha * rf + ra;
    if (!ok) ++bad;
  }
  return {bad == 0, std::to_string(10000 - bad) + "/10000 triples exact"};
}

// 3. Format grammar against the regex oracle.
Outcome c3() {
  const auto cases = testing::format_cases();
  int agree = 0;
  for (const auto& c : cases) agree += (verifier::check_format(c).score == 1) == testing::format_regex_oracle(c);
  return {cases.size() >= 200 && agree == static_cast<int>(cases.size()),
          std::to_string(agree) + "/" + std::to_string(cases.size()) + " cases match"};
}

// 4. Central finite differences.
Outcome c4() {
  const policy::Vocab vocab;
  policy::PolicyParams p = policy::init(4, policy::Architecture::for_vocab(vocab, 4, {12}, 8));
  Rng rng(44);
  for (auto& t : p.theta) t += 0.3 * rng.normal();
  std::vector<std::vector<int>> windows;
  std::vector<kernels::TokenSample> samples;
  for (int i = 0; i < 16; ++i) {
    std::vector<int> w(p.arch.window);
    for (auto& t : w) t = 1 + static_cast<int>(rng.below(vocab.size() - 1));
    windows.push_back(w);
  }
  for (int i = 0; i < 16; ++i) {
    kernels::TokenSample s;
    s.context = windows[i].data();
    s.token = 1 + static_cast<int>(rng.below(vocab.size() - 1));
    // Ratios stay well inside the clip range so the surrogate is smooth here.
    s.old_logp = policy::logprobs(p, windows[i]).logp[s.token] + 0.05 * rng.normal();
    s.advantage = rng.normal();
    s.ret = rng.normal();
    s.weight = 0.5 + rng.uniform();
    samples.push_back(s);
  }
  struct Term {
    const char* name;
    kernels::LossWeights w;
  };
  const Term terms[] = {{"policy", {1, 0, 0, 0, 0.2}}, {"value", {0, 1, 0, 0, 0.2}}, {"entropy", {0, 0, 1, 0, 0.2}}};
  double worst = 0.0;
  int checked = 0;
  bool ok = true;
  const double h = 1e-5;
  for (auto exec : {kernels::Exec::Reference, kernels::Exec::Fast}) {
    for (const auto& term : terms) {
      const auto r = kernels::loss_and_grad(p, samples, term.w, exec);
      std::vector<std::size_t> live;
      for (std::size_t k = 0; k < r.grad.size(); ++k)
        if (std::abs(r.grad[k]) > 1e-6) live.push_back(k);
      if (live.size() < 64) ok = false;
      for (int k = 0; k < 64 && !live.empty(); ++k) {
        const std::size_t idx = live[rng.below(live.size())];
        auto plus = p, minus = p;
        plus.theta[idx] += h;
        minus.theta[idx] -= h;
        const double fd = (kernels::loss_and_grad(plus, samples, term.w, exec, false).loss -
                           kernels::loss_and_grad(minus, samples, term.w, exec, false).loss) /
                          (2 * h);
        const double rel = std::abs(fd - r.grad[idx]) / std::max(std::abs(fd), std::abs(r.grad[idx]));
        worst = std::max(worst, rel);
        ++checked;
      }
    }
  }
  ok = ok && worst < 1e-4;
  return {ok, std::to_string(checked) + " coordinates, worst relative error " + fmt("%.2e", worst)};
}

// 5. GAE identities.
Outcome c5() {
  Rng rng(5);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<double> r(n), v(n);
    for (auto& x : r) x = rng.normal();
    for (auto& x : v) x = rng.normal();
    const auto sum = ppo::gae(r, v, 1.0, 1.0);
    const auto zero = ppo::gae(r, v, rng.uniform(), 0.0);
    double tail = 0.0;
    for (std::size_t t = n; t-- > 0;) {
      tail += r[t];
      worst = std::max(worst, std::abs(sum.advantages[t] - (tail - v[t])));
      worst = std::max(worst, std::abs(sum.returns[t] - tail));
      worst = std::max(worst, std::abs(zero.advantages[t] - (r[t] - v[t])));
    }
  }
  return {worst <= 1e-12, "1000 vectors, worst deviation " + fmt("%.1e", worst)};
}

// 6. KL properties.
Outcome c6() {
  const policy::Vocab vocab;
  const auto arch = policy::Architecture::for_vocab(vocab, 4, {16}, 12);
  Rng rng(6);
  bool self_zero = true;
  double min_kl = 1e300;
  for (int i = 0; i < 1000; ++i) {
    auto a = policy::init(rng.next_u64(), arch);
    auto b = policy::init(rng.next_u64(), arch);
    for (auto& t : a.theta) t += 0.2 * rng.normal();
    for (auto& t : b.theta) t += 0.2 * rng.normal();
    std::vector<int> ctx(arch.window);
    for (auto& t : ctx) t = 1 + static_cast<int>(rng.below(vocab.size() - 1));
    const auto pa = policy::logprobs(a, ctx).logp;
    const auto pb = policy::logprobs(b, ctx).logp;
    self_zero = self_zero && policy::exact_kl(pa, pa) == 0.0;
    min_kl = std::min(min_kl, policy::exact_kl(pa, pb));
  }

  ppo::TrainConfig cfg;
  cfg.init_kl_coef = 0.0;
  cfg.generate_max_len = 1;
  cfg.n_samples_per_prompt = 4;
  cfg.embed_dim = 4;
  cfg.hidden = {16};
  cfg.window = 16;
  auto actor = ppo::initial_policy(cfg);
  auto ref_params = actor;
  for (auto& t : actor.theta) t += 0.3 * rng.normal();
  const policy::FrozenPolicy ref = policy::snapshot(ref_params);
  ppo::SokobanTask task(agent::generate_levels(sokoban::Difficulty::SmallV0, 8, 6), agent::AgentPromptBundle::compact());
  const auto rs = ppo::collect(actor, ref, task, {0, 1, 2, 3, 4, 5, 6, 7}, cfg, 66);
  bool shaped_zero = true;
  double kl_seen = 0.0;
  std::size_t positions = 0;
  for (const auto& r : rs) {
    for (std::size_t t = 0; t + 1 < r.shaped_rewards.size(); ++t) {
      shaped_zero = shaped_zero && r.shaped_rewards[t] == 0.0;
      kl_seen += r.kl[t];
      ++positions;
    }
  }
  const bool ok = self_zero && min_kl >= 0.0 && shaped_zero && kl_seen > 0.0;
  return {ok, std::string("KL(p||p)=0 ") + (self_zero ? "exact" : "violated") + ", min KL over 1000 pairs " +
                  fmt("%.3e", min_kl) + ", beta=0 shaped non-terminal rewards " + (shaped_zero ? "all 0" : "nonzero") +
                  " over " + std::to_string(positions) + " positions with KL>0"};
}

// 7. Level generation, solver and replay.
Outcome c7() {
  const auto t0 = std::chrono::steady_clock::now();
  int bad = 0, total = 0;
  for (auto d : {sokoban::Difficulty::SmallV0, sokoban::Difficulty::SmallV1, sokoban::Difficulty::V0,
                 sokoban::Difficulty::V1, sokoban::Difficulty::LargeV0}) {
    const auto levels = agent::generate_levels(d, 1000, 7000 + static_cast<int>(d));
    for (const auto& l : levels) {
      ++total;
      if (sokoban::check_invariants(l.state)) {
        ++bad;
        continue;
      }
      const auto sol = sokoban::solve(l.state);
      if (!sol.actions) {
        ++bad;
        continue;
      }
      const auto end = sokoban::replay(l.state, *sol.actions);
      if (sokoban::task_reward(l.state, end) != 1.0) ++bad;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {bad == 0 && total == 5000 && secs < 120.0,
          std::to_string(total - bad) + "/" + std::to_string(total) + " levels sound, " + fmt("%.1f s", secs)};
}

ppo::TrainConfig desk_config() { return ppo::load_config(source_path("configs/desk_small_v0.json")); }

struct DeskSplit {
  std::vector<agent::Level> train, eval;
};

// Training levels never repeat a held-out grid.
DeskSplit desk_levels(std::uint64_t seed) {
  DeskSplit s;
  s.eval = agent::generate_levels(sokoban::Difficulty::SmallV0, 100, 999999);
  std::set<std::string> held;
  for (const auto& l : s.eval) held.insert(sokoban::render_text(l.state));
  for (auto& l : agent::generate_levels(sokoban::Difficulty::SmallV0, 4000, 1000 + seed))
    if (!held.count(sokoban::render_text(l.state))) s.train.push_back(std::move(l));
  return s;
}

// Last greedy evaluation taken within the step budget.
const ppo::EvalRow& within_budget(const std::vector<ppo::EvalRow>& rows, std::int64_t budget) {
  const ppo::EvalRow* best = &rows.front();
  for (const auto& r : rows)
    if (r.env_steps <= budget) best = &r;
  return *best;
}

// 8. Desk-scale learning on small-v0.
Outcome c8() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::int64_t budget = 50000;
  std::string detail;
  int passed = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    ppo::TrainConfig cfg = desk_config();
    cfg.seed = seed;
    const auto split = desk_levels(seed);
    const auto bundle = agent::AgentPromptBundle::compact();
    ppo::SokobanTask task(split.train, bundle), eval(split.eval, bundle);
    const auto res = ppo::train(cfg, task, &eval, ppo::initial_policy(cfg));
    const auto& start = res.evals.front();
    const auto& end = within_budget(res.evals, budget);
    double peak = 0.0;
    for (const auto& r : res.evals)
      if (r.env_steps <= budget) peak = std::max(peak, r.score);
    const bool ok = start.score < 0.1 && end.score >= 0.8;
    passed += ok;
    detail += " seed" + std::to_string(seed) + ": " + fmt("%.2f", start.score) + "->" + fmt("%.2f", end.score) +
              " at " + std::to_string(end.env_steps) + " steps (peak " + fmt("%.2f", peak) + ");";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {passed == 3 && secs < 900.0, std::to_string(passed) + "/3 seeds reach 0.8;" + detail + fmt(" %.0f s", secs)};
}

// 9. Online prompt history slices.
Outcome c9() {
  const auto level = sokoban::parse_text(
      "#######\n#@    #\n#     #\n#  $  #\n#     #\n#    .#\n#######");
  const std::vector<std::string> replies = {
      "<think>a</think><answer>R</answer>", "<think>a</think><answer>R</answer>",
      "<think>a</think><answer>D</answer>", "<think>a</think><answer>wait</answer>",
      "<think>a</think><answer>L</answer>", "<think>a</think><answer>U</answer>",
      "<think>a</think><answer>U</answer>", "<think>a</think><answer>R</answer>",
      "no tags",                            "<think>a</think><answer>R</answer>",
      "<think>a</think><answer>D</answer>", "<think>a</think><answer>L</answer>"};
  int matched = 0, total = 0;
  for (const auto& bundle : {agent::AgentPromptBundle::english(), agent::AgentPromptBundle::compact()}) {
    agent::ScriptedPolicy policy(replies);
    agent::EpisodeSettings st;
    st.horizon = 12;
    st.action_memory = 5;
    st.observation_memory = 1;
    agent::run_online(policy, "scripted", level, bundle, st);
    std::vector<char> acts;
    auto cur = level;
    for (std::size_t t = 0; t < replies.size(); ++t) {
      // Expected bytes from explicit slicing: last 5 actions, the latest observation.
      std::string want = bundle.p_sys + bundle.p_task;
      for (std::size_t i = acts.size() > 5 ? acts.size() - 5 : 0; i < acts.size(); ++i) want += std::string("<act>") + acts[i];
      want += "<obs>" + sokoban::render_text(cur) + "\n" + bundle.p_cot + bundle.p_io;
      ++total;
      if (t < policy.prompts().size() && policy.prompts()[t] == want) ++matched;
      const std::string& text = replies[t];
      const auto open = text.find("<answer>");
      const std::string inner = open == std::string::npos ? text : text.substr(open + 8, text.find("</answer>") - open - 8);
      for (char c : inner) {
        if (auto a = sokoban::action_from_char(c)) {
          cur = sokoban::step(cur, *a).state;
          acts.push_back(c);
          break;
        }
      }
    }
  }
  return {matched == total && total == 24, std::to_string(matched) + "/" + std::to_string(total) + " prompts byte-identical"};
}

json transfer_plan(std::uint64_t seed, const std::string& out, bool with_fre) {
  json plan = json::parse(read_file(source_path("configs/transfer_plan.json")));
  plan["out_dir"] = out;
  plan["base"]["seed"] = seed;
  if (!with_fre) {
    json mgt = plan["stages"][1];
    mgt.erase("input");
    plan["stages"] = json::array({mgt});
  }
  return plan;
}

// 10. FRE -> MGT against MGT from scratch.
Outcome c10() {
  const auto t0 = std::chrono::steady_clock::now();
  double sum_fre = 0.0, sum_scratch = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::string base = scratch_dir("c10_seed" + std::to_string(seed));
    const auto fre = orchestrator::run_plan(
        orchestrator::StagePlan::from_json(transfer_plan(seed, base + "/fre", true)), false);
    const auto scratch = orchestrator::run_plan(
        orchestrator::StagePlan::from_json(transfer_plan(seed, base + "/scratch", false)), false);
    const double a = ppo::area_under_curve(fre.stages.back().evals);
    const double b = ppo::area_under_curve(scratch.stages.back().evals);
    sum_fre += a;
    sum_scratch += b;
    per_seed += " " + fmt("%+.3f", a - b);
  }
  const double gap = (sum_fre - sum_scratch) / 5.0;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {gap > 0.0, "mean AUC FRE->MGT " + fmt("%.3f", sum_fre / 5) + " vs scratch " + fmt("%.3f", sum_scratch / 5) +
                         ", gap " + fmt("%+.3f", gap) + " (per seed" + per_seed + ")" + fmt(", %.0f s", secs)};
}

// 11. Two full plan runs agree.
Outcome c11() {
  const std::string a = scratch_dir("c11_a"), b = scratch_dir("c11_b");
  const auto ra = orchestrator::run_plan(orchestrator::StagePlan::from_json(transfer_plan(11, a, true)), false);
  const auto rb = orchestrator::run_plan(orchestrator::StagePlan::from_json(transfer_plan(11, b, true)), false);
  bool same = ra.final_hash == rb.final_hash && ra.stages.size() == rb.stages.size();
  int files = 0;
  for (std::size_t k = 0; same && k < ra.stages.size(); ++k) {
    same = same && ra.stages[k].checkpoint_hash == rb.stages[k].checkpoint_hash;
    for (const char* ext : {".metrics.csv", ".eval.csv"}) {
      const std::string fa = a + "/" + ra.stages[k].name + ext, fb = b + "/" + rb.stages[k].name + ext;
      if (!fs::exists(fa)) continue;
      same = same && read_file(fa) == read_file(fb);
      ++files;
    }
  }
  return {same && files >= 2, std::string(same ? "identical" : "different") + " checkpoint hashes and " +
                                  std::to_string(files) + " metrics files, final " + ra.final_hash};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "verifier extraction fixture", c1},  {2, "reward arithmetic", c2},
      {3, "format grammar", c3},               {4, "gradient checks", c4},
      {5, "GAE identities", c5},               {6, "KL properties", c6},
      {7, "Sokoban soundness", c7},            {8, "desk-scale learning", c8},
      {9, "agent protocol fidelity", c9},      {10, "two-stage transfer", c10},
      {11, "plan determinism", c11},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("C%-2d %s  %s: %s [%.1f s]\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
