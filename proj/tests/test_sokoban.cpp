#include <functional>

#include "doctest.h"
#include "verirl/common.hpp"
#include "verirl/rng.hpp"
#include "verirl/sokoban.hpp"

using namespace verirl::sokoban;

namespace {

// Iterative-deepening exhaustive search over raw action strings.
int exhaustive_min_length(const State& s, int max_len) {
  std::vector<Action> seq;
  std::function<bool(const State&, int)> dfs = [&](const State& cur, int depth) {
    if (cur.solved()) return true;
    if (depth == 0) return false;
    for (Action a : kAllActions) {
      auto r = step(cur, a);
      if (!r.moved) continue;
      if (dfs(r.state, depth - 1)) return true;
    }
    return false;
  };
  for (int len = 0; len <= max_len; ++len) {
    if (dfs(s, len)) return len;
  }
  return -1;
}

}  // namespace

TEST_CASE("generate_level is deterministic and respects the difficulty table") {
  auto a = generate_level(LevelSpec::preset(Difficulty::SmallV0, 42));
  auto b = generate_level(LevelSpec::preset(Difficulty::SmallV0, 42));
  CHECK(render_text(a) == render_text(b));
  CHECK(a == b);
  CHECK(a.box_count() == 1);
  CHECK(a.width == 7);
  CHECK(generate_level(LevelSpec::preset(Difficulty::SmallV1, 1)).box_count() == 2);
  CHECK(generate_level(LevelSpec::preset(Difficulty::V1, 1)).box_count() == 3);
  CHECK(generate_level(LevelSpec::preset(Difficulty::LargeV0, 1)).width == 12);
  CHECK(render_text(generate_level(LevelSpec::preset(Difficulty::SmallV0, 43))) != render_text(a));
}

TEST_CASE("generated levels are valid, unsolved and solvable") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto s = generate_level(LevelSpec::preset(Difficulty::SmallV0, seed));
    CHECK_FALSE(check_invariants(s).has_value());
    CHECK_FALSE(s.solved());
    auto sol = solve(s);
    REQUIRE(sol.actions);
    CHECK(replay(s, *sol.actions).solved());
  }
}

TEST_CASE("degenerate spec exhausts generation") {
  LevelSpec spec = LevelSpec::preset(Difficulty::SmallV0, 1);
  spec.reverse_moves = 0;  // boxes never leave their targets
  try {
    generate_level(spec);
    FAIL("expected GENERATION_EXHAUSTED");
  } catch (const verirl::Error& e) {
    CHECK(e.code() == verirl::ErrorCode::GenerationExhausted);
  }
}

TEST_CASE("step semantics") {
  auto s = parse_text("#####\n#@$.#\n#####");
  auto r = step(s, Action::Right);
  CHECK(r.moved);
  CHECK(r.pushed);
  CHECK(r.state.boxes_on_target() == s.boxes_on_target() + 1);
  CHECK(r.state.solved());

  auto blocked = step(r.state, Action::Right);  // box against wall
  CHECK_FALSE(blocked.moved);
  CHECK(blocked.state == r.state);

  auto wall = step(s, Action::Up);
  CHECK_FALSE(wall.moved);
  CHECK(wall.state == s);

  auto two = parse_text("######\n#@$$.#\n#   .#\n######");
  CHECK_FALSE(step(two, Action::Right).moved);  // two boxes in a row
}

TEST_CASE("random transitions preserve invariants") {
  verirl::Rng rng(3);
  State s = generate_level(LevelSpec::preset(Difficulty::V1, 9));
  const State start = s;
  for (int i = 0; i < 10000; ++i) {
    if (i % 500 == 0) s = generate_level(LevelSpec::preset(Difficulty::SmallV1, rng.below(1000)));
    auto r = step(s, kAllActions[rng.below(4)]);
    CHECK_FALSE(check_invariants(r.state).has_value());
    CHECK(r.state.same_geometry(s));
    CHECK(r.state.box_count() == s.box_count());
    s = r.state;
  }
  CHECK(start.box_count() == 3);
}

TEST_CASE("solve returns optimal sequences") {
  auto solved = parse_text("#####\n#@*.#\n#  $#\n#####");
  CHECK_FALSE(solved.solved());
  auto done = parse_text("####\n#@*#\n####");
  auto r0 = solve(done);
  REQUIRE(r0.actions);
  CHECK(r0.actions->empty());

  auto corridor = parse_text("######\n#@$ .#\n######");
  auto r = solve(corridor);
  REQUIRE(r.actions);
  CHECK(actions_to_string(*r.actions) == "RR");
  CHECK(exhaustive_min_length(corridor, 4) == 2);

  auto stuck = parse_text("#####\n#@ $#\n#  .#\n#####");  // box in corner
  CHECK_FALSE(solve(stuck).actions.has_value());

  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto s = generate_level(LevelSpec::preset(Difficulty::SmallV0, seed));
    auto sol = solve(s);
    REQUIRE(sol.actions);
    if (sol.actions->size() > 7) continue;
    CHECK(exhaustive_min_length(s, 7) == static_cast<int>(sol.actions->size()));
  }
}

TEST_CASE("solve honours the node budget") {
  auto s = generate_level(LevelSpec::preset(Difficulty::LargeV0, 5));
  auto r = solve(s, 3);
  CHECK_FALSE(r.actions.has_value());
}

TEST_CASE("render/parse round trip") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto s = generate_level(LevelSpec::preset(Difficulty::V0, seed));
    const auto text = render_text(s);
    CHECK(parse_text(text) == s);
    CHECK(render_text(parse_text(text)) == text);
    CHECK(text.size() == static_cast<std::size_t>(s.height * (s.width + 1) - 1));
  }
  auto tiny = parse_text("###\n#*#\n#@#\n###");
  const auto t = render_text(tiny);
  CHECK(std::count(t.begin(), t.end(), '*') == 1);
  CHECK_THROWS(parse_text("#####\n#@x.#\n#####"));
  CHECK_THROWS(parse_text("#####\n @$.#\n#####"));  // open border
}

TEST_CASE("local view is centred on the player") {
  auto s = parse_text("######\n#@ $.#\n#    #\n######");
  CHECK(render_local(s, 1) == "###\n#@ \n#  ");
  CHECK(render_local(s, 0) == "@");
  const auto wide = render_local(s, 3);
  CHECK(wide.size() == 7 * 8 - 1);
  CHECK(wide.substr(0, 7) == "#######");  // rows above the grid render as walls
  CHECK(wide.substr(3 * 8, 7) == "###@ $.");
  CHECK_THROWS(render_local(s, -1));
}

TEST_CASE("task_reward") {
  auto two = parse_text("######\n#@$ .#\n# $ .#\n######");
  CHECK(task_reward(two, two) == 0.0);
  auto one = step(step(two, Action::Right).state, Action::Right).state;
  CHECK(one.boxes_on_target() == 1);
  CHECK(task_reward(two, one) == 0.25);
  auto single = parse_text("#####\n#@$.#\n#####");
  CHECK(task_reward(single, step(single, Action::Right).state) == 1.0);
  CHECK_THROWS_AS(task_reward(single, two), verirl::Error);
}

TEST_CASE("action strings") {
  int skipped = 0;
  auto acts = parse_actions("U x D,L R!", &skipped);
  CHECK(acts.size() == 4);
  CHECK(skipped == 6);
  CHECK(actions_to_string(acts) == "UDLR");
}
