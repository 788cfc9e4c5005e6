#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace verirl::sokoban {

enum class Action : std::uint8_t { Up, Down, Left, Right };

inline constexpr Action kAllActions[] = {Action::Up, Action::Down, Action::Left, Action::Right};

char action_char(Action a);
std::optional<Action> action_from_char(char c);
std::string actions_to_string(std::span<const Action> actions);

// Parses an action string. Characters other than U/D/L/R are skipped and
// counted in *skipped when provided.
std::vector<Action> parse_actions(std::string_view s, int* skipped = nullptr);

// Immutable grid snapshot. Cells are row-major indices; the outer ring is wall.
struct State {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> walls;
  std::vector<std::uint8_t> targets;
  std::vector<int> boxes;  // sorted cell indices
  int player = 0;

  int cell(int row, int col) const { return row * width + col; }
  int size() const { return width * height; }
  bool is_wall(int c) const { return walls[c] != 0; }
  bool is_target(int c) const { return targets[c] != 0; }
  bool has_box(int c) const;
  int box_count() const { return static_cast<int>(boxes.size()); }
  int boxes_on_target() const;
  bool solved() const { return boxes_on_target() == box_count(); }
  bool same_geometry(const State& other) const;

  friend bool operator==(const State&, const State&) = default;
};

// Returns a description of the first violated invariant, or nullopt.
std::optional<std::string> check_invariants(const State& s);

enum class Difficulty { SmallV0, SmallV1, V0, V1, LargeV0 };

std::string_view difficulty_name(Difficulty d);
std::optional<Difficulty> difficulty_from_name(std::string_view name);

struct LevelSpec {
  Difficulty difficulty = Difficulty::SmallV0;
  int interior_width = 5;
  int interior_height = 5;
  int boxes = 1;
  int interior_walls = 0;
  int reverse_moves = 60;
  std::uint64_t seed = 0;

  // Preset dimensions for each named difficulty.
  static LevelSpec preset(Difficulty d, std::uint64_t seed);
  bool valid() const;
};

// Reverse-play generation: boxes start on targets, random pulls scatter them.
// Solvable by construction; deterministic per spec.seed. Throws
// GENERATION_EXHAUSTED when the retry budget runs out.
State generate_level(const LevelSpec& spec);

struct StepResult {
  State state;
  bool moved = false;
  bool pushed = false;
};

StepResult step(const State& s, Action a);

// Replays actions through step(); stops early once solved when stop_when_solved.
State replay(const State& s, std::span<const Action> actions, bool stop_when_solved = false);

struct SolveResult {
  std::optional<std::vector<Action>> actions;  // nullopt: UNSOLVED
  std::size_t expanded = 0;
};

// Breadth-first search over (player, boxes); returns a minimum-move solution.
SolveResult solve(const State& s, std::size_t max_nodes = 4'000'000);

std::string render_text(const State& s);
// Square window of side 2*radius+1 centred on the player; cells outside the
// grid render as walls.
std::string render_local(const State& s, int radius);
State parse_text(std::string_view grid);

// 0.5 * fraction of boxes on targets + 0.5 * [solved].
double task_reward(const State& initial, const State& final_state);

}  // namespace verirl::sokoban
