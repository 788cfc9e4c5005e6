#include "verirl/sokoban.hpp"

#include <algorithm>
#include <deque>

#include "verirl/common.hpp"
#include "verirl/rng.hpp"

namespace verirl::sokoban {

namespace {

int delta(const State& s, Action a) {
  switch (a) {
    case Action::Up: return -s.width;
    case Action::Down: return s.width;
    case Action::Left: return -1;
    case Action::Right: return 1;
  }
  return 0;
}

bool floor_connected(const std::vector<std::uint8_t>& walls, int width, int height) {
  const int n = width * height;
  int start = -1, floor = 0;
  for (int c = 0; c < n; ++c) {
    if (!walls[c]) {
      ++floor;
      if (start < 0) start = c;
    }
  }
  if (start < 0) return false;
  std::vector<std::uint8_t> seen(n, 0);
  std::deque<int> queue{start};
  seen[start] = 1;
  int reached = 0;
  while (!queue.empty()) {
    const int c = queue.front();
    queue.pop_front();
    ++reached;
    for (int d : {-width, width, -1, 1}) {
      const int nb = c + d;
      if (nb >= 0 && nb < n && !walls[nb] && !seen[nb]) {
        seen[nb] = 1;
        queue.push_back(nb);
      }
    }
  }
  return reached == floor;
}

}  // namespace

char action_char(Action a) {
  switch (a) {
    case Action::Up: return 'U';
    case Action::Down: return 'D';
    case Action::Left: return 'L';
    case Action::Right: return 'R';
  }
  return '?';
}

std::optional<Action> action_from_char(char c) {
  switch (c) {
    case 'U': return Action::Up;
    case 'D': return Action::Down;
    case 'L': return Action::Left;
    case 'R': return Action::Right;
    default: return std::nullopt;
  }
}

std::string actions_to_string(std::span<const Action> actions) {
  std::string out;
  out.reserve(actions.size());
  for (Action a : actions) out.push_back(action_char(a));
  return out;
}

std::vector<Action> parse_actions(std::string_view s, int* skipped) {
  std::vector<Action> out;
  int bad = 0;
  for (char c : s) {
    if (auto a = action_from_char(c)) {
      out.push_back(*a);
    } else {
      ++bad;
    }
  }
  if (skipped) *skipped = bad;
  return out;
}

bool State::has_box(int c) const { return std::binary_search(boxes.begin(), boxes.end(), c); }

int State::boxes_on_target() const {
  int n = 0;
  for (int b : boxes) n += targets[b] ? 1 : 0;
  return n;
}

bool State::same_geometry(const State& o) const {
  return width == o.width && height == o.height && walls == o.walls && targets == o.targets &&
         boxes.size() == o.boxes.size();
}

std::optional<std::string> check_invariants(const State& s) {
  if (s.width < 3 || s.height < 3) return "grid smaller than 3x3";
  const int n = s.size();
  if (static_cast<int>(s.walls.size()) != n || static_cast<int>(s.targets.size()) != n)
    return "cell layer size mismatch";
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      const bool border = r == 0 || c == 0 || r == s.height - 1 || c == s.width - 1;
      if (border && !s.walls[s.cell(r, c)]) return "border cell is not a wall";
    }
  }
  int targets = 0;
  for (int c = 0; c < n; ++c) {
    if (s.targets[c]) {
      ++targets;
      if (s.walls[c]) return "target on wall";
    }
  }
  if (s.boxes.empty()) return "no boxes";
  if (static_cast<int>(s.boxes.size()) != targets) return "box count differs from target count";
  for (std::size_t i = 0; i < s.boxes.size(); ++i) {
    const int b = s.boxes[i];
    if (b < 0 || b >= n) return "box out of bounds";
    if (s.walls[b]) return "box on wall";
    if (i > 0 && s.boxes[i - 1] >= b) return "boxes not sorted/unique";
  }
  if (s.player < 0 || s.player >= n) return "player out of bounds";
  if (s.walls[s.player]) return "player on wall";
  if (s.has_box(s.player)) return "player on box";
  return std::nullopt;
}

std::string_view difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::SmallV0: return "small-v0";
    case Difficulty::SmallV1: return "small-v1";
    case Difficulty::V0: return "v0";
    case Difficulty::V1: return "v1";
    case Difficulty::LargeV0: return "large-v0";
  }
  return "?";
}

std::optional<Difficulty> difficulty_from_name(std::string_view name) {
  for (Difficulty d : {Difficulty::SmallV0, Difficulty::SmallV1, Difficulty::V0, Difficulty::V1,
                       Difficulty::LargeV0}) {
    if (difficulty_name(d) == name) return d;
  }
  return std::nullopt;
}

LevelSpec LevelSpec::preset(Difficulty d, std::uint64_t seed) {
  LevelSpec spec;
  spec.difficulty = d;
  spec.seed = seed;
  switch (d) {
    case Difficulty::SmallV0: spec.interior_width = spec.interior_height = 5; spec.boxes = 1; break;
    case Difficulty::SmallV1: spec.interior_width = spec.interior_height = 5; spec.boxes = 2; break;
    case Difficulty::V0: spec.interior_width = spec.interior_height = 7; spec.boxes = 2; break;
    case Difficulty::V1: spec.interior_width = spec.interior_height = 7; spec.boxes = 3; break;
    case Difficulty::LargeV0: spec.interior_width = spec.interior_height = 10; spec.boxes = 3; break;
  }
  spec.interior_walls = spec.interior_width * spec.interior_height / 12;
  spec.reverse_moves = 3 * 2 * (spec.interior_width + spec.interior_height);
  return spec;
}

bool LevelSpec::valid() const {
  const int interior = interior_width * interior_height;
  return interior_width >= 2 && interior_height >= 2 && boxes >= 1 && interior_walls >= 0 &&
         reverse_moves >= 0 && (interior_width + 2) * (interior_height + 2) <= 255 &&
         boxes + interior_walls + 1 < interior;
}

State generate_level(const LevelSpec& spec) {
  if (!spec.valid()) throw Error(ErrorCode::GenerationExhausted, "invalid level spec");
  constexpr int kAttempts = 256;
  Rng rng(spec.seed);
  const int width = spec.interior_width + 2;
  const int height = spec.interior_height + 2;
  const int n = width * height;

  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    State s;
    s.width = width;
    s.height = height;
    s.walls.assign(n, 0);
    s.targets.assign(n, 0);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        if (r == 0 || c == 0 || r == height - 1 || c == width - 1) s.walls[s.cell(r, c)] = 1;
      }
    }
    for (int w = 0; w < spec.interior_walls; ++w) {
      const int r = 1 + static_cast<int>(rng.below(spec.interior_height));
      const int c = 1 + static_cast<int>(rng.below(spec.interior_width));
      const int cell = s.cell(r, c);
      if (s.walls[cell]) continue;
      s.walls[cell] = 1;
      if (!floor_connected(s.walls, width, height)) s.walls[cell] = 0;
    }

    std::vector<int> floor;
    for (int c = 0; c < n; ++c) {
      if (!s.walls[c]) floor.push_back(c);
    }
    // Partial Fisher-Yates to draw targets + player start.
    const int picks = spec.boxes + 1;
    if (static_cast<int>(floor.size()) < picks + 1) continue;
    for (int i = 0; i < picks; ++i) {
      const int j = i + static_cast<int>(rng.below(floor.size() - i));
      std::swap(floor[i], floor[j]);
    }
    for (int i = 0; i < spec.boxes; ++i) {
      s.targets[floor[i]] = 1;
      s.boxes.push_back(floor[i]);
    }
    std::sort(s.boxes.begin(), s.boxes.end());
    s.player = floor[spec.boxes];

    for (int m = 0; m < spec.reverse_moves; ++m) {
      const Action a = kAllActions[rng.below(4)];
      const bool pull = rng.coin();
      const int d = delta(s, a);
      const int next = s.player + d;
      if (s.walls[next] || s.has_box(next)) continue;
      const int behind = s.player - d;
      if (pull && s.has_box(behind)) {
        auto it = std::lower_bound(s.boxes.begin(), s.boxes.end(), behind);
        *it = s.player;
        std::sort(s.boxes.begin(), s.boxes.end());
      }
      s.player = next;
    }
    if (s.solved()) continue;
    if (check_invariants(s)) continue;
    return s;
  }
  throw Error(ErrorCode::GenerationExhausted,
              "no unsolved level after retry budget (seed " + std::to_string(spec.seed) + ")");
}

StepResult step(const State& s, Action a) {
  StepResult out{s, false, false};
  const int d = delta(s, a);
  const int next = s.player + d;
  if (s.walls[next]) return out;
  if (s.has_box(next)) {
    const int beyond = next + d;
    if (s.walls[beyond] || s.has_box(beyond)) return out;
    auto it = std::lower_bound(out.state.boxes.begin(), out.state.boxes.end(), next);
    *it = beyond;
    std::sort(out.state.boxes.begin(), out.state.boxes.end());
    out.pushed = true;
  }
  out.state.player = next;
  out.moved = true;
  return out;
}

State replay(const State& s, std::span<const Action> actions, bool stop_when_solved) {
  State cur = s;
  for (Action a : actions) {
    if (stop_when_solved && cur.solved()) break;
    cur = step(cur, a).state;
  }
  return cur;
}

namespace {

char cell_char(const State& s, int cell) {
  if (s.walls[cell]) return '#';
  if (s.has_box(cell)) return s.targets[cell] ? '*' : '$';
  if (s.player == cell) return s.targets[cell] ? '+' : '@';
  return s.targets[cell] ? '.' : ' ';
}

}  // namespace

std::string render_text(const State& s) {
  std::string out;
  out.reserve(static_cast<std::size_t>(s.height) * (s.width + 1));
  for (int r = 0; r < s.height; ++r) {
    if (r > 0) out.push_back('\n');
    for (int c = 0; c < s.width; ++c) out.push_back(cell_char(s, s.cell(r, c)));
  }
  return out;
}

std::string render_local(const State& s, int radius) {
  if (radius < 0) throw Error(ErrorCode::InvalidConfig, "view radius must be >= 0");
  const int pr = s.player / s.width;
  const int pc = s.player % s.width;
  std::string out;
  for (int r = pr - radius; r <= pr + radius; ++r) {
    if (r > pr - radius) out.push_back('\n');
    for (int c = pc - radius; c <= pc + radius; ++c)
      out.push_back(r < 0 || c < 0 || r >= s.height || c >= s.width ? '#' : cell_char(s, s.cell(r, c)));
  }
  return out;
}

State parse_text(std::string_view grid) {
  std::vector<std::string_view> rows;
  std::size_t start = 0;
  while (start <= grid.size()) {
    const std::size_t nl = grid.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? grid.size() : nl;
    rows.push_back(grid.substr(start, end - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  State s;
  s.height = static_cast<int>(rows.size());
  for (auto row : rows) s.width = std::max(s.width, static_cast<int>(row.size()));
  if (s.width < 3 || s.height < 3) throw Error(ErrorCode::Unparseable, "grid too small");
  s.walls.assign(s.size(), 0);
  s.targets.assign(s.size(), 0);
  int players = 0;
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      const char ch = c < static_cast<int>(rows[r].size()) ? rows[r][c] : ' ';
      const int cell = s.cell(r, c);
      switch (ch) {
        case '#': s.walls[cell] = 1; break;
        case '.': s.targets[cell] = 1; break;
        case '$': s.boxes.push_back(cell); break;
        case '*': s.boxes.push_back(cell); s.targets[cell] = 1; break;
        case '@': s.player = cell; ++players; break;
        case '+': s.player = cell; s.targets[cell] = 1; ++players; break;
        case ' ': break;
        default: throw Error(ErrorCode::Unparseable, std::string("bad grid character '") + ch + "'");
      }
    }
  }
  if (players != 1) throw Error(ErrorCode::Unparseable, "grid must contain exactly one player");
  std::sort(s.boxes.begin(), s.boxes.end());
  if (auto err = check_invariants(s)) throw Error(ErrorCode::Unparseable, *err);
  return s;
}

double task_reward(const State& initial, const State& final_state) {
  if (!initial.same_geometry(final_state))
    throw Error(ErrorCode::GeometryMismatch, "initial and final states differ in geometry");
  const int n = final_state.box_count();
  const int on = final_state.boxes_on_target();
  return 0.5 * static_cast<double>(on) / n + (on == n ? 0.5 : 0.0);
}

}  // namespace verirl::sokoban
