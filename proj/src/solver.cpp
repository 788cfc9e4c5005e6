#include <algorithm>
#include <array>

#include "verirl/common.hpp"
#include "verirl/sokoban.hpp"

namespace verirl::sokoban {

namespace {

// Open-addressing set of packed states mapping to node indices.
class NodeTable {
 public:
  explicit NodeTable(std::size_t expected) {
    std::size_t cap = 1024;
    while (cap < expected * 2) cap <<= 1;
    slots_.assign(cap, kEmpty);
  }

  // Returns true if inserted (key was absent).
  bool insert(std::uint64_t key, std::uint32_t index, const std::vector<std::uint64_t>& keys) {
    if ((size_ + 1) * 2 > slots_.size()) grow(keys);
    std::size_t mask = slots_.size() - 1;
    std::size_t i = hash(key) & mask;
    while (slots_[i] != kEmpty) {
      if (keys[slots_[i]] == key) return false;
      i = (i + 1) & mask;
    }
    slots_[i] = index;
    ++size_;
    return true;
  }

 private:
  static constexpr std::uint32_t kEmpty = UINT32_MAX;

  static std::size_t hash(std::uint64_t k) { return static_cast<std::size_t>(mix_seed(k, 0)); }

  void grow(const std::vector<std::uint64_t>& keys) {
    std::vector<std::uint32_t> old = std::move(slots_);
    slots_.assign(old.size() * 2, kEmpty);
    const std::size_t mask = slots_.size() - 1;
    for (std::uint32_t idx : old) {
      if (idx == kEmpty) continue;
      std::size_t i = hash(keys[idx]) & mask;
      while (slots_[i] != kEmpty) i = (i + 1) & mask;
      slots_[i] = idx;
    }
  }

  std::vector<std::uint32_t> slots_;
  std::size_t size_ = 0;
};

struct Packing {
  int bits;
  std::uint64_t mask;
};

}  // namespace

SolveResult solve(const State& s, std::size_t max_nodes) {
  SolveResult result;
  if (s.solved()) {
    result.actions = std::vector<Action>{};
    return result;
  }
  const int nboxes = s.box_count();
  const Packing pk = s.size() <= 256 ? Packing{8, 0xff} : Packing{16, 0xffff};
  if ((nboxes + 1) * pk.bits > 64 || s.size() > 65536)
    throw Error(ErrorCode::InvalidConfig, "level too large for the packed-state solver");

  auto pack = [&](int player, const int* boxes) {
    std::uint64_t key = static_cast<std::uint64_t>(player);
    for (int i = 0; i < nboxes; ++i) key |= static_cast<std::uint64_t>(boxes[i]) << (pk.bits * (i + 1));
    return key;
  };

  const int dirs[4] = {-s.width, s.width, -1, 1};
  std::vector<std::uint64_t> keys;
  std::vector<std::uint32_t> parent;
  std::vector<std::uint8_t> via;
  keys.reserve(1 << 14);
  NodeTable table(1 << 14);

  keys.push_back(pack(s.player, s.boxes.data()));
  parent.push_back(UINT32_MAX);
  via.push_back(0);
  table.insert(keys[0], 0, keys);

  std::array<int, 8> boxes{};
  for (std::size_t head = 0; head < keys.size(); ++head) {
    if (keys.size() >= max_nodes) break;
    const std::uint64_t key = keys[head];
    const int player = static_cast<int>(key & pk.mask);
    for (int i = 0; i < nboxes; ++i) boxes[i] = static_cast<int>((key >> (pk.bits * (i + 1))) & pk.mask);
    ++result.expanded;

    for (int a = 0; a < 4; ++a) {
      const int next = player + dirs[a];
      if (s.walls[next]) continue;
      std::array<int, 8> nb = boxes;
      int hit = -1;
      for (int i = 0; i < nboxes; ++i) {
        if (nb[i] == next) hit = i;
      }
      if (hit >= 0) {
        const int beyond = next + dirs[a];
        if (s.walls[beyond]) continue;
        bool blocked = false;
        for (int i = 0; i < nboxes; ++i) blocked |= nb[i] == beyond;
        if (blocked) continue;
        nb[hit] = beyond;
        std::sort(nb.begin(), nb.begin() + nboxes);
      }
      const std::uint64_t nkey = pack(next, nb.data());
      const auto idx = static_cast<std::uint32_t>(keys.size());
      keys.push_back(nkey);
      if (!table.insert(nkey, idx, keys)) {
        keys.pop_back();
        continue;
      }
      parent.push_back(static_cast<std::uint32_t>(head));
      via.push_back(static_cast<std::uint8_t>(a));

      if (hit >= 0) {
        bool done = true;
        for (int i = 0; i < nboxes && done; ++i) done = s.targets[nb[i]] != 0;
        if (done) {
          std::vector<Action> path;
          for (std::uint32_t cur = idx; parent[cur] != UINT32_MAX; cur = parent[cur])
            path.push_back(kAllActions[via[cur]]);
          std::reverse(path.begin(), path.end());
          result.actions = std::move(path);
          return result;
        }
      }
    }
  }
  return result;
}

}  // namespace verirl::sokoban
