#include "verirl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "verirl/common.hpp"
#include "verirl/kernels.hpp"
#include "verirl/rng.hpp"

namespace verirl::policy {

namespace {

std::vector<std::string> default_tokens() {
  std::vector<std::string> t = {std::string(kPadToken), std::string(kEosToken), "<think>", "</think>",
                                "<answer>", "</answer>", "U", "D", "L", "R"};
  for (char c = '0'; c <= '9'; ++c) t.emplace_back(1, c);
  for (const char* s : {"#", ".", "$", "*", "@", "+", " ", "\n", "-", "=", "/", ",", "[", "]", "(", ")", "A", "B",
                        "C", "<sys>", "<task>", "<cot>", "<io>", "<obs>", "<act>", "<view>"})
    t.emplace_back(s);
  return t;
}

constexpr char kMagic[8] = {'V', 'R', 'L', 'P', 'O', 'L', '0', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  std::uint64_t u(int bytes) {
    need(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += bytes;
    return v;
  }
  std::string str() {
    const auto n = static_cast<std::size_t>(u(4));
    need(n);
    std::string s(b_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw Error(ErrorCode::IoError, "checkpoint truncated");
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

Vocab::Vocab() : Vocab(default_tokens()) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (int i = 0; i < size(); ++i) {
    if (tokens_[i].empty() || !ids_.emplace(tokens_[i], i).second)
      throw Error(ErrorCode::BadArch, "vocabulary tokens must be unique and non-empty");
    longest_ = std::max(longest_, tokens_[i].size());
  }
  auto p = id(kPadToken);
  auto e = id(kEosToken);
  if (!p || !e) throw Error(ErrorCode::BadArch, "vocabulary needs <pad> and <eos>");
  pad_ = *p;
  eos_ = *e;
}

std::optional<int> Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Vocab::encode(std::string_view text, int* skipped) const {
  std::vector<int> out;
  int bad = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    bool matched = false;
    for (std::size_t len = std::min(longest_, text.size() - i); len >= 1; --len) {
      auto it = ids_.find(std::string(text.substr(i, len)));
      if (it != ids_.end() && it->second != pad_ && it->second != eos_) {
        out.push_back(it->second);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      ++bad;
      ++i;
    }
  }
  if (skipped) *skipped = bad;
  return out;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == pad_ || id == eos_) continue;
    out += tokens_.at(id);
  }
  return out;
}

Architecture Architecture::for_vocab(const Vocab& vocab, int embed_dim, std::vector<int> hidden, int window) {
  Architecture a;
  a.vocab_size = vocab.size();
  a.embed_dim = embed_dim;
  a.hidden = std::move(hidden);
  a.window = window;
  a.pad_id = vocab.pad();
  a.eos_id = vocab.eos();
  return a;
}

bool Architecture::valid() const {
  if (vocab_size < 3 || embed_dim < 1 || window < 1 || hidden.empty()) return false;
  if (pad_id < 0 || pad_id >= vocab_size || eos_id < 0 || eos_id >= vocab_size || pad_id == eos_id) return false;
  return std::all_of(hidden.begin(), hidden.end(), [](int h) { return h > 0; });
}

std::size_t Architecture::param_count() const { return Layout(*this).total; }

Layout::Layout(const Architecture& arch) {
  std::size_t off = 0;
  embedding = off;
  off += static_cast<std::size_t>(arch.vocab_size) * arch.embed_dim;
  int in = arch.window * arch.embed_dim;
  for (int h : arch.hidden) {
    Dense d{off, off + static_cast<std::size_t>(h) * in, in, h};
    off = d.bias + h;
    layers.push_back(d);
    in = h;
  }
  policy_head = Dense{off, off + static_cast<std::size_t>(arch.vocab_size) * in, in, arch.vocab_size};
  off = policy_head.bias + arch.vocab_size;
  value_weight = off;
  value_bias = off + in;
  total = value_bias + 1;
}

std::uint64_t PolicyParams::hash() const {
  Fnv1a h;
  const std::string bytes = checkpoint_bytes(*this);
  h.update(bytes);
  return h.digest();
}

bool PolicyParams::finite() const {
  return std::all_of(theta.begin(), theta.end(), [](double v) { return std::isfinite(v); });
}

PolicyParams init(std::uint64_t seed, const Architecture& arch) {
  if (!arch.valid()) throw Error(ErrorCode::BadArch, "invalid architecture descriptor");
  const Layout lay(arch);
  PolicyParams p;
  p.arch = arch;
  p.theta.assign(lay.total, 0.0);
  Rng rng(seed);
  for (std::size_t i = 0; i < static_cast<std::size_t>(arch.vocab_size) * arch.embed_dim; ++i)
    p.theta[lay.embedding + i] = rng.normal();
  for (const auto& d : lay.layers) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d.in));
    for (std::size_t i = 0; i < static_cast<std::size_t>(d.out) * d.in; ++i) p.theta[d.weight + i] = s * rng.normal();
  }
  const double head = 0.01 / std::sqrt(static_cast<double>(lay.policy_head.in));
  for (std::size_t i = 0; i < static_cast<std::size_t>(lay.policy_head.out) * lay.policy_head.in; ++i)
    p.theta[lay.policy_head.weight + i] = head * rng.normal();
  for (int i = 0; i < lay.policy_head.in; ++i) p.theta[lay.value_weight + i] = head * rng.normal();
  return p;
}

std::vector<int> make_window(std::span<const int> context, int window, int pad) {
  std::vector<int> w(window, pad);
  const std::size_t n = std::min<std::size_t>(context.size(), window);
  std::copy(context.end() - static_cast<std::ptrdiff_t>(n), context.end(), w.end() - static_cast<std::ptrdiff_t>(n));
  return w;
}

Distribution logprobs(const PolicyParams& params, std::span<const int> context) {
  const auto w = make_window(context, params.arch.window, params.arch.pad_id);
  kernels::ForwardCache cache;
  kernels::reference::forward(params, w.data(), cache);
  return Distribution{std::move(cache.logp), cache.value};
}

double exact_kl(std::span<const double> logp, std::span<const double> logq) {
  double kl = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    if (std::isinf(logp[i])) continue;
    kl += std::exp(logp[i]) * (logp[i] - logq[i]);
  }
  return kl;
}

double entropy(std::span<const double> logp) {
  double h = 0.0;
  for (double lp : logp) {
    if (!std::isinf(lp)) h -= std::exp(lp) * lp;
  }
  return h;
}

SampledSequence sample(const PolicyParams& params, std::span<const int> prompt, double temperature, int max_len,
                       std::uint64_t seed) {
  const kernels::CompiledPolicy compiled(params);
  return kernels::sample(compiled, prompt, temperature, max_len, seed);
}

std::string checkpoint_bytes(const PolicyParams& params, const CheckpointMeta& meta) {
  std::string out(kMagic, sizeof(kMagic));
  put_str(out, params.version);
  put_u32(out, static_cast<std::uint32_t>(params.arch.vocab_size));
  put_u32(out, static_cast<std::uint32_t>(params.arch.embed_dim));
  put_u32(out, static_cast<std::uint32_t>(params.arch.window));
  put_u32(out, static_cast<std::uint32_t>(params.arch.pad_id));
  put_u32(out, static_cast<std::uint32_t>(params.arch.eos_id));
  put_u32(out, static_cast<std::uint32_t>(params.arch.hidden.size()));
  for (int h : params.arch.hidden) put_u32(out, static_cast<std::uint32_t>(h));
  put_str(out, meta.json);
  put_u64(out, params.theta.size());
  for (double v : params.theta) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
  }
  put_u64(out, fnv1a(out));
  return out;
}

PolicyParams parse_checkpoint(std::string_view bytes, CheckpointMeta* meta) {
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorCode::IoError, "not a policy checkpoint");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.u(8) != fnv1a(body)) throw Error(ErrorCode::IoError, "checkpoint checksum mismatch");
  Reader r(body);
  r.u(4);
  r.u(4);  // magic
  PolicyParams p;
  p.version = r.str();
  p.arch.vocab_size = static_cast<int>(r.u(4));
  p.arch.embed_dim = static_cast<int>(r.u(4));
  p.arch.window = static_cast<int>(r.u(4));
  p.arch.pad_id = static_cast<int>(r.u(4));
  p.arch.eos_id = static_cast<int>(r.u(4));
  const auto layers = r.u(4);
  if (layers > 64) throw Error(ErrorCode::BadArch, "too many hidden layers");
  p.arch.hidden.clear();
  for (std::uint64_t i = 0; i < layers; ++i) p.arch.hidden.push_back(static_cast<int>(r.u(4)));
  std::string json = r.str();
  if (meta) meta->json = std::move(json);
  if (!p.arch.valid()) throw Error(ErrorCode::BadArch, "checkpoint architecture invalid");
  const auto n = r.u(8);
  if (n != p.arch.param_count()) throw Error(ErrorCode::BadArch, "parameter count does not match architecture");
  p.theta.resize(n);
  for (auto& v : p.theta) {
    const std::uint64_t bits = r.u(8);
    std::memcpy(&v, &bits, sizeof(v));
  }
  if (!p.finite()) throw Error(ErrorCode::BadArch, "checkpoint has non-finite parameters");
  return p;
}

void save_checkpoint(const std::string& path, const PolicyParams& params, const CheckpointMeta& meta) {
  write_file(path, checkpoint_bytes(params, meta));
}

PolicyParams load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  return parse_checkpoint(read_file(path), meta);
}

}  // namespace verirl::policy
