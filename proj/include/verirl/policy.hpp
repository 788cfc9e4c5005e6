#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace verirl::policy {

// Token inventory of the built-in policy. Multi-character tags are single
// tokens; encode() matches greedily and skips characters it does not know.
class Vocab {
 public:
  Vocab();  // default inventory
  explicit Vocab(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int pad() const { return pad_; }
  int eos() const { return eos_; }
  std::optional<int> id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(id); }

  std::vector<int> encode(std::string_view text, int* skipped = nullptr) const;
  // PAD and EOS decode to nothing.
  std::string decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  std::size_t longest_ = 1;
  int pad_ = -1;
  int eos_ = -1;
};

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kEosToken = "<eos>";

struct Architecture {
  int vocab_size = 0;
  int embed_dim = 8;
  std::vector<int> hidden = {64};
  int window = 32;
  int pad_id = 0;
  int eos_id = 1;

  // Descriptor for the given vocabulary with the remaining fields defaulted.
  static Architecture for_vocab(const Vocab& vocab, int embed_dim, std::vector<int> hidden, int window);

  std::size_t param_count() const;
  bool valid() const;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Offsets of each parameter block inside the flat vector.
struct Layout {
  struct Dense {
    std::size_t weight;  // out x in, row-major
    std::size_t bias;
    int in;
    int out;
  };
  std::size_t embedding = 0;  // vocab x embed
  std::vector<Dense> layers;
  Dense policy_head;
  std::size_t value_weight = 0;
  std::size_t value_bias = 0;
  std::size_t total = 0;

  explicit Layout(const Architecture& arch);
  // Value-head parameters occupy [value_begin(), total).
  std::size_t value_begin() const { return value_weight; }
};

struct PolicyParams {
  Architecture arch;
  std::vector<double> theta;
  std::string version = "verirl-mlp-1";

  std::uint64_t hash() const;
  bool finite() const;
};

// Deterministic init; the policy head starts tiny so the initial token
// distribution is close to uniform. Throws BAD_ARCH.
PolicyParams init(std::uint64_t seed, const Architecture& arch);

struct Distribution {
  std::vector<double> logp;  // log-probabilities, PAD entry is -inf
  double value = 0.0;
};

// Left-pads or truncates to the last `window` tokens.
std::vector<int> make_window(std::span<const int> context, int window, int pad);

Distribution logprobs(const PolicyParams& params, std::span<const int> context);

double exact_kl(std::span<const double> logp, std::span<const double> logq);
double entropy(std::span<const double> logp);

struct SampledSequence {
  std::vector<int> tokens;     // includes the terminating EOS when emitted
  std::vector<double> logprobs;  // log pi(token | context) at temperature 1
  std::vector<double> values;
  bool hit_eos = false;
};

// Ancestral sampling; temperature 0 means greedy argmax.
SampledSequence sample(const PolicyParams& params, std::span<const int> prompt, double temperature,
                       int max_len, std::uint64_t seed);

// Immutable reference copy of a policy.
class FrozenPolicy {
 public:
  explicit FrozenPolicy(const PolicyParams& params)
      : params_(std::make_shared<const PolicyParams>(params)) {}
  const PolicyParams& params() const { return *params_; }
  std::uint64_t hash() const { return params_->hash(); }

 private:
  std::shared_ptr<const PolicyParams> params_;
};

inline FrozenPolicy snapshot(const PolicyParams& params) { return FrozenPolicy(params); }

struct CheckpointMeta {
  std::string json = "{}";  // free-form metadata (stage, episode, config hash)
};

void save_checkpoint(const std::string& path, const PolicyParams& params, const CheckpointMeta& meta = {});
PolicyParams load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);
std::string checkpoint_bytes(const PolicyParams& params, const CheckpointMeta& meta = {});
PolicyParams parse_checkpoint(std::string_view bytes, CheckpointMeta* meta = nullptr);

}  // namespace verirl::policy
