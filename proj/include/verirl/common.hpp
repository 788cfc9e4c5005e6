#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace verirl {

enum class ErrorCode {
  Unparseable,
  IoError,
  NTooLarge,
  GenerationExhausted,
  GeometryMismatch,
  BadArch,
  NonfiniteLoss,
  LengthMismatch,
  PolicyFailure,
  NoActionParsed,
  ScorerFailure,
  Timeout,
  ProtocolError,
  EndpointDown,
  SchemaMismatch,
  InvalidConfig,
  InvalidPlan,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// 64-bit FNV-1a. Used for checkpoint integrity and content addressing.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return h.digest();
}

std::string hex64(std::uint64_t v);

// SplitMix64 finalizer, used to derive independent per-item seeds from a root.
constexpr std::uint64_t mix_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace verirl
