#include "verirl/common.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace verirl {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Unparseable: return "UNPARSEABLE";
    case ErrorCode::IoError: return "IO_ERROR";
    case ErrorCode::NTooLarge: return "N_TOO_LARGE";
    case ErrorCode::GenerationExhausted: return "GENERATION_EXHAUSTED";
    case ErrorCode::GeometryMismatch: return "GEOMETRY_MISMATCH";
    case ErrorCode::BadArch: return "BAD_ARCH";
    case ErrorCode::NonfiniteLoss: return "NONFINITE_LOSS";
    case ErrorCode::LengthMismatch: return "LENGTH_MISMATCH";
    case ErrorCode::PolicyFailure: return "POLICY_FAILURE";
    case ErrorCode::NoActionParsed: return "NO_ACTION_PARSED";
    case ErrorCode::ScorerFailure: return "SCORER_FAILURE";
    case ErrorCode::Timeout: return "TIMEOUT";
    case ErrorCode::ProtocolError: return "PROTOCOL_ERROR";
    case ErrorCode::EndpointDown: return "ENDPOINT_DOWN";
    case ErrorCode::SchemaMismatch: return "SCHEMA_MISMATCH";
    case ErrorCode::InvalidConfig: return "INVALID_CONFIG";
    case ErrorCode::InvalidPlan: return "INVALID_PLAN";
  }
  return "UNKNOWN";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

}  // namespace verirl
