#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "verirl/verifier.hpp"

namespace verirl::corpus {

struct VerifiableSample {
  std::string id;
  std::string prompt;
  std::optional<std::string> image_ref;  // opaque, never opened
  std::string answer;
  verifier::AnswerKind answer_kind = verifier::AnswerKind::Numeric;
  std::string domain_tag;
};

nlohmann::json to_json(const VerifiableSample& s);

struct CorpusManifest {
  std::string operation;
  std::size_t source_count = 0;
  std::size_t kept_count = 0;
  std::size_t sampled_count = 0;
  std::size_t malformed_count = 0;
  std::size_t defect_count = 0;  // e.g. duplicate prompts with conflicting answers
  std::uint64_t seed = 0;
  std::vector<std::string> filter_rules;

  bool consistent() const { return sampled_count <= kept_count && kept_count <= source_count; }
  nlohmann::json to_json() const;
};

struct CorpusResult {
  std::vector<VerifiableSample> samples;
  CorpusManifest manifest;
};

// Keeps records whose answer parses as Numeric, Option or NumericList.
// Records that are not objects with string prompt/answer are counted as
// malformed; a repeated id is malformed too.
CorpusResult filter_verifiable(const std::vector<nlohmann::json>& records);

// Lowercased, whitespace-collapsed, trimmed prompt.
std::string normalize_prompt(std::string_view prompt);

// Drops later samples whose normalized prompt was already seen.
CorpusResult dedupe(const std::vector<VerifiableSample>& samples);

// Uniform sample without replacement after a canonical sort by id. Throws
// N_TOO_LARGE.
CorpusResult sample_subset(const std::vector<VerifiableSample>& samples, std::size_t n, std::uint64_t seed);

CorpusResult split_by_domain(const std::vector<VerifiableSample>& samples,
                             const std::function<bool(const VerifiableSample&)>& keep, std::string rule);
CorpusResult split_by_tag(const std::vector<VerifiableSample>& samples, const std::string& tag);

// Line-delimited JSON. Reading raw records throws IO_ERROR on an unreadable
// file; undecodable lines come back as null values.
std::vector<nlohmann::json> read_records(const std::string& path);
std::vector<VerifiableSample> read_samples(const std::string& path);
void write_samples(const std::string& path, const std::vector<VerifiableSample>& samples);
std::string manifest_path(const std::string& samples_path);
void write_manifest(const std::string& samples_path, const CorpusManifest& manifest);

// Raw records with exactly `parseable` verifiable answers out of `total`.
struct SyntheticCorpus {
  std::vector<nlohmann::json> records;
  std::size_t parseable = 0;
  std::size_t geo = 0;
};
SyntheticCorpus synthetic_records(std::size_t total, std::size_t parseable, std::size_t geo, std::uint64_t seed);

// Small arithmetic word-free problems (sums, differences, products of small
// integers) with numeric answers, for the text reasoning stage.
std::vector<VerifiableSample> arithmetic_corpus(std::size_t n, std::uint64_t seed, int max_operand = 9);

}  // namespace verirl::corpus
