#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace verirl::verifier {

enum class AnswerKind { Numeric, Option, LatexExpr, NumericList };

std::string_view kind_name(AnswerKind k);
std::optional<AnswerKind> kind_from_name(std::string_view name);

// A numeric answer. Integer and fraction syntax yields an exact reduced
// rational; decimal syntax keeps its mantissa and scale so it can be rendered
// back verbatim. Values too wide for int64 keep their digit string in `big`.
struct Number {
  bool exact = true;
  std::int64_t num = 0;
  std::int64_t den = 1;
  int scale = -1;   // decimal places for decimal literals, -1 for exact values
  std::string big;  // non-empty for out-of-range literals

  double value() const;
  friend bool operator==(const Number&, const Number&) = default;
};

struct ParsedAnswer {
  AnswerKind kind = AnswerKind::Numeric;
  std::vector<Number> numbers;  // one entry for Numeric, >= 1 for NumericList
  bool ordered = true;          // NumericList only
  char option = 0;              // Option only, uppercase
  std::string latex;            // LatexExpr only, normalized
  std::string raw;

  // Canonical text; parse_answer(canonical()) reproduces this value.
  std::string canonical() const;

  // Compares canonical content; `raw` is ignored.
  bool same_canonical(const ParsedAnswer& other) const;
};

struct ParseOptions {
  char max_option = 'D';
};

struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct FormatCheck {
  int score = 0;
  std::optional<TextSpan> think_span;   // content between <think> and </think>
  std::optional<TextSpan> answer_span;  // content between <answer> and </answer>
};

struct RewardBreakdown {
  double format_reward = 0.0;
  double accuracy_reward = 0.0;
  double alpha = 0.0;
  double combined = 0.0;
};

inline constexpr double kDefaultAlpha = 0.5;
inline constexpr double kDefaultRelTol = 1e-6;
inline constexpr double kDefaultAbsTol = 1e-9;

FormatCheck check_format(std::string_view response);

std::string extract_answer(std::string_view response);

std::optional<ParsedAnswer> try_parse_answer(std::string_view raw,
                                             std::optional<AnswerKind> expected = std::nullopt,
                                             const ParseOptions& opts = {});

// Throws Error(UNPARSEABLE) when the text admits no supported kind.
ParsedAnswer parse_answer(std::string_view raw, std::optional<AnswerKind> expected = std::nullopt,
                          const ParseOptions& opts = {});

int check_equivalence(const ParsedAnswer& candidate, const ParsedAnswer& truth,
                      double rel_tol = kDefaultRelTol, double abs_tol = kDefaultAbsTol);

struct ScoreOptions {
  double rel_tol = kDefaultRelTol;
  double abs_tol = kDefaultAbsTol;
  ParseOptions parse;
};

RewardBreakdown score(std::string_view response, std::string_view ground_truth,
                      double alpha = kDefaultAlpha,
                      std::optional<AnswerKind> expected_kind = std::nullopt,
                      const ScoreOptions& opts = {});

// Same as score() with an already-parsed ground truth (nullopt: defective truth).
RewardBreakdown score_parsed(std::string_view response, const std::optional<ParsedAnswer>& truth,
                             double alpha = kDefaultAlpha,
                             std::optional<AnswerKind> expected_kind = std::nullopt,
                             const ScoreOptions& opts = {});

}  // namespace verirl::verifier
