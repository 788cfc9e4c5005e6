#include "verirl/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "verirl/common.hpp"

namespace verirl::verifier {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";
constexpr int kMaxDigits = 18;

bool is_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return s;
}

std::size_t count_of(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size()))
    ++n;
  return n;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  if (from.empty()) return;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string collapse_backslashes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '\\' && !out.empty() && out.back() == '\\') continue;
    out.push_back(c);
  }
  return out;
}

// Index of the '}' closing the '{' at `open`, or npos.
std::size_t match_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return i;
  }
  return std::string_view::npos;
}

std::string_view strip_dollars(std::string_view s) {
  s = trim(s);
  if (s.size() >= 4 && s.substr(0, 2) == "$$" && s.substr(s.size() - 2) == "$$")
    return trim(s.substr(2, s.size() - 4));
  if (s.size() >= 2 && s.front() == '$' && s.back() == '$') return trim(s.substr(1, s.size() - 2));
  return s;
}

// Strips `\boxed{...}` (any number of leading backslashes) when it spans the whole text.
std::string_view strip_boxed(std::string_view s) {
  s = trim(s);
  std::size_t i = 0;
  while (i < s.size() && s[i] == '\\') ++i;
  if (i == 0 || s.substr(i, 6) != "boxed{") return s;
  const std::size_t open = i + 5;
  const std::size_t close = match_brace(s, open);
  if (close != s.size() - 1) return s;
  return trim(s.substr(open + 1, close - open - 1));
}

std::optional<std::string_view> last_boxed(std::string_view s) {
  std::size_t pos = s.rfind("boxed{");
  while (pos != std::string_view::npos) {
    if (pos > 0 && s[pos - 1] == '\\') {
      const std::size_t open = pos + 5;
      const std::size_t close = match_brace(s, open);
      if (close != std::string_view::npos) return s.substr(open + 1, close - open - 1);
    }
    if (pos == 0) break;
    pos = s.rfind("boxed{", pos - 1);
  }
  return std::nullopt;
}

std::int64_t pow10_i64(int k) {
  std::int64_t p = 1;
  for (int i = 0; i < k; ++i) p *= 10;
  return p;
}

Number make_exact(std::int64_t num, std::int64_t den) {
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  Number n;
  n.exact = true;
  n.num = g ? num / g : num;
  n.den = g ? den / g : den;
  return n;
}

std::string strip_leading_zeros(std::string_view digits) {
  std::size_t i = 0;
  while (i + 1 < digits.size() && digits[i] == '0') ++i;
  return std::string(digits.substr(i));
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), is_digit);
}

// Unsigned integer, optionally with 3-digit comma grouping.
std::optional<std::string> integer_digits(std::string_view s, bool allow_grouping) {
  if (all_digits(s)) return std::string(s);
  if (!allow_grouping) return std::nullopt;
  const std::size_t first = s.find(',');
  if (first == std::string_view::npos || first == 0 || first > 3) return std::nullopt;
  std::string out(s.substr(0, first));
  if (!all_digits(out)) return std::nullopt;
  std::size_t pos = first;
  while (pos < s.size()) {
    if (s[pos] != ',' || pos + 4 > s.size()) return std::nullopt;
    const std::string_view group = s.substr(pos + 1, 3);
    if (!all_digits(group)) return std::nullopt;
    out += group;
    pos += 4;
  }
  return out;
}

std::optional<Number> parse_unsigned_number(std::string_view s, bool negative, bool allow_grouping) {
  const std::size_t dot = s.find('.');
  if (dot == std::string_view::npos) {
    auto digits = integer_digits(s, allow_grouping);
    if (!digits) return std::nullopt;
    std::string d = strip_leading_zeros(*digits);
    if (static_cast<int>(d.size()) > kMaxDigits) {
      Number n;
      n.exact = true;
      n.big = (negative ? "-" : "") + d;
      return n;
    }
    const std::int64_t v = std::stoll(d);
    return make_exact(negative ? -v : v, 1);
  }
  std::string_view ip = s.substr(0, dot);
  std::string_view fp = s.substr(dot + 1);
  if (fp.empty() || !all_digits(fp)) return std::nullopt;
  std::string int_digits = "0";
  if (!ip.empty()) {
    auto digits = integer_digits(ip, allow_grouping);
    if (!digits) return std::nullopt;
    int_digits = strip_leading_zeros(*digits);
  }
  Number n;
  n.exact = false;
  if (static_cast<int>(int_digits.size() + fp.size()) > kMaxDigits) {
    n.big = (negative ? "-" : "") + int_digits + "." + std::string(fp);
    return n;
  }
  const std::int64_t mantissa = std::stoll(int_digits + std::string(fp));
  n.scale = static_cast<int>(fp.size());
  n.num = negative ? -mantissa : mantissa;
  n.den = pow10_i64(n.scale);
  return n;
}

std::optional<std::int64_t> small_signed_int(std::string_view s) {
  bool neg = false;
  if (!s.empty() && s.front() == '-') {
    neg = true;
    s.remove_prefix(1);
  }
  if (!all_digits(s)) return std::nullopt;
  std::string d = strip_leading_zeros(s);
  if (static_cast<int>(d.size()) > kMaxDigits) return std::nullopt;
  const std::int64_t v = std::stoll(d);
  return neg ? -v : v;
}

std::optional<Number> make_fraction(std::string_view a, std::string_view b, bool negative) {
  auto num = small_signed_int(a);
  auto den = small_signed_int(b);
  if (!num || !den || *den == 0) return std::nullopt;
  return make_exact(negative ? -*num : *num, *den);
}

// Parses a complete numeric literal from normalized (whitespace-free) text.
std::optional<Number> parse_number(std::string_view s, bool allow_grouping) {
  bool negative = false;
  if (!s.empty() && s.front() == '-') {
    negative = true;
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  if (s.substr(0, 5) == "\\frac") {
    std::string_view rest = s.substr(5);
    if (!rest.empty() && rest.front() == '{') {
      const std::size_t c1 = match_brace(rest, 0);
      if (c1 == std::string_view::npos || c1 + 1 >= rest.size() || rest[c1 + 1] != '{')
        return std::nullopt;
      const std::size_t c2 = match_brace(rest, c1 + 1);
      if (c2 != rest.size() - 1) return std::nullopt;
      return make_fraction(rest.substr(1, c1 - 1), rest.substr(c1 + 2, c2 - c1 - 2), negative);
    }
    if (rest.size() == 2 && is_digit(rest[0]) && is_digit(rest[1]))
      return make_fraction(rest.substr(0, 1), rest.substr(1, 1), negative);
    return std::nullopt;
  }
  const std::size_t slash = s.find('/');
  if (slash != std::string_view::npos)
    return make_fraction(s.substr(0, slash), s.substr(slash + 1), negative);
  return parse_unsigned_number(s, negative, allow_grouping);
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i < s.size() && s[i] == '{') ++depth;
    if (i < s.size() && s[i] == '}') --depth;
    if (i == s.size() || (s[i] == ',' && depth == 0)) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

std::optional<std::vector<Number>> parse_number_list(std::string_view inner) {
  std::vector<Number> out;
  for (std::string_view part : split_commas(inner)) {
    auto n = parse_number(part, false);
    if (!n) return std::nullopt;
    out.push_back(*n);
  }
  if (out.empty()) return std::nullopt;
  return out;
}

std::string normalize_text(std::string_view raw) {
  std::string s = collapse_backslashes(raw);
  s.erase(std::remove(s.begin(), s.end(), '$'), s.end());
  for (;;) {
    std::string_view inner = strip_boxed(s);
    if (inner.size() == trim(s).size()) break;
    s = std::string(inner);
  }
  replace_all(s, "\\left", "");
  replace_all(s, "\\right", "");
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  replace_all(s, "\\displaystyle", "");
  replace_all(s, "^{\\circ}", "");
  replace_all(s, "^\\circ", "");
  replace_all(s, "\xc2\xb0", "");
  replace_all(s, "\\!", "");
  replace_all(s, "\\,", "");
  replace_all(s, "\\;", "");
  replace_all(s, "\\:", "");
  replace_all(s, "\\ ", "");
  replace_all(s, "\\%", "");
  replace_all(s, "\\{", "{");
  replace_all(s, "\\}", "}");
  replace_all(s, "%", "");
  replace_all(s, "~", "");
  s.erase(std::remove_if(s.begin(), s.end(), is_ws), s.end());
  while (!s.empty() && s.back() == '.') s.pop_back();
  if (!s.empty() && s.front() == '+') s.erase(s.begin());
  return s;
}

std::optional<char> option_letter(std::string_view s, char max_option) {
  if (s.size() == 3 && s.front() == '(' && s.back() == ')') s = s.substr(1, 1);
  if (s.size() == 2 && s.back() == ')') s = s.substr(0, 1);
  if (s.size() != 1 || !std::isalpha(static_cast<unsigned char>(s[0]))) return std::nullopt;
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  if (up < 'A' || up > max_option) return std::nullopt;
  return up;
}

std::optional<ParsedAnswer> classify(const std::string& s, bool prefer_list, const ParseOptions& opts) {
  if (s.empty()) return std::nullopt;
  ParsedAnswer p;
  if (auto letter = option_letter(s, opts.max_option)) {
    p.kind = AnswerKind::Option;
    p.option = *letter;
    return p;
  }
  const char open = s.front();
  const char close = s.back();
  const bool bracketed = (open == '[' && close == ']') || (open == '(' && close == ')') ||
                         (open == '{' && close == '}');
  if (bracketed && s.size() >= 2) {
    std::string_view inner(s.data() + 1, s.size() - 2);
    const bool has_comma = !split_commas(inner).empty() && split_commas(inner).size() > 1;
    if (open == '(' && !has_comma) {
      if (auto n = parse_number(inner, true)) {
        p.kind = AnswerKind::Numeric;
        p.numbers = {*n};
        return p;
      }
      return std::nullopt;
    }
    if (auto list = parse_number_list(inner)) {
      p.kind = AnswerKind::NumericList;
      p.numbers = std::move(*list);
      p.ordered = open != '{';
      return p;
    }
    return std::nullopt;
  }
  if (!prefer_list) {
    if (auto n = parse_number(s, true)) {
      p.kind = AnswerKind::Numeric;
      p.numbers = {*n};
      return p;
    }
  }
  if (s.find(',') != std::string::npos) {
    if (auto list = parse_number_list(s)) {
      p.kind = AnswerKind::NumericList;
      p.numbers = std::move(*list);
      return p;
    }
  }
  if (auto n = parse_number(s, !prefer_list)) {
    p.kind = AnswerKind::Numeric;
    p.numbers = {*n};
    return p;
  }
  return std::nullopt;
}

// Finds every numeric literal embedded in free text, in order of appearance.
std::vector<Number> scan_numbers(std::string_view text) {
  std::vector<Number> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.substr(i, 6) == "\\frac{") {
      const std::size_t c1 = match_brace(text, i + 5);
      if (c1 != std::string_view::npos && c1 + 1 < text.size() && text[c1 + 1] == '{') {
        const std::size_t c2 = match_brace(text, c1 + 1);
        if (c2 != std::string_view::npos) {
          std::string lit = normalize_text(text.substr(i, c2 - i + 1));
          const bool neg = i > 0 && text[i - 1] == '-';
          if (auto n = parse_number((neg ? "-" : "") + lit, false)) out.push_back(*n);
          i = c2 + 1;
          continue;
        }
      }
    }
    const bool starts_number = is_digit(text[i]) || (text[i] == '.' && i + 1 < text.size() && is_digit(text[i + 1]));
    if (!starts_number || (i > 0 && (std::isalpha(static_cast<unsigned char>(text[i - 1])) || is_digit(text[i - 1])))) {
      ++i;
      continue;
    }
    const bool negative = i > 0 && text[i - 1] == '-' && (i < 2 || !is_alnum(text[i - 2]));
    std::size_t j = i;
    while (j < text.size() && is_digit(text[j])) ++j;
    // 3-digit comma groups
    while (j + 3 < text.size() + 0 && text[j] == ',' && is_digit(text[j + 1]) && is_digit(text[j + 2]) &&
           is_digit(text[j + 3]) && (j + 4 >= text.size() || !is_digit(text[j + 4])))
      j += 4;
    if (j + 1 < text.size() && text[j] == '.' && is_digit(text[j + 1])) {
      ++j;
      while (j < text.size() && is_digit(text[j])) ++j;
    }
    if (j + 1 < text.size() && text[j] == '/' && is_digit(text[j + 1])) {
      ++j;
      while (j < text.size() && is_digit(text[j])) ++j;
    }
    std::string lit(text.substr(i, j - i));
    if (negative) lit.insert(lit.begin(), '-');
    if (auto n = parse_number(lit, true)) out.push_back(*n);
    i = j;
  }
  return out;
}

std::optional<char> scan_option(std::string_view text, char max_option) {
  std::optional<char> found;
  for (std::size_t i = 0; i + 2 < text.size(); ++i) {
    if (text[i] == '(' && text[i + 2] == ')') {
      const char c = text[i + 1];
      if (c >= 'A' && c <= max_option) found = c;
    }
  }
  if (found) return found;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c < 'A' || c > max_option) continue;
    const bool left_ok = i == 0 || !is_alnum(text[i - 1]);
    const bool right_ok = i + 1 == text.size() || !is_alnum(text[i + 1]);
    if (left_ok && right_ok) found = c;
  }
  return found;
}

std::optional<ParsedAnswer> lenient_scan(std::string_view raw, AnswerKind expected, const ParseOptions& opts) {
  const std::string text = collapse_backslashes(raw);
  ParsedAnswer p;
  p.kind = expected;
  switch (expected) {
    case AnswerKind::Option: {
      auto letter = scan_option(text, opts.max_option);
      if (!letter) return std::nullopt;
      p.option = *letter;
      return p;
    }
    case AnswerKind::Numeric: {
      auto nums = scan_numbers(text);
      if (nums.empty()) return std::nullopt;
      p.numbers = {nums.back()};
      return p;
    }
    case AnswerKind::NumericList: {
      auto nums = scan_numbers(text);
      if (nums.empty()) return std::nullopt;
      p.numbers = std::move(nums);
      return p;
    }
    case AnswerKind::LatexExpr: return std::nullopt;
  }
  return std::nullopt;
}

std::string format_number(const Number& n) {
  if (!n.big.empty()) return n.big;
  if (n.exact) {
    if (n.den == 1) return std::to_string(n.num);
    return std::to_string(n.num) + "/" + std::to_string(n.den);
  }
  const bool neg = n.num < 0;
  std::string digits = std::to_string(neg ? -n.num : n.num);
  if (static_cast<int>(digits.size()) <= n.scale)
    digits.insert(0, static_cast<std::size_t>(n.scale + 1) - digits.size(), '0');
  digits.insert(digits.size() - n.scale, ".");
  return (neg ? "-" : "") + digits;
}

bool numbers_equivalent(const Number& a, const Number& b, double rel_tol, double abs_tol) {
  if (a.exact && b.exact) {
    if (a.big.empty() && b.big.empty()) return a.num == b.num && a.den == b.den;
    return a.big == b.big && a.num == b.num && a.den == b.den;
  }
  const double x = a.value();
  const double y = b.value();
  if (!std::isfinite(x) || !std::isfinite(y)) return false;
  const double diff = std::fabs(x - y);
  return diff <= std::max(rel_tol * std::max(std::fabs(x), std::fabs(y)), abs_tol);
}

}  // namespace

double Number::value() const {
  if (!big.empty()) return std::strtod(big.c_str(), nullptr);
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

std::string_view kind_name(AnswerKind k) {
  switch (k) {
    case AnswerKind::Numeric: return "numeric";
    case AnswerKind::Option: return "option";
    case AnswerKind::LatexExpr: return "latex";
    case AnswerKind::NumericList: return "list";
  }
  return "?";
}

std::optional<AnswerKind> kind_from_name(std::string_view name) {
  for (AnswerKind k : {AnswerKind::Numeric, AnswerKind::Option, AnswerKind::LatexExpr, AnswerKind::NumericList})
    if (kind_name(k) == name) return k;
  return std::nullopt;
}

std::string ParsedAnswer::canonical() const {
  switch (kind) {
    case AnswerKind::Numeric: return numbers.empty() ? "" : format_number(numbers[0]);
    case AnswerKind::Option: return std::string(1, option);
    case AnswerKind::LatexExpr: return latex;
    case AnswerKind::NumericList: {
      std::string out(1, ordered ? '[' : '{');
      for (std::size_t i = 0; i < numbers.size(); ++i) {
        if (i) out += ", ";
        out += format_number(numbers[i]);
      }
      out.push_back(ordered ? ']' : '}');
      return out;
    }
  }
  return "";
}

bool ParsedAnswer::same_canonical(const ParsedAnswer& o) const {
  if (kind != o.kind) return false;
  switch (kind) {
    case AnswerKind::Numeric: return numbers == o.numbers;
    case AnswerKind::Option: return option == o.option;
    case AnswerKind::LatexExpr: return latex == o.latex;
    case AnswerKind::NumericList: return numbers == o.numbers && ordered == o.ordered;
  }
  return false;
}

FormatCheck check_format(std::string_view response) {
  FormatCheck out;
  const std::string_view body = trim(response);
  if (!body.starts_with(kThinkOpen) || !body.ends_with(kAnswerClose)) return out;
  for (auto tag : {kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose}) {
    if (count_of(response, tag) != 1) return out;
  }
  const std::size_t to = response.find(kThinkOpen);
  const std::size_t tc = response.find(kThinkClose);
  const std::size_t ao = response.find(kAnswerOpen);
  const std::size_t ac = response.find(kAnswerClose);
  if (!(to < tc && tc < ao && ao < ac)) return out;
  for (std::size_t i = tc + kThinkClose.size(); i < ao; ++i) {
    if (!is_ws(response[i])) return out;
  }
  out.score = 1;
  out.think_span = TextSpan{to + kThinkOpen.size(), tc};
  out.answer_span = TextSpan{ao + kAnswerOpen.size(), ac};
  return out;
}

std::string extract_answer(std::string_view response) {
  std::string_view candidate;
  const std::size_t ao = response.rfind(kAnswerOpen);
  if (ao != std::string_view::npos) {
    const std::size_t start = ao + kAnswerOpen.size();
    const std::size_t ac = response.find(kAnswerClose, start);
    candidate = response.substr(start, ac == std::string_view::npos ? std::string_view::npos : ac - start);
  } else if (auto boxed = last_boxed(response)) {
    candidate = *boxed;
  } else {
    const std::string lower = lowercase(response);
    std::size_t best = std::string::npos;
    std::size_t best_len = 0;
    for (std::string_view marker : {std::string_view("answer is"), std::string_view("answer:")}) {
      const std::size_t pos = lower.rfind(marker);
      if (pos != std::string::npos && (best == std::string::npos || pos > best)) {
        best = pos;
        best_len = marker.size();
      }
    }
    if (best != std::string::npos) {
      candidate = trim(response.substr(best + best_len));
      while (!candidate.empty() && (candidate.front() == ':' || is_ws(candidate.front())))
        candidate.remove_prefix(1);
    } else {
      candidate = response;
    }
  }
  std::string_view out = strip_dollars(candidate);
  out = strip_boxed(out);
  return std::string(trim(out));
}

std::optional<ParsedAnswer> try_parse_answer(std::string_view raw, std::optional<AnswerKind> expected,
                                             const ParseOptions& opts) {
  const std::string norm = normalize_text(raw);
  const bool prefer_list = expected == AnswerKind::NumericList;
  std::optional<ParsedAnswer> strict = classify(norm, prefer_list, opts);
  auto finish = [&](std::optional<ParsedAnswer> p) {
    if (p) p->raw = std::string(raw);
    return p;
  };
  if (!expected || (strict && strict->kind == *expected)) return finish(strict);
  if (*expected == AnswerKind::NumericList && strict && strict->kind == AnswerKind::Numeric) {
    strict->kind = AnswerKind::NumericList;
    strict->ordered = true;
    return finish(strict);
  }
  if (*expected == AnswerKind::LatexExpr) {
    if (norm.empty()) return std::nullopt;
    ParsedAnswer p;
    p.kind = AnswerKind::LatexExpr;
    p.latex = norm;
    return finish(p);
  }
  if (auto scanned = lenient_scan(raw, *expected, opts)) return finish(scanned);
  return finish(strict);
}

ParsedAnswer parse_answer(std::string_view raw, std::optional<AnswerKind> expected, const ParseOptions& opts) {
  auto p = try_parse_answer(raw, expected, opts);
  if (!p) throw Error(ErrorCode::Unparseable, "no supported answer kind in '" + std::string(raw) + "'");
  return *p;
}

int check_equivalence(const ParsedAnswer& a, const ParsedAnswer& b, double rel_tol, double abs_tol) {
  if (a.kind != b.kind) return 0;
  switch (a.kind) {
    case AnswerKind::Option: return a.option == b.option ? 1 : 0;
    case AnswerKind::LatexExpr: return a.latex == b.latex ? 1 : 0;
    case AnswerKind::Numeric:
      return a.numbers.size() == 1 && b.numbers.size() == 1 &&
                     numbers_equivalent(a.numbers[0], b.numbers[0], rel_tol, abs_tol)
                 ? 1
                 : 0;
    case AnswerKind::NumericList: {
      if (a.numbers.size() != b.numbers.size()) return 0;
      std::vector<Number> x = a.numbers;
      std::vector<Number> y = b.numbers;
      if (!a.ordered || !b.ordered) {
        auto by_value = [](const Number& l, const Number& r) { return l.value() < r.value(); };
        std::sort(x.begin(), x.end(), by_value);
        std::sort(y.begin(), y.end(), by_value);
      }
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!numbers_equivalent(x[i], y[i], rel_tol, abs_tol)) return 0;
      }
      return 1;
    }
  }
  return 0;
}

RewardBreakdown score_parsed(std::string_view response, const std::optional<ParsedAnswer>& truth, double alpha,
                             std::optional<AnswerKind> expected_kind, const ScoreOptions& opts) {
  RewardBreakdown r;
  r.alpha = alpha;
  r.format_reward = check_format(response).score;
  if (truth) {
    const AnswerKind kind = expected_kind.value_or(truth->kind);
    const auto candidate = try_parse_answer(extract_answer(response), kind, opts.parse);
    if (candidate) r.accuracy_reward = check_equivalence(*candidate, *truth, opts.rel_tol, opts.abs_tol);
  }
  r.combined = alpha * r.format_reward + r.accuracy_reward;
  return r;
}

RewardBreakdown score(std::string_view response, std::string_view ground_truth, double alpha,
                      std::optional<AnswerKind> expected_kind, const ScoreOptions& opts) {
  return score_parsed(response, try_parse_answer(ground_truth, expected_kind, opts.parse), alpha,
                      expected_kind, opts);
}

}  // namespace verirl::verifier
