#pragma once

// Hand-built response-format cases plus the independent regex oracle used to
// judge them. Shared by the unit tests and the acceptance suite.

#include <regex>
#include <string>
#include <vector>

namespace verirl::testing {

inline bool format_regex_oracle(const std::string& s) {
  static const std::regex re(
      R"(^\s*<think>(?:(?!</?think>|</?answer>)[\s\S])*</think>\s*<answer>(?:(?!</?think>|</?answer>)[\s\S])*</answer>\s*$)");
  return std::regex_match(s, re);
}

inline std::vector<std::string> format_cases() {
  const std::vector<std::string> thinks = {"", "a", " Since $1+1=2$, so the answer is $2$. ", "x\ny",
                                           "<b>bold</b>"};
  const std::vector<std::string> answers = {"", " $2$ ", "\\boxed{4}", "A", "\n42\n"};
  const std::vector<std::string> pads = {"", " ", "\n", "\t \n", "\r\n"};
  std::vector<std::string> out;
  // valid + whitespace variants
  for (const auto& t : thinks)
    for (const auto& a : answers) out.push_back("<think>" + t + "</think><answer>" + a + "</answer>");
  for (const auto& p : pads) {
    out.push_back(p + "<think>t</think><answer>1</answer>" + p);
    out.push_back("<think>t</think>" + p + "<answer>1</answer>");
    out.push_back(p + "<think>t</think>" + p + "<answer>1</answer>");
  }
  // missing tags
  const std::vector<std::string> missing = {
      "",
      "<think>a</think>",
      "<answer>1</answer>",
      "<think>a<answer>1</answer>",
      "<think>a</think><answer>1",
      "a</think><answer>1</answer>",
      "<think>a</think>1</answer>",
      "The answer is 4",
      "<think></think>",
      "<answer></answer>",
  };
  out.insert(out.end(), missing.begin(), missing.end());
  // duplicated tags
  for (const auto& a : answers) {
    out.push_back("<think>a</think><think>b</think><answer>" + a + "</answer>");
    out.push_back("<think>a</think><answer>" + a + "</answer><answer>2</answer>");
    out.push_back("<think><think>a</think><answer>" + a + "</answer>");
    out.push_back("<think>a</think></think><answer>" + a + "</answer>");
    out.push_back("<think>a</think><answer><answer>" + a + "</answer>");
    out.push_back("<think>a</think><answer>" + a + "</answer></answer>");
    out.push_back("<think>a<answer>x</answer></think><answer>" + a + "</answer>");
  }
  // interleaved / out-of-order / trailing text
  const std::vector<std::string> fillers = {"text", ".", "0", "$", "x y"};
  for (const auto& f : fillers) {
    out.push_back("<think>a</think>" + f + "<answer>1</answer>");
    out.push_back(f + "<think>a</think><answer>1</answer>");
    out.push_back("<think>a</think><answer>1</answer>" + f);
    out.push_back("<answer>1</answer><think>a</think>" + f);
    out.push_back("<think>a</think> " + f + " <answer>1</answer>");
    out.push_back("<think>" + f + "</think><answer>" + f + "</answer>");
    out.push_back("<answer>" + f + "</answer><think>a</think>");
    out.push_back("</think><think>a<answer>" + f + "</answer>");
    out.push_back("<think>a</answer><answer>" + f + "</think>");
  }
  // near-miss tag spellings
  const std::vector<std::string> spellings = {"<Think>", "<think >", "< think>", "<thinking>", "<think/>"};
  for (const auto& s : spellings) {
    out.push_back(s + "a</think><answer>1</answer>");
    out.push_back("<think>a</think><answer>1</answer " + s + ">");
  }
  // whitespace inside answer / think, padded at both ends
  for (const auto& p : pads)
    for (const auto& a : answers) out.push_back(p + "<think>" + p + "</think>" + p + "<answer>" + a + "</answer>" + p);
  for (const auto& t : thinks)
    for (const auto& p : pads) out.push_back("<think>" + t + "</think>" + p + "<answer>" + t + "</answer>");
  const std::vector<std::string> odd = {
      "<think>a</think><answer>1</Answer>", "<think>a</think><answer>1</answer >",
      "<THINK>a</THINK><ANSWER>1</ANSWER>", "<think>a</think>\n<answer>1</answer>",
      "<think>a</think><answer>1</answer>\u00a0", "<think></think><answer></answer>",
      "  <think>\n</think>\n\n<answer>\n</answer>\n", "<think>a</think><answer>1</answer></think>",
      "<think>a</think><answer>1</answer><think>", "<<think>a</think><answer>1</answer>>",
      "<think>a</think>\v<answer>1</answer>", "<think>a</think>\f<answer>1</answer>",
  };
  out.insert(out.end(), odd.begin(), odd.end());
  return out;
}

}  // namespace verirl::testing
