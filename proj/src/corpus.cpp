#include "verirl/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "verirl/common.hpp"
#include "verirl/rng.hpp"

namespace verirl::corpus {

using nlohmann::json;

json to_json(const VerifiableSample& s) {
  json j = {{"id", s.id},
            {"prompt", s.prompt},
            {"answer", s.answer},
            {"answer_kind", std::string(verifier::kind_name(s.answer_kind))},
            {"domain_tag", s.domain_tag}};
  if (s.image_ref) j["image_ref"] = *s.image_ref;
  return j;
}

json CorpusManifest::to_json() const {
  return {{"operation", operation},         {"source_count", source_count}, {"kept_count", kept_count},
          {"sampled_count", sampled_count}, {"malformed_count", malformed_count},
          {"defect_count", defect_count},   {"seed", seed},                 {"filter_rules", filter_rules}};
}

namespace {

std::optional<std::string> text_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number()) return it->dump();
  return std::nullopt;
}

const std::vector<std::string> kFilterRules = {
    "answer parses as numeric, option (A-D) or numeric list",
    "prompt and answer are strings",
    "ids are unique",
};

}  // namespace

CorpusResult filter_verifiable(const std::vector<json>& records) {
  CorpusResult out;
  out.manifest.operation = "filter";
  out.manifest.filter_rules = kFilterRules;
  out.manifest.source_count = records.size();
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& r = records[i];
    if (!r.is_object()) {
      ++out.manifest.malformed_count;
      continue;
    }
    auto prompt = text_field(r, "prompt");
    auto answer = text_field(r, "answer");
    if (!prompt || !answer || (r.contains("prompt") && !r["prompt"].is_string())) {
      ++out.manifest.malformed_count;
      continue;
    }
    auto parsed = verifier::try_parse_answer(*answer);
    if (!parsed || parsed->kind == verifier::AnswerKind::LatexExpr) continue;
    VerifiableSample s;
    s.id = text_field(r, "id").value_or("rec-" + std::to_string(i));
    if (!ids.insert(s.id).second) {
      ++out.manifest.malformed_count;
      continue;
    }
    s.prompt = *prompt;
    s.answer = *answer;
    s.answer_kind = parsed->kind;
    s.image_ref = text_field(r, "image_ref");
    if (!s.image_ref) s.image_ref = text_field(r, "image");
    s.domain_tag = text_field(r, "domain_tag").value_or(text_field(r, "domain").value_or(""));
    out.samples.push_back(std::move(s));
  }
  out.manifest.kept_count = out.samples.size();
  out.manifest.sampled_count = out.samples.size();
  return out;
}

std::string normalize_prompt(std::string_view prompt) {
  std::string out;
  bool space = false;
  for (char c : prompt) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

CorpusResult dedupe(const std::vector<VerifiableSample>& samples) {
  CorpusResult out;
  out.manifest.operation = "dedupe";
  out.manifest.filter_rules = {"drop repeated normalized prompt (lowercase, collapsed whitespace)"};
  out.manifest.source_count = samples.size();
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& s : samples) {
    auto [it, fresh] = seen.emplace(normalize_prompt(s.prompt), out.samples.size());
    if (fresh) {
      out.samples.push_back(s);
      continue;
    }
    const auto& first = out.samples[it->second];
    auto a = verifier::try_parse_answer(first.answer);
    auto b = verifier::try_parse_answer(s.answer);
    if (!a || !b || !verifier::check_equivalence(*b, *a)) ++out.manifest.defect_count;
  }
  out.manifest.kept_count = out.samples.size();
  out.manifest.sampled_count = out.samples.size();
  return out;
}

CorpusResult sample_subset(const std::vector<VerifiableSample>& samples, std::size_t n, std::uint64_t seed) {
  if (n > samples.size())
    throw Error(ErrorCode::NTooLarge,
                "requested " + std::to_string(n) + " samples from a population of " + std::to_string(samples.size()));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return samples[a].id < samples[b].id; });
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  CorpusResult out;
  out.manifest.operation = "sample";
  out.manifest.seed = seed;
  out.manifest.filter_rules = {"uniform without replacement after sorting by id"};
  out.manifest.source_count = samples.size();
  out.manifest.kept_count = samples.size();
  for (std::size_t i = 0; i < n; ++i) out.samples.push_back(samples[order[i]]);
  out.manifest.sampled_count = n;
  return out;
}

CorpusResult split_by_domain(const std::vector<VerifiableSample>& samples,
                             const std::function<bool(const VerifiableSample&)>& keep, std::string rule) {
  CorpusResult out;
  out.manifest.operation = "split";
  out.manifest.filter_rules = {std::move(rule)};
  out.manifest.source_count = samples.size();
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(out.samples), keep);
  out.manifest.kept_count = out.samples.size();
  out.manifest.sampled_count = out.samples.size();
  return out;
}

CorpusResult split_by_tag(const std::vector<VerifiableSample>& samples, const std::string& tag) {
  return split_by_domain(
      samples, [&](const VerifiableSample& s) { return s.domain_tag == tag; }, "domain_tag == " + tag);
}

std::vector<json> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(json::parse(line, nullptr, false));
    if (out.back().is_discarded()) out.back() = nullptr;
  }
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed for " + path);
  return out;
}

std::vector<VerifiableSample> read_samples(const std::string& path) {
  std::vector<VerifiableSample> out;
  for (const json& r : read_records(path)) {
    if (!r.is_object() || !r.contains("id") || !r.contains("prompt") || !r.contains("answer"))
      throw Error(ErrorCode::IoError, path + ": record is not a verifiable sample");
    VerifiableSample s;
    s.id = r["id"].is_string() ? r["id"].get<std::string>() : r["id"].dump();
    s.prompt = r["prompt"].get<std::string>();
    s.answer = r["answer"].is_string() ? r["answer"].get<std::string>() : r["answer"].dump();
    auto parsed = verifier::try_parse_answer(s.answer);
    if (auto k = r.find("answer_kind"); k != r.end() && k->is_string()) {
      auto kind = verifier::kind_from_name(k->get<std::string>());
      if (!kind) throw Error(ErrorCode::IoError, path + ": unknown answer_kind " + k->get<std::string>());
      s.answer_kind = *kind;
    } else if (parsed) {
      s.answer_kind = parsed->kind;
    }
    if (auto d = r.find("domain_tag"); d != r.end() && d->is_string()) s.domain_tag = d->get<std::string>();
    if (auto im = r.find("image_ref"); im != r.end() && im->is_string()) s.image_ref = im->get<std::string>();
    out.push_back(std::move(s));
  }
  return out;
}

void write_samples(const std::string& path, const std::vector<VerifiableSample>& samples) {
  std::ostringstream os;
  for (const auto& s : samples) os << to_json(s).dump() << '\n';
  write_file(path, os.str());
}

std::string manifest_path(const std::string& samples_path) { return samples_path + ".manifest.json"; }

void write_manifest(const std::string& samples_path, const CorpusManifest& manifest) {
  write_file(manifest_path(samples_path), manifest.to_json().dump(2) + "\n");
}

SyntheticCorpus synthetic_records(std::size_t total, std::size_t parseable, std::size_t geo, std::uint64_t seed) {
  if (parseable > total || geo > total) throw Error(ErrorCode::InvalidConfig, "synthetic counts exceed total");
  static const char* kFree[] = {"describe the image", "it depends on the angle", "see the figure",
                                "the triangle is isosceles", "x + y", "\\sqrt{2}", "not enough information"};
  Rng rng(seed);
  // Pick which records are parseable and which are geo by shuffling flags.
  std::vector<int> verifiable(total, 0), is_geo(total, 0);
  std::fill(verifiable.begin(), verifiable.begin() + static_cast<std::ptrdiff_t>(parseable), 1);
  std::fill(is_geo.begin(), is_geo.begin() + static_cast<std::ptrdiff_t>(geo), 1);
  for (std::size_t i = total; i > 1; --i) {
    std::swap(verifiable[i - 1], verifiable[rng.below(i)]);
    std::swap(is_geo[i - 1], is_geo[rng.below(i)]);
  }
  SyntheticCorpus out;
  out.parseable = parseable;
  out.geo = geo;
  for (std::size_t i = 0; i < total; ++i) {
    std::string answer;
    if (verifiable[i]) {
      switch (rng.below(5)) {
        case 0: answer = std::to_string(rng.below(1000)); break;
        case 1: answer = std::to_string(rng.below(100)) + "." + std::to_string(10 + rng.below(90)); break;
        case 2: answer = std::string(1, static_cast<char>('A' + rng.below(4))); break;
        case 3: answer = "\\frac{" + std::to_string(1 + rng.below(20)) + "}{" + std::to_string(2 + rng.below(20)) + "}"; break;
        default: answer = "[" + std::to_string(rng.below(50)) + ", " + std::to_string(rng.below(50)) + "]"; break;
      }
    } else {
      answer = kFree[rng.below(std::size(kFree))];
    }
    json r = {{"id", "syn-" + std::to_string(i)},
              {"prompt", "synthetic question " + std::to_string(i)},
              {"answer", answer},
              {"domain", is_geo[i] ? "geo" : "text"}};
    if (rng.coin()) r["image"] = "images/" + std::to_string(i) + ".png";
    out.records.push_back(std::move(r));
  }
  return out;
}

std::vector<VerifiableSample> arithmetic_corpus(std::size_t n, std::uint64_t seed, int max_operand) {
  std::vector<VerifiableSample> out;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int a = static_cast<int>(rng.below(max_operand + 1));
    const int b = static_cast<int>(rng.below(max_operand + 1));
    VerifiableSample s;
    s.id = "arith-" + std::to_string(seed) + "-" + std::to_string(i);
    switch (rng.below(3)) {
      case 0:
        s.prompt = std::to_string(a) + "+" + std::to_string(b) + "=";
        s.answer = std::to_string(a + b);
        break;
      case 1:
        s.prompt = std::to_string(std::max(a, b)) + "-" + std::to_string(std::min(a, b)) + "=";
        s.answer = std::to_string(std::max(a, b) - std::min(a, b));
        break;
      default:
        s.prompt = std::to_string(a) + "/" + std::to_string(std::max(b, 1)) + "=";
        s.answer = std::to_string(a) + "/" + std::to_string(std::max(b, 1));
        break;
    }
    s.answer_kind = verifier::AnswerKind::Numeric;
    s.domain_tag = "text-math";
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace verirl::corpus
