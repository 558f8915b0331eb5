#include "lastmile/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include <json.hpp>

#include "lastmile/digest.hpp"

namespace lastmile {

using nlohmann::json;

std::string_view to_string(VerdictSource s) {
  return s == VerdictSource::kDirectParse ? "direct-parse" : "llm-extracted";
}

std::optional<bool> normalize_answer(std::string_view token) {
  while (!token.empty() && std::isspace(static_cast<unsigned char>(token.front()))) token.remove_prefix(1);
  while (!token.empty() && std::isspace(static_cast<unsigned char>(token.back()))) token.remove_suffix(1);
  std::string t(token);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "yes" || t == "true" || t == "y" || t == "1") return true;
  if (t == "no" || t == "false" || t == "n" || t == "0") return false;
  return std::nullopt;
}

namespace {

std::optional<bool> json_answer(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) return normalize_answer(v.get<std::string>());
  if (v.is_number_integer()) {
    const auto n = v.get<long long>();
    if (n == 0 || n == 1) return n == 1;
  }
  return std::nullopt;
}

std::optional<Answers> answers_from_object(const json& obj) {
  if (!obj.is_object()) return std::nullopt;
  Answers a{};
  for (std::size_t q = 0; q < kQuestionCount; ++q) {
    const std::string lower(kQuestions[q].key);
    std::string upper = lower;
    upper[0] = 'Q';
    const json* v = obj.contains(lower) ? &obj[lower] : obj.contains(upper) ? &obj[upper] : nullptr;
    if (!v) return std::nullopt;
    const auto ans = json_answer(*v);
    if (!ans) return std::nullopt;
    a[q] = *ans;
  }
  return a;
}

std::optional<json> parse_json(std::string_view s) {
  auto j = json::parse(s, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

// Every balanced {...} substring, outermost first, in order of appearance.
std::vector<std::string_view> brace_spans(std::string_view text) {
  std::vector<std::string_view> out;
  for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (c == '\\') ++i;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        out.push_back(text.substr(start, i - start + 1));
        break;
      }
    }
  }
  return out;
}

std::optional<Answers> scan_key_values(std::string_view text) {
  Answers a{};
  const std::string s(text);
  for (std::size_t q = 0; q < kQuestionCount; ++q) {
    const std::regex re(R"((?:\bq|\bquestion)\s*[#_\-]?\s*)" + std::to_string(q + 1) +
                            R"(\b[^\n]{0,60}?\b(yes|no|true|false|y|n)\b)",
                        std::regex::icase);
    std::smatch m;
    if (!std::regex_search(s, m, re)) return std::nullopt;
    a[q] = *normalize_answer(m[1].str());
  }
  return a;
}

Verdict make_verdict(const std::string& leg_id, const Answers& a, std::string_view text) {
  return {leg_id, a, VerdictSource::kDirectParse, sha256_hex(text)};
}

}  // namespace

ParseOutcome parse_structured_text(const std::string& leg_id, std::string_view text) {
  if (auto j = parse_json(text)) {
    if (auto a = answers_from_object(*j)) {
      auto v = make_verdict(leg_id, *a, text);
      // A serialized Verdict parses back to itself.
      if (v.leg_id.empty() && j->contains("leg_id") && (*j)["leg_id"].is_string()) v.leg_id = (*j)["leg_id"];
      if (j->contains("raw_digest") && (*j)["raw_digest"].is_string()) v.raw_digest = (*j)["raw_digest"];
      if (j->value("source", "") == "llm-extracted") v.source = VerdictSource::kLlmExtracted;
      return v;
    }
  }
  static const std::regex kFence(R"(```[A-Za-z]*\s*\n?([\s\S]*?)```)");
  const std::string s(text);
  for (std::sregex_iterator it(s.begin(), s.end(), kFence), end; it != end; ++it) {
    if (auto j = parse_json((*it)[1].str())) {
      if (auto a = answers_from_object(*j)) return make_verdict(leg_id, *a, text);
    }
  }
  for (auto span : brace_spans(text)) {
    if (auto j = parse_json(span)) {
      if (auto a = answers_from_object(*j)) return make_verdict(leg_id, *a, text);
    }
  }
  if (auto a = scan_key_values(text)) return make_verdict(leg_id, *a, text);
  return ParseFailure{"no complete set of four yes/no answers"};
}

ParseOutcome parse_structured(const RawResponse& r) {
  if (!r.ok()) return ParseFailure{"endpoint failure: " + r.failure->message};
  return parse_structured_text(r.leg_id, r.text);
}

std::string build_extraction_prompt(std::string_view raw_text) {
  std::string p =
      "Below is another model's answer to four yes/no questions about a delivery route on a map:\n";
  for (const auto& q : kQuestions) p += std::string(q.key) + ": " + std::string(q.text) + "\n";
  p += "Extract that model's answer to each question. Reply with only this JSON object, each value \"yes\" or "
       "\"no\":\n{\"q1\": \"...\", \"q2\": \"...\", \"q3\": \"...\", \"q4\": \"...\"}\n"
       "Answer text:\n<<<\n";
  p += raw_text;
  p += "\n>>>\n";
  return p;
}

Verdict extract_with_model(const ModelEndpoint& ep, const RawResponse& r, Transcript* transcript) {
  const auto prompt = build_extraction_prompt(r.text);
  std::string last;
  for (int attempt = 0; attempt < kExtractionAttempts; ++attempt) {
    const auto reply = complete_text(ep, prompt, r.leg_id, transcript);
    if (!reply.ok()) throw Error(reply.failure->code, "extractor: " + reply.failure->message);
    auto outcome = parse_structured_text(r.leg_id, reply.text);
    if (auto* v = std::get_if<Verdict>(&outcome)) {
      v->source = VerdictSource::kLlmExtracted;
      v->raw_digest = sha256_hex(r.text);
      return *v;
    }
    last = std::get<ParseFailure>(outcome).reason;
  }
  throw Error(ErrorCode::kExtractionFailed, "leg " + r.leg_id + ": " + last);
}

LegOutcome resolve_response(const RawResponse& r, const ModelEndpoint* extractor, Transcript* transcript) {
  LegOutcome out;
  out.leg_id = r.leg_id;
  if (!r.ok()) {
    out.endpoint_error = true;
    out.failure = std::string(to_string(r.failure->code)) + ": " + r.failure->message;
    return out;
  }
  auto direct = parse_structured(r);
  if (auto* v = std::get_if<Verdict>(&direct)) {
    out.verdict = std::move(*v);
    return out;
  }
  out.parse_failed = true;
  out.failure = std::get<ParseFailure>(direct).reason;
  if (!extractor) return out;
  try {
    out.verdict = extract_with_model(*extractor, r, transcript);
    out.failure.clear();
  } catch (const Error& e) {
    out.failure = e.what();
  }
  return out;
}

}  // namespace lastmile
