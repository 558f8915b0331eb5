#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "lastmile/llm_client.hpp"
#include "lastmile/oracle.hpp"

namespace lastmile {

enum class VerdictSource { kDirectParse, kLlmExtracted };

std::string_view to_string(VerdictSource s);

struct Verdict {
  std::string leg_id;
  Answers answers{};
  VerdictSource source = VerdictSource::kDirectParse;
  std::string raw_digest;  // SHA-256 of the raw model text

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct ParseFailure {
  std::string reason;
};

using ParseOutcome = std::variant<Verdict, ParseFailure>;

// yes/true/y/1 -> true, no/false/n/0 -> false (case-insensitive, surrounding
// whitespace ignored); anything else -> nullopt.
std::optional<bool> normalize_answer(std::string_view token);

// Strict JSON, then JSON inside markdown fences or embedded in prose, then a
// per-question key/value scan. A stage succeeds only with all four answers.
ParseOutcome parse_structured(const RawResponse& r);
ParseOutcome parse_structured_text(const std::string& leg_id, std::string_view text);

std::string build_extraction_prompt(std::string_view raw_text);

inline constexpr int kExtractionAttempts = 2;

// Asks a text model to restate `r` in the fixed JSON shape and parses the
// reply. Throws kExtractionFailed after kExtractionAttempts unparseable
// replies, or the endpoint's error code if the call itself fails.
Verdict extract_with_model(const ModelEndpoint& ep, const RawResponse& r, Transcript* transcript = nullptr);

// Final state of one leg after parsing and (optionally) extraction.
struct LegOutcome {
  std::string leg_id;
  std::optional<Verdict> verdict;  // empty: unanswered
  std::string failure;             // why, when unanswered
  bool endpoint_error = false;
  bool parse_failed = false;
};

// Direct parse first; the extractor only sees responses that failed it.
LegOutcome resolve_response(const RawResponse& r, const ModelEndpoint* extractor,
                            Transcript* transcript = nullptr);

}  // namespace lastmile
