#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lastmile/error.hpp"
#include "lastmile/render.hpp"

namespace lastmile {

struct ModelEndpoint {
  std::string base_url;  // e.g. "http://127.0.0.1:11434/v1"
  std::string model;
  std::string api_key;   // empty: no Authorization header
  double temperature = 0.0;
  int top_k = 1;
  int max_tokens = 512;
  double timeout_s = 120.0;
  int max_retries = 3;
  double backoff_initial_s = 1.0;  // doubles after every failed attempt
};

// Throws kInvalidArgument on negative temperature/retries or an unparseable URL.
void check_endpoint(const ModelEndpoint& ep);

struct EndpointFailure {
  ErrorCode code = ErrorCode::kEndpointUnreachable;  // kEndpointUnreachable | kHttpError | kTimeout
  int http_status = 0;
  std::string message;
};

struct RawResponse {
  std::string leg_id;
  std::string model;
  std::string text;
  double latency_s = 0.0;  // around the final successful attempt
  int attempts = 0;
  std::string timestamp;  // UTC, ISO 8601
  std::optional<EndpointFailure> failure;

  bool ok() const noexcept { return !failure.has_value(); }
};

enum class QuestionMode { kGrouped, kPerQuestion };

// One prompt carrying all four questions and the JSON answer shape.
std::string build_prompt();
// Single-question prompt for kPerQuestion mode; index in [0, 4).
std::string build_question_prompt(std::size_t question);
std::string prompt_digest();

inline constexpr std::size_t kMaxImageBytes = 10u * 1024u * 1024u;

// Appends every request/response pair as one JSON line. Thread-safe.
class Transcript {
 public:
  explicit Transcript(const std::filesystem::path& path);
  void record(const std::string& leg_id, const std::string& request_body, const RawResponse& response);

 private:
  std::mutex mu_;
  std::filesystem::path path_;
};

// One chat-completions call per attempt with the PNG attached as a base64
// data URL. Retries transport errors, timeouts and 5xx with exponential
// backoff; never throws for endpoint trouble, which is recorded in
// RawResponse::failure instead.
RawResponse evaluate_leg(const ModelEndpoint& ep, std::span<const std::uint8_t> png, const std::string& prompt,
                         const std::string& leg_id = "", Transcript* transcript = nullptr);
RawResponse evaluate_leg(const ModelEndpoint& ep, const RenderedImage& image, const std::string& prompt,
                         const std::string& leg_id = "", Transcript* transcript = nullptr);

// Text-only call with the same retry contract.
RawResponse complete_text(const ModelEndpoint& ep, const std::string& prompt, const std::string& leg_id = "",
                          Transcript* transcript = nullptr);

struct LegImage {
  std::string leg_id;
  std::vector<std::uint8_t> png;
};

// At most `parallelism` requests in flight; results in input order.
std::vector<RawResponse> batch_evaluate(const ModelEndpoint& ep, std::span<const LegImage> legs,
                                        std::size_t parallelism, QuestionMode mode = QuestionMode::kGrouped,
                                        Transcript* transcript = nullptr);

}  // namespace lastmile
