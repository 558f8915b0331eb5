#include "lastmile/llm_client.hpp"

#include <httplib.h>

#include <atomic>
#include <cstdio>
#include <chrono>
#include <ctime>
#include <fstream>
#include <regex>
#include <thread>

#include <json.hpp>

#include "lastmile/digest.hpp"
#include "lastmile/oracle.hpp"

namespace lastmile {

using nlohmann::json;

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

std::optional<ParsedUrl> parse_url(const std::string& url) {
  static const std::regex kUrl(R"(^(https?://[^/\s]+)(/[^\s]*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) return std::nullopt;
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return ParsedUrl{m[1], prefix};
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  const auto n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof buf - n, ".%03dZ", static_cast<int>(ms));
  return buf;
}

}  // namespace

void check_endpoint(const ModelEndpoint& ep) {
  if (!(ep.temperature >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be >= 0");
  if (ep.max_retries < 0) throw Error(ErrorCode::kInvalidArgument, "max_retries must be >= 0");
  if (!(ep.timeout_s > 0.0)) throw Error(ErrorCode::kInvalidArgument, "timeout must be positive");
  if (ep.max_tokens < 1) throw Error(ErrorCode::kInvalidArgument, "max_tokens must be positive");
  if (!(ep.backoff_initial_s >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "backoff must be >= 0");
  if (!parse_url(ep.base_url)) throw Error(ErrorCode::kInvalidArgument, "bad base URL '" + ep.base_url + "'");
}

std::string build_prompt() {
  std::string p =
      "The image is a map. The red line is one leg of a delivery route; the black square is the depot and the "
      "numbered blue circles are delivery stops.\n"
      "Answer each question about the red route with yes or no.\n";
  for (const auto& q : kQuestions) {
    p += std::string(q.key) + ": " + std::string(q.text) + "\n";
  }
  p += "Reply with only this JSON object, each value \"yes\" or \"no\":\n"
       "{\"q1\": \"...\", \"q2\": \"...\", \"q3\": \"...\", \"q4\": \"...\"}\n";
  return p;
}

std::string build_question_prompt(std::size_t question) {
  if (question >= kQuestionCount) throw Error(ErrorCode::kInvalidArgument, "question index out of range");
  return "The image is a map. The red line is one leg of a delivery route.\n" +
         std::string(kQuestions[question].text) + "\nReply with only yes or no.\n";
}

std::string prompt_digest() {
  std::string all = build_prompt();
  for (std::size_t q = 0; q < kQuestionCount; ++q) all += build_question_prompt(q);
  return sha256_hex(all);
}

Transcript::Transcript(const std::filesystem::path& path) : path_(path) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void Transcript::record(const std::string& leg_id, const std::string& request_body, const RawResponse& response) {
  json line{{"leg_id", leg_id},
            {"model", response.model},
            {"request_sha256", sha256_hex(request_body)},
            {"text", response.text},
            {"attempts", response.attempts},
            {"latency_s", response.latency_s},
            {"timestamp", response.timestamp}};
  if (response.failure) {
    line["failure"] = {{"code", std::string(to_string(response.failure->code))},
                       {"http_status", response.failure->http_status},
                       {"message", response.failure->message}};
  }
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  out << line.dump() << '\n';
}

namespace {

RawResponse post_chat(const ModelEndpoint& ep, const json& content, const std::string& leg_id,
                      Transcript* transcript) {
  check_endpoint(ep);
  const auto url = *parse_url(ep.base_url);
  json body{{"model", ep.model},
            {"messages", json::array({{{"role", "user"}, {"content", content}}})},
            {"temperature", ep.temperature},
            {"top_k", ep.top_k},
            {"max_tokens", ep.max_tokens},
            {"stream", false}};
  const std::string payload = body.dump();

  RawResponse out;
  out.leg_id = leg_id;
  out.model = ep.model;
  out.timestamp = utc_now();
  double backoff = ep.backoff_initial_s;
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(ep.timeout_s));

  for (int attempt = 1; attempt <= ep.max_retries + 1; ++attempt) {
    out.attempts = attempt;
    httplib::Client cli(url.origin);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);

    const auto start = std::chrono::steady_clock::now();
    auto res = cli.Post(url.prefix + "/chat/completions", headers, payload, "application/json");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    bool retry = false;
    if (!res) {
      const auto err = res.error();
      EndpointFailure f;
      f.code = (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) ? ErrorCode::kTimeout
                                                                                        : ErrorCode::kEndpointUnreachable;
      f.message = httplib::to_string(err);
      out.failure = f;
      retry = true;
    } else if (res->status >= 200 && res->status < 300) {
      try {
        const auto j = json::parse(res->body);
        const auto& msg = j.at("choices").at(0).at("message").at("content");
        out.text = msg.is_string() ? msg.get<std::string>() : msg.dump();
        out.latency_s = elapsed;
        out.failure.reset();
      } catch (const json::exception& e) {
        out.failure = EndpointFailure{ErrorCode::kHttpError, res->status, std::string("malformed body: ") + e.what()};
      }
    } else {
      out.failure = EndpointFailure{ErrorCode::kHttpError, res->status, "HTTP " + std::to_string(res->status)};
      retry = res->status >= 500 || res->status == 429;
    }
    if (!retry || attempt == ep.max_retries + 1) break;
    std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
    backoff *= 2;
  }
  if (transcript) transcript->record(leg_id, payload, out);
  return out;
}

}  // namespace

RawResponse evaluate_leg(const ModelEndpoint& ep, std::span<const std::uint8_t> png, const std::string& prompt,
                         const std::string& leg_id, Transcript* transcript) {
  if (png.size() > kMaxImageBytes) {
    throw Error(ErrorCode::kInvalidArgument, "image of " + std::to_string(png.size()) + " bytes exceeds 10 MB");
  }
  const json content = json::array(
      {{{"type", "text"}, {"text", prompt}},
       {{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}}});
  return post_chat(ep, content, leg_id, transcript);
}

RawResponse evaluate_leg(const ModelEndpoint& ep, const RenderedImage& image, const std::string& prompt,
                         const std::string& leg_id, Transcript* transcript) {
  return evaluate_leg(ep, encode_png(image), prompt, leg_id, transcript);
}

RawResponse complete_text(const ModelEndpoint& ep, const std::string& prompt, const std::string& leg_id,
                          Transcript* transcript) {
  return post_chat(ep, json::array({{{"type", "text"}, {"text", prompt}}}), leg_id, transcript);
}

namespace {

// Four single-question calls folded into one response the key/value
// scanner understands.
RawResponse evaluate_per_question(const ModelEndpoint& ep, const LegImage& leg, Transcript* transcript) {
  RawResponse out;
  out.leg_id = leg.leg_id;
  out.model = ep.model;
  for (std::size_t q = 0; q < kQuestionCount; ++q) {
    auto r = evaluate_leg(ep, leg.png, build_question_prompt(q), leg.leg_id, transcript);
    if (q == 0) out.timestamp = r.timestamp;
    out.attempts += r.attempts;
    if (!r.ok()) {
      out.failure = r.failure;
      out.latency_s = 0.0;
      return out;
    }
    out.latency_s += r.latency_s;
    out.text += std::string(kQuestions[q].key) + ": " + r.text + "\n";
  }
  return out;
}

}  // namespace

std::vector<RawResponse> batch_evaluate(const ModelEndpoint& ep, std::span<const LegImage> legs,
                                        std::size_t parallelism, QuestionMode mode, Transcript* transcript) {
  if (parallelism < 1) throw Error(ErrorCode::kInvalidArgument, "parallelism must be >= 1");
  check_endpoint(ep);
  std::vector<RawResponse> out(legs.size());
  const std::string prompt = build_prompt();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < legs.size(); i = next++) {
      try {
        out[i] = mode == QuestionMode::kGrouped ? evaluate_leg(ep, legs[i].png, prompt, legs[i].leg_id, transcript)
                                                : evaluate_per_question(ep, legs[i], transcript);
      } catch (const Error& e) {
        out[i].leg_id = legs[i].leg_id;
        out[i].model = ep.model;
        out[i].failure = EndpointFailure{e.code(), 0, e.what()};
      }
    }
  };
  const std::size_t n = std::min(parallelism, legs.size());
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  pool.clear();  // joins
  return out;
}

}  // namespace lastmile
