#include <algorithm>
#include <chrono>

#include "doctest.h"
#include "lastmile/error.hpp"
#include "lastmile/llm_client.hpp"
#include "lastmile/mock_server.hpp"
#include "lastmile/oracle.hpp"
#include "support.hpp"

using namespace lastmile;

namespace {

ModelEndpoint endpoint_for(const MockServer& s) {
  ModelEndpoint ep;
  ep.base_url = s.base_url();
  ep.model = "mock-vl";
  ep.timeout_s = 5;
  ep.max_retries = 3;
  ep.backoff_initial_s = 0.01;
  return ep;
}

std::vector<LegImage> fake_legs(std::size_t n) {
  std::vector<LegImage> legs;
  for (std::size_t i = 0; i < n; ++i) {
    legs.push_back({"route000_leg" + std::to_string(i), {0x89, 'P', 'N', 'G', static_cast<std::uint8_t>(i)}});
  }
  return legs;
}

MockFixture fixture_json(const char* text) { return MockFixture::from_json(nlohmann::json::parse(text)); }

int dead_port() {
  MockServer s(MockFixture{});
  return s.start();
}

}  // namespace

TEST_CASE("grouped prompt") {
  const auto p = build_prompt();
  for (const auto& q : kQuestions) CHECK(p.find(std::string(q.text)) != std::string::npos);
  CHECK(p.find("\"q4\"") != std::string::npos);
  CHECK(prompt_digest() == prompt_digest());
  CHECK(prompt_digest().size() == 64);
  // Three characters per token is a pessimistic estimate for English.
  CHECK(p.size() / 3 < 512);
  for (std::size_t q = 0; q < kQuestionCount; ++q) {
    CHECK(build_question_prompt(q).find(std::string(kQuestions[q].text)) != std::string::npos);
  }
  CHECK_THROWS_AS(build_question_prompt(4), Error);
}

TEST_CASE("endpoint validation") {
  ModelEndpoint ep;
  ep.base_url = "http://127.0.0.1:8080/v1";
  CHECK_NOTHROW(check_endpoint(ep));
  auto bad = ep;
  bad.temperature = -0.1;
  CHECK_THROWS_AS(check_endpoint(bad), Error);
  bad = ep;
  bad.max_retries = -1;
  CHECK_THROWS_AS(check_endpoint(bad), Error);
  bad = ep;
  bad.base_url = "localhost:8080";
  CHECK_THROWS_AS(check_endpoint(bad), Error);
}

TEST_CASE("canned reply and request shape") {
  MockServer server(fixture_json(R"({"rules":[{"contains":"red line","responses":[{"content":"canned"}]}]})"));
  server.start();
  const auto ep = endpoint_for(server);
  const std::vector<std::uint8_t> png{1, 2, 3};
  const auto r = evaluate_leg(ep, png, build_prompt(), "route000_leg0");
  CHECK(r.ok());
  CHECK(r.text == "canned");
  CHECK(r.attempts == 1);
  CHECK(r.leg_id == "route000_leg0");
  CHECK(r.latency_s > 0);
  CHECK(r.timestamp.size() == 24);
  CHECK(r.timestamp.back() == 'Z');

  const auto body = server.received().at(0);
  CHECK(body["model"] == "mock-vl");
  CHECK(body["temperature"] == 0.0);
  CHECK(body["top_k"] == 1);
  CHECK(body["stream"] == false);
  const auto& content = body["messages"][0]["content"];
  CHECK(content[0]["type"] == "text");
  CHECK(content[1]["image_url"]["url"] == "data:image/png;base64,AQID");
}

TEST_CASE("server errors are retried with backoff") {
  MockServer server(fixture_json(
      R"({"rules":[{"contains":"red line","responses":[{"status":500},{"status":500},{"content":"ok"}]}]})"));
  server.start();
  auto ep = endpoint_for(server);
  ep.backoff_initial_s = 0.05;
  const auto start = std::chrono::steady_clock::now();
  const auto r = evaluate_leg(ep, std::vector<std::uint8_t>{1}, build_prompt());
  const double waited = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(r.ok());
  CHECK(r.text == "ok");
  CHECK(r.attempts == 3);
  CHECK(server.request_count() == 3);
  CHECK(waited >= 0.05 + 0.10);
}

TEST_CASE("retries run out") {
  MockServer server(fixture_json(R"({"rules":[{"contains":"red line","responses":[{"status":503}]}]})"));
  server.start();
  auto ep = endpoint_for(server);
  ep.max_retries = 2;
  ep.backoff_initial_s = 0;
  const auto r = evaluate_leg(ep, std::vector<std::uint8_t>{1}, build_prompt());
  REQUIRE_FALSE(r.ok());
  CHECK(r.failure->code == ErrorCode::kHttpError);
  CHECK(r.failure->http_status == 503);
  CHECK(r.attempts == 3);
}

TEST_CASE("client errors are not retried") {
  MockServer server(fixture_json(R"({"rules":[{"contains":"red line","responses":[{"status":400}]}]})"));
  server.start();
  const auto r = evaluate_leg(endpoint_for(server), std::vector<std::uint8_t>{1}, build_prompt());
  REQUIRE_FALSE(r.ok());
  CHECK(r.failure->http_status == 400);
  CHECK(r.attempts == 1);
}

TEST_CASE("slow endpoint times out") {
  MockServer server(fixture_json(R"({"cycle":["late"],"delay_ms":2000})"));
  server.start();
  auto ep = endpoint_for(server);
  ep.timeout_s = 1;
  ep.max_retries = 0;
  const auto start = std::chrono::steady_clock::now();
  const auto r = evaluate_leg(ep, std::vector<std::uint8_t>{1}, build_prompt());
  const double waited = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  REQUIRE_FALSE(r.ok());
  CHECK(r.failure->code == ErrorCode::kTimeout);
  CHECK(waited < 1.9);
}

TEST_CASE("oversized image is refused") {
  ModelEndpoint ep;
  ep.base_url = "http://127.0.0.1:1/v1";
  const std::vector<std::uint8_t> big(kMaxImageBytes + 1);
  CHECK_THROWS_AS(evaluate_leg(ep, big, build_prompt()), Error);
}

TEST_CASE("parallelism one is sequential") {
  MockServer server(fixture_json(R"({"cycle":["a","b","c"],"delay_ms":30})"));
  server.start();
  const auto legs = fake_legs(6);
  const auto out = batch_evaluate(endpoint_for(server), legs, 1);
  CHECK(server.max_in_flight() == 1);
  REQUIRE(out.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(out[i].leg_id == legs[i].leg_id);
}

TEST_CASE("bounded concurrency keeps input order") {
  MockServer server(fixture_json(R"({"cycle":["a","b","c","d","e"],"delay_ms":80})"));
  server.start();
  const auto legs = fake_legs(16);
  const auto ep = endpoint_for(server);
  const auto par = batch_evaluate(ep, legs, 4);
  CHECK(server.max_in_flight() <= 4);
  CHECK(server.max_in_flight() >= 2);
  const auto seq = batch_evaluate(ep, legs, 1);
  REQUIRE(par.size() == legs.size());
  for (std::size_t i = 0; i < legs.size(); ++i) {
    CHECK(par[i].leg_id == legs[i].leg_id);
    CHECK(par[i].text == seq[i].text);
  }
}

TEST_CASE("unreachable endpoint yields one error record per leg") {
  ModelEndpoint ep;
  ep.base_url = "http://127.0.0.1:" + std::to_string(dead_port()) + "/v1";
  ep.model = "gone";
  ep.max_retries = 1;
  ep.backoff_initial_s = 0;
  ep.timeout_s = 2;
  const auto legs = fake_legs(10);
  const auto out = batch_evaluate(ep, legs, 3);
  REQUIRE(out.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(out[i].leg_id == legs[i].leg_id);
    REQUIRE_FALSE(out[i].ok());
    CHECK(out[i].failure->code == ErrorCode::kEndpointUnreachable);
    CHECK(out[i].attempts == 2);
  }
}

TEST_CASE("per-question mode asks four times") {
  MockServer server(fixture_json(R"({"rules":[
      {"contains":"water body","responses":[{"content":"Yes"}]},
      {"contains":"railway","responses":[{"content":"No"}]},
      {"contains":"pedestrian","responses":[{"content":"No"}]},
      {"contains":"park","responses":[{"content":"Yes"}]}]})"));
  server.start();
  const auto legs = fake_legs(2);
  const auto out = batch_evaluate(endpoint_for(server), legs, 2, QuestionMode::kPerQuestion);
  CHECK(server.request_count() == 8);
  CHECK(out[0].text == "q1: Yes\nq2: No\nq3: No\nq4: Yes\n");
  CHECK(out[1].attempts == 4);
}

TEST_CASE("transcript records every call") {
  MockServer server(fixture_json(R"({"cycle":["x"]})"));
  server.start();
  const auto dir = testing::scratch("transcript");
  Transcript t(dir / "t.jsonl");
  const auto legs = fake_legs(5);
  (void)batch_evaluate(endpoint_for(server), legs, 2, QuestionMode::kGrouped, &t);
  const auto text = read_file(dir / "t.jsonl");
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  CHECK(text.find("route000_leg4") != std::string::npos);
}

TEST_CASE("cycle answers depend on content, not arrival order") {
  MockServer a(fixture_json(R"({"cycle":["1","2","3","4","5","6","7"]})"));
  MockServer b(fixture_json(R"({"cycle":["1","2","3","4","5","6","7"]})"));
  a.start();
  b.start();
  auto legs = fake_legs(8);
  const auto fwd = batch_evaluate(endpoint_for(a), legs, 1);
  std::reverse(legs.begin(), legs.end());
  const auto rev = batch_evaluate(endpoint_for(b), legs, 1);
  for (std::size_t i = 0; i < 8; ++i) CHECK(fwd[i].text == rev[7 - i].text);
}
