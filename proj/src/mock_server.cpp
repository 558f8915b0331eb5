#include "lastmile/mock_server.hpp"

#include <httplib.h>

#include <chrono>

#include "lastmile/digest.hpp"
#include "lastmile/error.hpp"

namespace lastmile {

using nlohmann::json;

MockFixture MockFixture::from_json(const json& j) {
  MockFixture f;
  try {
    for (const auto& r : j.value("rules", json::array())) {
      Rule rule;
      rule.contains = r.at("contains").get<std::string>();
      for (const auto& x : r.at("responses")) {
        rule.replies.push_back({x.value("status", 200), x.value("content", std::string{}), x.value("delay_ms", 0)});
      }
      if (rule.replies.empty()) throw Error(ErrorCode::kMalformedFile, "mock rule without responses");
      const auto select = r.value("select", std::string("sequence"));
      if (select != "sequence" && select != "digest") throw Error(ErrorCode::kMalformedFile, "unknown select '" + select + "'");
      rule.by_digest = select == "digest";
      f.rules.push_back(std::move(rule));
    }
    f.cycle = j.value("cycle", std::vector<std::string>{});
    f.delay_ms = j.value("delay_ms", 0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, std::string("mock fixture: ") + e.what());
  }
  return f;
}

MockFixture MockFixture::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedFile, path.string() + ": " + e.what());
  }
}

MockServer::MockServer(MockFixture fixture) : fixture_(std::move(fixture)) {}

MockServer::~MockServer() { stop(); }

namespace {

std::string text_parts(const json& body) {
  std::string out;
  if (!body.contains("messages") || !body["messages"].is_array()) return out;
  for (const auto& m : body["messages"]) {
    if (!m.contains("content")) continue;
    const auto& c = m["content"];
    if (c.is_string()) {
      out += c.get<std::string>();
      out += '\n';
    } else if (c.is_array()) {
      for (const auto& part : c) {
        if (part.value("type", "") == "text") {
          out += part.value("text", "");
          out += '\n';
        }
      }
    }
  }
  return out;
}

std::size_t digest_index(const json& body, std::size_t n) {
  const json keyed{{"model", body.value("model", "")}, {"messages", body.value("messages", json::array())}};
  return std::stoull(sha256_hex(keyed.dump()).substr(0, 15), nullptr, 16) % n;
}

}  // namespace

MockFixture::Reply MockServer::choose(const json& body) {
  const auto text = text_parts(body);
  std::lock_guard lock(mu_);
  received_.push_back(body);
  for (std::size_t r = 0; r < fixture_.rules.size(); ++r) {
    const auto& rule = fixture_.rules[r];
    if (text.find(rule.contains) == std::string::npos) continue;
    if (rule.by_digest) return rule.replies[digest_index(body, rule.replies.size())];
    auto& cursor = rule_cursor_[r];
    const auto& reply = rule.replies[std::min(cursor, rule.replies.size() - 1)];
    ++cursor;
    return reply;
  }
  if (fixture_.cycle.empty()) return {200, "", fixture_.delay_ms};
  return {200, fixture_.cycle[digest_index(body, fixture_.cycle.size())], fixture_.delay_ms};
}

int MockServer::start() {
  if (server_) return port_;
  server_ = std::make_unique<httplib::Server>();
  server_->new_task_queue = [] { return new httplib::ThreadPool(16); };
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    ++requests_;
    const auto now = ++in_flight_;
    auto seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    struct Leave {
      std::atomic<std::size_t>& n;
      ~Leave() { --n; }
    } leave{in_flight_};

    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) {
      res.status = 400;
      res.set_content(R"({"error":"body is not JSON"})", "application/json");
      return;
    }
    const auto reply = choose(body);
    if (reply.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(reply.delay_ms));
    res.status = reply.status;
    if (reply.status >= 200 && reply.status < 300) {
      const json out{{"id", "mock-" + std::to_string(requests_.load())},
                     {"object", "chat.completion"},
                     {"model", body.value("model", "")},
                     {"choices", json::array({{{"index", 0},
                                               {"message", {{"role", "assistant"}, {"content", reply.content}}},
                                               {"finish_reason", "stop"}}})}};
      res.set_content(out.dump(), "application/json");
    } else {
      res.set_content(json{{"error", {{"message", reply.content}, {"code", reply.status}}}}.dump(), "application/json");
    }
  };
  server_->Post("/v1/chat/completions", handler);
  server_->Post("/chat/completions", handler);
  port_ = server_->bind_to_any_port("127.0.0.1");
  if (port_ <= 0) {
    server_.reset();
    throw Error(ErrorCode::kIoError, "mock server could not bind");
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void MockServer::stop() {
  if (!server_) return;
  server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

std::string MockServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

std::vector<json> MockServer::received() const {
  std::lock_guard lock(mu_);
  return received_;
}

}  // namespace lastmile
