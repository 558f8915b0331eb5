#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace httplib {
class Server;
}

namespace lastmile {

// Canned chat-completions behaviour.
//
//   {
//     "rules": [
//       {"contains": "text in the user message",
//        "responses": [{"status": 500}, {"status": 200, "content": "...", "delay_ms": 0}]}
//     ],
//     "cycle": ["answer A", "answer B"],
//     "delay_ms": 0
//   }
//
// The first rule whose "contains" occurs in the request's text parts answers;
// its responses are served in order and the last one repeats, unless the
// rule says "select": "digest". Requests no
// rule matches get a "cycle" entry picked by the SHA-256 of the model name
// and messages, so answers do not depend on arrival order.
struct MockFixture {
  struct Reply {
    int status = 200;
    std::string content;
    int delay_ms = 0;
  };
  struct Rule {
    std::string contains;
    std::vector<Reply> replies;
    bool by_digest = false;  // "select": "digest" picks like the cycle does
  };
  std::vector<Rule> rules;
  std::vector<std::string> cycle;
  int delay_ms = 0;

  static MockFixture from_json(const nlohmann::json& j);
  static MockFixture load(const std::filesystem::path& path);
};

// Local server speaking POST {/v1}/chat/completions from a MockFixture.
// Instruments concurrency so tests can assert the client's contracts.
class MockServer {
 public:
  explicit MockServer(MockFixture fixture);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  // Binds 127.0.0.1 on an ephemeral port and serves on a background thread.
  int start();
  void stop();

  std::string base_url() const;  // "http://127.0.0.1:{port}/v1"
  int port() const noexcept { return port_; }

  std::size_t request_count() const noexcept { return requests_.load(); }
  std::size_t max_in_flight() const noexcept { return max_in_flight_.load(); }
  std::vector<nlohmann::json> received() const;

 private:
  MockFixture::Reply choose(const nlohmann::json& body);

  MockFixture fixture_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_in_flight_{0};
  mutable std::mutex mu_;
  std::map<std::size_t, std::size_t> rule_cursor_;
  std::vector<nlohmann::json> received_;
};

}  // namespace lastmile
