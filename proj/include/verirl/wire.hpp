#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "verirl/agent.hpp"

// Length-prefixed JSON frames (4-byte big-endian length, then UTF-8 body)
// for putting an external model behind the GenerativePolicy interface.
namespace verirl::wire {

inline constexpr std::size_t kDefaultMaxFrame = 1 << 20;

using Clock = std::chrono::steady_clock;

// Throws PROTOCOL_ERROR when the body exceeds max_frame.
std::string encode_frame(const nlohmann::json& body, std::size_t max_frame = kDefaultMaxFrame);
// Decodes exactly one frame occupying all of `bytes`.
nlohmann::json decode_frame(std::string_view bytes, std::size_t max_frame = kDefaultMaxFrame);

struct Request {
  std::string id;
  std::string prompt;
  int max_tokens = 64;
  double temperature = 0.0;

  nlohmann::json to_json() const;
  static Request from_json(const nlohmann::json& j);  // PROTOCOL_ERROR on bad shape
};

struct Response {
  std::string id;
  std::string text;
  std::optional<std::vector<double>> logprobs;
  std::optional<std::string> error;

  nlohmann::json to_json() const;
  static Response from_json(const nlohmann::json& j);
};

// Frame IO over a pair of file descriptors with a deadline per operation.
class Channel {
 public:
  Channel(int read_fd, int write_fd) : rfd_(read_fd), wfd_(write_fd) {}
  // TIMEOUT, ENDPOINT_DOWN (peer gone), PROTOCOL_ERROR (bad frame).
  void send(const std::string& frame, Clock::time_point deadline);
  nlohmann::json recv(Clock::time_point deadline, std::size_t max_frame);

 private:
  int rfd_;
  int wfd_;
};

struct Endpoint {
  enum class Kind { Tcp, Subprocess };
  Kind kind = Kind::Tcp;
  std::string host = "127.0.0.1";
  int port = 0;
  std::vector<std::string> command;  // argv for Subprocess
  int timeout_ms = 10000;
  int max_concurrent = 4;
  std::size_t max_frame = kDefaultMaxFrame;

  // "tcp://HOST:PORT" or "stdio:PROGRAM ARG...". Throws INVALID_CONFIG.
  static Endpoint parse(std::string_view spec);
};

class WirePolicy : public agent::GenerativePolicy {
 public:
  explicit WirePolicy(Endpoint ep);
  ~WirePolicy() override;
  WirePolicy(const WirePolicy&) = delete;
  WirePolicy& operator=(const WirePolicy&) = delete;

  agent::Generation generate(const agent::GenerateRequest& req) override;
  Response call(const Request& req);
  const Endpoint& endpoint() const { return ep_; }

 private:
  Response call_tcp(const std::string& frame, const std::string& id, Clock::time_point deadline);
  Response call_subprocess(const std::string& frame, const std::string& id, Clock::time_point deadline);
  void stop_child();

  Endpoint ep_;
  std::counting_semaphore<> slots_;
  std::atomic<std::uint64_t> next_id_{0};
  std::mutex child_mu_;
  int child_pid_ = -1;
  int child_fd_ = -1;
};

using Handler = std::function<Response(const Request&)>;

Handler echo_handler();
// Serves generations from a local policy.
Handler policy_handler(agent::GenerativePolicy& policy);

// Reads frames from in_fd and answers on out_fd until EOF or a bad frame.
void serve_stream(int in_fd, int out_fd, const Handler& handler, std::size_t max_frame = kDefaultMaxFrame);

// Loopback TCP server, one thread per connection. Port 0 picks a free port.
class TcpServer {
 public:
  TcpServer(Handler handler, int port = 0, std::size_t max_frame = kDefaultMaxFrame);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;
  int port() const { return port_; }
  void stop();

 private:
  void accept_loop();

  Handler handler_;
  std::size_t max_frame_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
};

}  // namespace verirl::wire
