#include "verirl/wire.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <sstream>

#include "verirl/common.hpp"

namespace verirl::wire {

using nlohmann::json;

namespace {

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

// Waits for `events` on fd; throws TIMEOUT.
void wait_fd(int fd, short events, Clock::time_point deadline) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int ms = remaining_ms(deadline);
    const int rc = ::poll(&p, 1, ms);
    if (rc > 0) return;
    if (rc == 0) throw Error(ErrorCode::Timeout, "no response before the deadline");
    if (errno != EINTR) throw Error(ErrorCode::EndpointDown, std::string("poll failed: ") + std::strerror(errno));
  }
}

bool is_socket(int fd) {
  int type = 0;
  socklen_t len = sizeof(type);
  return ::getsockopt(fd, SOL_SOCKET, SO_TYPE, &type, &len) == 0;
}

ssize_t write_some(int fd, const char* data, std::size_t n) {
  if (is_socket(fd)) return ::send(fd, data, n, MSG_NOSIGNAL);
  return ::write(fd, data, n);
}

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

}  // namespace

std::string encode_frame(const json& body, std::size_t max_frame) {
  const std::string text = body.dump(-1, ' ', false, json::error_handler_t::replace);
  if (text.size() > max_frame || text.size() > 0xffffffffULL)
    throw Error(ErrorCode::ProtocolError, "frame of " + std::to_string(text.size()) + " bytes exceeds the limit of " +
                                              std::to_string(max_frame));
  std::string out(4, '\0');
  const auto n = static_cast<std::uint32_t>(text.size());
  out[0] = static_cast<char>((n >> 24) & 0xff);
  out[1] = static_cast<char>((n >> 16) & 0xff);
  out[2] = static_cast<char>((n >> 8) & 0xff);
  out[3] = static_cast<char>(n & 0xff);
  return out + text;
}

namespace {

std::uint32_t frame_length(const unsigned char* b) {
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

json parse_body(std::string_view body) {
  json j = json::parse(body.begin(), body.end(), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ProtocolError, "frame body is not valid JSON");
  if (!j.is_object()) throw Error(ErrorCode::ProtocolError, "frame body is not a JSON object");
  return j;
}

}  // namespace

json decode_frame(std::string_view bytes, std::size_t max_frame) {
  if (bytes.size() < 4) throw Error(ErrorCode::ProtocolError, "frame shorter than its length prefix");
  const std::uint32_t n = frame_length(reinterpret_cast<const unsigned char*>(bytes.data()));
  if (n > max_frame) throw Error(ErrorCode::ProtocolError, "declared frame length exceeds the limit");
  if (bytes.size() != 4 + static_cast<std::size_t>(n))
    throw Error(ErrorCode::ProtocolError, "frame length prefix does not match the payload");
  return parse_body(bytes.substr(4));
}

json Request::to_json() const {
  return {{"id", id}, {"prompt", prompt}, {"max_tokens", max_tokens}, {"temperature", temperature}};
}

Request Request::from_json(const json& j) {
  Request r;
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("prompt") ||
      !j["prompt"].is_string())
    throw Error(ErrorCode::ProtocolError, "request needs string id and prompt");
  r.id = j["id"].get<std::string>();
  r.prompt = j["prompt"].get<std::string>();
  if (auto it = j.find("max_tokens"); it != j.end()) {
    if (!it->is_number_integer()) throw Error(ErrorCode::ProtocolError, "max_tokens must be an integer");
    r.max_tokens = it->get<int>();
  }
  if (auto it = j.find("temperature"); it != j.end()) {
    if (!it->is_number()) throw Error(ErrorCode::ProtocolError, "temperature must be a number");
    r.temperature = it->get<double>();
  }
  return r;
}

json Response::to_json() const {
  json j = {{"id", id}};
  if (error) {
    j["error"] = *error;
    return j;
  }
  j["text"] = text;
  if (logprobs) j["logprobs"] = *logprobs;
  return j;
}

Response Response::from_json(const json& j) {
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string())
    throw Error(ErrorCode::ProtocolError, "response needs a string id");
  Response r;
  r.id = j["id"].get<std::string>();
  if (auto it = j.find("error"); it != j.end()) {
    if (!it->is_string()) throw Error(ErrorCode::ProtocolError, "error must be a string");
    r.error = it->get<std::string>();
    return r;
  }
  auto text = j.find("text");
  if (text == j.end() || !text->is_string()) throw Error(ErrorCode::ProtocolError, "response needs text or error");
  r.text = text->get<std::string>();
  if (auto it = j.find("logprobs"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::ProtocolError, "logprobs must be an array");
    std::vector<double> lp;
    for (const auto& v : *it) {
      if (!v.is_number()) throw Error(ErrorCode::ProtocolError, "logprobs must be numbers");
      lp.push_back(v.get<double>());
    }
    r.logprobs = std::move(lp);
  }
  return r;
}

void Channel::send(const std::string& frame, Clock::time_point deadline) {
  std::size_t off = 0;
  while (off < frame.size()) {
    wait_fd(wfd_, POLLOUT, deadline);
    const ssize_t n = write_some(wfd_, frame.data() + off, frame.size() - off);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(ErrorCode::EndpointDown, std::string("write failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

namespace {

// Reads exactly n bytes. Returns false on EOF before the first byte.
bool read_exact(int fd, char* out, std::size_t n, Clock::time_point deadline, bool mid_frame) {
  std::size_t got = 0;
  while (got < n) {
    wait_fd(fd, POLLIN, deadline);
    const ssize_t r = ::read(fd, out + got, n - got);
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(ErrorCode::EndpointDown, std::string("read failed: ") + std::strerror(errno));
    }
    if (r == 0) {
      if (got == 0 && !mid_frame) return false;
      throw Error(ErrorCode::ProtocolError, "stream ended inside a frame");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace

json Channel::recv(Clock::time_point deadline, std::size_t max_frame) {
  unsigned char len[4];
  if (!read_exact(rfd_, reinterpret_cast<char*>(len), 4, deadline, false))
    throw Error(ErrorCode::EndpointDown, "peer closed the connection");
  const std::uint32_t n = frame_length(len);
  if (n > max_frame) throw Error(ErrorCode::ProtocolError, "declared frame length " + std::to_string(n) + " exceeds the limit");
  std::string body(n, '\0');
  read_exact(rfd_, body.data(), n, deadline, true);
  return parse_body(body);
}

Endpoint Endpoint::parse(std::string_view spec) {
  Endpoint ep;
  if (spec.rfind("tcp://", 0) == 0) {
    const std::string rest(spec.substr(6));
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "tcp endpoint needs HOST:PORT");
    ep.kind = Kind::Tcp;
    ep.host = rest.substr(0, colon);
    try {
      ep.port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "bad port in " + std::string(spec));
    }
    if (ep.port <= 0 || ep.port > 65535) throw Error(ErrorCode::InvalidConfig, "port out of range");
    return ep;
  }
  if (spec.rfind("stdio:", 0) == 0) {
    ep.kind = Kind::Subprocess;
    std::istringstream in{std::string(spec.substr(6))};
    for (std::string arg; in >> arg;) ep.command.push_back(arg);
    if (ep.command.empty()) throw Error(ErrorCode::InvalidConfig, "stdio endpoint needs a command");
    return ep;
  }
  throw Error(ErrorCode::InvalidConfig, "endpoint must start with tcp:// or stdio:");
}

WirePolicy::WirePolicy(Endpoint ep) : ep_(std::move(ep)), slots_(std::max(1, ep_.max_concurrent)) {
  if (ep_.max_concurrent < 1) throw Error(ErrorCode::InvalidConfig, "max_concurrent must be >= 1");
  if (ep_.timeout_ms < 1) throw Error(ErrorCode::InvalidConfig, "timeout_ms must be >= 1");
}

WirePolicy::~WirePolicy() {
  std::lock_guard lock(child_mu_);
  stop_child();
}

void WirePolicy::stop_child() {
  close_fd(child_fd_);
  if (child_pid_ > 0) {
    ::kill(child_pid_, SIGTERM);
    ::waitpid(child_pid_, nullptr, 0);
  }
  child_pid_ = -1;
}

Response WirePolicy::call(const Request& req) {
  // Encoding first: an oversized request fails before anything is sent.
  const std::string frame = encode_frame(req.to_json(), ep_.max_frame);
  slots_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{slots_};
  const auto deadline = Clock::now() + std::chrono::milliseconds(ep_.timeout_ms);
  Response r = ep_.kind == Endpoint::Kind::Tcp ? call_tcp(frame, req.id, deadline)
                                               : call_subprocess(frame, req.id, deadline);
  if (r.id != req.id) throw Error(ErrorCode::ProtocolError, "response id " + r.id + " does not match " + req.id);
  return r;
}

Response WirePolicy::call_tcp(const std::string& frame, const std::string&, Clock::time_point deadline) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(ep_.host.c_str(), std::to_string(ep_.port).c_str(), &hints, &res) != 0 || !res)
    throw Error(ErrorCode::EndpointDown, "cannot resolve " + ep_.host);
  int fd = ::socket(res->ai_family, res->ai_socktype | SOCK_NONBLOCK | SOCK_CLOEXEC, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw Error(ErrorCode::EndpointDown, "socket failed");
  }
  struct Closer {
    int& fd;
    ~Closer() { close_fd(fd); }
  } closer{fd};
  const int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    if (errno != EINPROGRESS) throw Error(ErrorCode::EndpointDown, "connect failed: " + std::string(std::strerror(errno)));
    wait_fd(fd, POLLOUT, deadline);
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw Error(ErrorCode::EndpointDown, "connect failed: " + std::string(std::strerror(err)));
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  Channel ch(fd, fd);
  ch.send(frame, deadline);
  return Response::from_json(ch.recv(deadline, ep_.max_frame));
}

Response WirePolicy::call_subprocess(const std::string& frame, const std::string&, Clock::time_point deadline) {
  std::lock_guard lock(child_mu_);
  if (child_pid_ < 0) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
      throw Error(ErrorCode::EndpointDown, "socketpair failed");
    std::vector<char*> argv;
    for (auto& a : ep_.command) argv.push_back(a.data());
    argv.push_back(nullptr);
    const pid_t pid = ::fork();
    if (pid < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw Error(ErrorCode::EndpointDown, "fork failed");
    }
    if (pid == 0) {
      ::dup2(sv[1], 0);
      ::dup2(sv[1], 1);
      ::execvp(argv[0], argv.data());
      ::_exit(127);
    }
    ::close(sv[1]);
    child_pid_ = pid;
    child_fd_ = sv[0];
  }
  try {
    Channel ch(child_fd_, child_fd_);
    ch.send(frame, deadline);
    return Response::from_json(ch.recv(deadline, ep_.max_frame));
  } catch (const Error&) {
    // The stream may be out of step; start a fresh process next time.
    stop_child();
    throw;
  }
}

agent::Generation WirePolicy::generate(const agent::GenerateRequest& req) {
  Request r;
  r.id = std::to_string(next_id_.fetch_add(1));
  r.prompt = req.prompt;
  r.max_tokens = req.max_tokens;
  r.temperature = req.temperature;
  Response resp = call(r);
  if (resp.error) throw Error(ErrorCode::PolicyFailure, "endpoint reported: " + *resp.error);
  agent::Generation g;
  g.text = std::move(resp.text);
  if (resp.logprobs) g.logprobs = std::move(*resp.logprobs);
  return g;
}

Handler echo_handler() {
  return [](const Request& req) {
    Response r;
    r.id = req.id;
    r.text = req.prompt;
    return r;
  };
}

Handler policy_handler(agent::GenerativePolicy& policy) {
  auto mu = std::make_shared<std::mutex>();
  return [&policy, mu](const Request& req) {
    Response r;
    r.id = req.id;
    try {
      std::unique_lock lock(*mu, std::defer_lock);
      if (!policy.concurrent()) lock.lock();
      auto g = policy.generate({req.prompt, req.max_tokens, req.temperature, fnv1a(req.id)});
      r.text = std::move(g.text);
      if (!g.logprobs.empty()) r.logprobs = std::move(g.logprobs);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    return r;
  };
}

namespace {

// Serves one connection; the read side has no deadline.
void serve_fd(int in_fd, int out_fd, const Handler& handler, std::size_t max_frame,
              const std::atomic<bool>* stopping) {
  const auto far = [] { return Clock::now() + std::chrono::hours(24 * 365); };
  Channel ch(in_fd, out_fd);
  for (;;) {
    if (stopping && stopping->load()) return;
    Response resp;
    try {
      json j = ch.recv(far(), max_frame);
      Request req = Request::from_json(j);
      resp = handler(req);
      resp.id = req.id;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::EndpointDown) return;
      resp.error = e.what();
      try {
        ch.send(encode_frame(resp.to_json(), max_frame), Clock::now() + std::chrono::seconds(5));
      } catch (const Error&) {
      }
      return;
    }
    try {
      ch.send(encode_frame(resp.to_json(), max_frame), Clock::now() + std::chrono::seconds(30));
    } catch (const Error&) {
      return;
    }
  }
}

}  // namespace

void serve_stream(int in_fd, int out_fd, const Handler& handler, std::size_t max_frame) {
  serve_fd(in_fd, out_fd, handler, max_frame, nullptr);
}

TcpServer::TcpServer(Handler handler, int port, std::size_t max_frame)
    : handler_(std::move(handler)), max_frame_(max_frame) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::IoError, "socket failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 128) != 0) {
    close_fd(listen_fd_);
    throw Error(ErrorCode::IoError, "cannot listen on port " + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::accept_loop() {
  while (!stopping_.load()) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lock(mu_);
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_fd(fd, fd, handler_, max_frame_, &stopping_); });
  }
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(mu_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  for (auto& t : workers_)
    if (t.joinable()) t.join();
  for (int fd : client_fds_) ::close(fd);
  client_fds_.clear();
  close_fd(listen_fd_);
}

}  // namespace verirl::wire
