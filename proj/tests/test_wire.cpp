#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <future>
#include <thread>

#include "doctest.h"
#include "verirl/agent.hpp"
#include "verirl/common.hpp"
#include "verirl/rng.hpp"
#include "verirl/wire.hpp"

using namespace verirl;
using namespace verirl::wire;
using nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

Endpoint tcp(int port, int timeout_ms = 2000, int cap = 4) {
  Endpoint ep;
  ep.kind = Endpoint::Kind::Tcp;
  ep.port = port;
  ep.timeout_ms = timeout_ms;
  ep.max_concurrent = cap;
  return ep;
}

// Listening socket that never answers; used to inspect what a client sends.
struct RawListener {
  int fd = -1;
  int port = 0;
  RawListener() {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof(a));
    ::listen(fd, 16);
    socklen_t len = sizeof(a);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len);
    port = ntohs(a.sin_port);
  }
  ~RawListener() { ::close(fd); }
  bool pending(int ms) const {
    pollfd p{fd, POLLIN, 0};
    return ::poll(&p, 1, ms) > 0;
  }
};

// Answers every connection with fixed bytes, then closes it.
struct GarbageServer {
  RawListener l;
  std::string reply;
  std::thread t;
  explicit GarbageServer(std::string bytes) : reply(std::move(bytes)) {
    t = std::thread([this] {
      const int c = ::accept(l.fd, nullptr, nullptr);
      if (c < 0) return;
      char buf[4096];
      pollfd p{c, POLLIN, 0};
      if (::poll(&p, 1, 1000) > 0 && ::read(c, buf, sizeof(buf)) < 0) {
      }
      (void)::send(c, reply.data(), reply.size(), MSG_NOSIGNAL);
      ::close(c);
    });
  }
  ~GarbageServer() { t.join(); }
};

}  // namespace

TEST_CASE("frames are a big-endian length and a JSON body") {
  const std::string f = encode_frame(json{{"a", 1}});
  CHECK(f == std::string("\x00\x00\x00\x07{\"a\":1}", 11));
  CHECK(decode_frame(f) == json{{"a", 1}});

  const std::string big = encode_frame(json{{"p", std::string(300, 'x')}});
  CHECK(static_cast<unsigned char>(big[2]) == 0x01);
  CHECK(static_cast<unsigned char>(big[3]) == 0x34);  // {"p":"...."} is 308 bytes

  CHECK(code_of([] { encode_frame(json{{"p", std::string(100, 'x')}}, 50); }) == ErrorCode::ProtocolError);
  CHECK(code_of([&] { decode_frame(f.substr(0, 6)); }) == ErrorCode::ProtocolError);
  CHECK(code_of([] { decode_frame(std::string("\x00\x00\x00\x02[]", 6)); }) == ErrorCode::ProtocolError);
}

TEST_CASE("decoding random bytes only ever raises PROTOCOL_ERROR") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    std::string bytes(rng.below(40), '\0');
    for (auto& c : bytes) c = static_cast<char>(rng.below(256));
    if (i % 3 == 0 && bytes.size() >= 4) {
      const auto n = static_cast<std::uint32_t>(bytes.size() - 4);
      bytes[0] = bytes[1] = 0;
      bytes[2] = static_cast<char>(n >> 8);
      bytes[3] = static_cast<char>(n & 0xff);
    }
    CHECK(code_of([&] { decode_frame(bytes); }) == ErrorCode::ProtocolError);
  }
}

TEST_CASE("request and response shapes") {
  Request r{"7", "hi", 5, 0.5};
  CHECK(r.to_json() == json{{"id", "7"}, {"prompt", "hi"}, {"max_tokens", 5}, {"temperature", 0.5}});
  CHECK(Request::from_json(r.to_json()).prompt == "hi");
  CHECK(code_of([] { Request::from_json(json{{"id", 1}, {"prompt", "x"}}); }) == ErrorCode::ProtocolError);

  Response ok = Response::from_json(json{{"id", "7"}, {"text", "U"}, {"logprobs", {-0.5}}});
  CHECK(ok.text == "U");
  REQUIRE(ok.logprobs);
  CHECK((*ok.logprobs)[0] == -0.5);
  CHECK(Response::from_json(json{{"id", "7"}, {"error", "busy"}}).error == "busy");
  CHECK(code_of([] { Response::from_json(json{{"id", "7"}}); }) == ErrorCode::ProtocolError);
  CHECK(code_of([] { Response::from_json(json{{"id", "7"}, {"text", "x"}, {"logprobs", {"a"}}}); }) ==
        ErrorCode::ProtocolError);
}

TEST_CASE("endpoint strings") {
  auto t = Endpoint::parse("tcp://localhost:9000");
  CHECK(t.kind == Endpoint::Kind::Tcp);
  CHECK(t.host == "localhost");
  CHECK(t.port == 9000);
  auto s = Endpoint::parse("stdio:/bin/server --flag");
  CHECK(s.kind == Endpoint::Kind::Subprocess);
  CHECK(s.command == std::vector<std::string>{"/bin/server", "--flag"});
  CHECK(code_of([] { Endpoint::parse("http://x"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { Endpoint::parse("tcp://x:0"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { Endpoint::parse("stdio:"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("echo server over TCP returns the prompt") {
  TcpServer server(echo_handler());
  WirePolicy client(tcp(server.port()));
  const std::string prompt = "<sys>box \"quoted\" \xc3\xa9 \n line";
  auto g = client.generate({prompt, 8, 0.0, 1});
  CHECK(g.text == prompt);
  CHECK(g.logprobs.empty());
}

TEST_CASE("oversized prompt fails before anything is sent") {
  RawListener listener;
  Endpoint ep = tcp(listener.port);
  ep.max_frame = 256;
  WirePolicy client(ep);
  CHECK(code_of([&] { client.generate({std::string(1000, 'x'), 8, 0.0, 0}); }) == ErrorCode::ProtocolError);
  CHECK_FALSE(listener.pending(100));
}

TEST_CASE("concurrent requests never exceed the cap") {
  std::atomic<int> in_flight{0}, peak{0}, served{0};
  TcpServer server([&](const Request& req) {
    const int now = ++in_flight;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(3));
    --in_flight;
    ++served;
    return Response{req.id, "ok:" + req.prompt, std::nullopt, std::nullopt};
  });
  WirePolicy client(tcp(server.port(), 20000, 4));
  std::vector<std::future<std::string>> futs;
  for (int i = 0; i < 100; ++i)
    futs.push_back(std::async(std::launch::async, [&, i] { return client.generate({std::to_string(i), 4, 0.0, 0}).text; }));
  for (int i = 0; i < 100; ++i) CHECK(futs[i].get() == "ok:" + std::to_string(i));
  CHECK(served == 100);
  CHECK(peak <= 4);
  CHECK(peak >= 2);
}

TEST_CASE("slow endpoint times out within the deadline") {
  TcpServer server([](const Request& req) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    return Response{req.id, "late", std::nullopt, std::nullopt};
  });
  WirePolicy client(tcp(server.port(), 100));
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(code_of([&] { client.generate({"x", 4, 0.0, 0}); }) == ErrorCode::Timeout);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::milliseconds(500));
}

TEST_CASE("closed port is ENDPOINT_DOWN") {
  int port = 0;
  {
    RawListener l;
    port = l.port;
  }
  WirePolicy client(tcp(port, 1000));
  CHECK(code_of([&] { client.generate({"x", 4, 0.0, 0}); }) == ErrorCode::EndpointDown);
}

TEST_CASE("error responses and mismatched ids") {
  TcpServer failing([](const Request& req) { return Response{req.id, "", std::nullopt, std::string("overloaded")}; });
  WirePolicy a(tcp(failing.port()));
  CHECK(a.call({"1", "x", 4, 0.0}).error == "overloaded");
  CHECK(code_of([&] { a.generate({"x", 4, 0.0, 0}); }) == ErrorCode::PolicyFailure);

  GarbageServer raw(encode_frame(json{{"id", "nope"}, {"text", "t"}}));
  WirePolicy c(tcp(raw.l.port));
  CHECK(code_of([&] { c.call({"1", "x", 4, 0.0}); }) == ErrorCode::ProtocolError);
}

TEST_CASE("garbage replies yield PROTOCOL_ERROR, never a hang") {
  Rng rng(5);
  for (int i = 0; i < 40; ++i) {
    std::string bytes(1 + rng.below(64), '\0');
    for (auto& c : bytes) c = static_cast<char>(rng.below(256));
    switch (i % 4) {
      case 0:  // declared length larger than the limit
        bytes = std::string("\xff\xff\xff\xff", 4) + bytes;
        break;
      case 1:  // truncated body
        bytes = std::string("\x00\x00\x01\x00", 4) + bytes.substr(0, 10);
        break;
      case 2: {  // well-framed non-JSON
        std::string body = "{" + bytes;
        bytes = std::string(3, '\0') + static_cast<char>(body.size()) + body;
        if (body.size() > 255) bytes = bytes.substr(0, 4);
        break;
      }
      default:
        break;
    }
    GarbageServer server(bytes);
    Endpoint ep = tcp(server.l.port, 1000);
    ep.max_frame = 4096;
    WirePolicy client(ep);
    const auto t0 = std::chrono::steady_clock::now();
    CHECK(code_of([&] { client.call({"1", "x", 4, 0.0}); }) == ErrorCode::ProtocolError);
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::milliseconds(1500));
  }
}

TEST_CASE("server survives garbage and keeps serving") {
  TcpServer server(echo_handler(), 0, 1024);
  for (const std::string& junk : {std::string("\x00\x00\x00\x03" "abc", 7), std::string("\xff\xff\xff\xff", 4),
                                  std::string("\x00\x00\x00\x02{}", 6), std::string("xy")}) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    a.sin_port = htons(static_cast<std::uint16_t>(server.port()));
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&a), sizeof(a)) == 0);
    (void)::send(fd, junk.data(), junk.size(), MSG_NOSIGNAL);
    ::shutdown(fd, SHUT_WR);
    char buf[512];
    pollfd p{fd, POLLIN, 0};
    REQUIRE(::poll(&p, 1, 2000) > 0);
    const ssize_t n = ::read(fd, buf, sizeof(buf));
    if (n > 4) CHECK(decode_frame(std::string(buf, static_cast<std::size_t>(n))).contains("error"));
    ::close(fd);
  }
  WirePolicy client(tcp(server.port()));
  CHECK(client.generate({"still here", 4, 0.0, 0}).text == "still here");
}

TEST_CASE("subprocess stdio endpoint") {
  Endpoint ep;
  ep.kind = Endpoint::Kind::Subprocess;
  ep.command = {WIRE_ECHO_PATH};
  ep.timeout_ms = 5000;
  WirePolicy client(ep);
  for (int i = 0; i < 5; ++i) CHECK(client.generate({"p" + std::to_string(i), 4, 0.0, 0}).text == "p" + std::to_string(i));

  Endpoint dead;
  dead.kind = Endpoint::Kind::Subprocess;
  dead.command = {"/bin/true"};
  dead.timeout_ms = 2000;
  WirePolicy gone(dead);
  const auto code = code_of([&] { gone.generate({"x", 4, 0.0, 0}); });
  CHECK(code == ErrorCode::EndpointDown);
}

TEST_CASE("a remote oracle plays Sokoban through the wire") {
  agent::OraclePolicy oracle(false);
  TcpServer server(policy_handler(oracle));
  WirePolicy client(tcp(server.port(), 20000));
  const auto levels = agent::generate_levels(sokoban::Difficulty::SmallV0, 10, 3);
  agent::EpisodeSettings st;
  st.protocol = agent::Protocol::Global;
  const auto records = agent::run_suite(client, levels, agent::AgentPromptBundle::english(), st);
  CHECK(agent::summarize(records).solve_rate == 1.0);
}
