#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "tadpole/bridge.hpp"
#include "tadpole/env.hpp"

using namespace tadpole;
using nlohmann::json;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& prefix_hex, const std::string& body) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < prefix_hex.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(std::stoi(prefix_hex.substr(i, 2), nullptr, 16)));
  }
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

// Produced by Python: json.dumps(h, sort_keys=True, separators=(',', ':')).
const std::string kRequestJson =
    R"({"caption":"a white dot","channels":3,"frames":1,"height":1,"id":7,)"
    R"("payload_bytes":6,"seed":12345,"t_noise":450,"type":"reward","width":2})";
const std::string kResponseJson = R"({"id":7,"r_align":[0.5,0.125],"r_rec":[-0.25,2.0]})";
const std::string kHandshakeJson =
    R"({"max_window":8,"model_id":"toy","protocol_version":1,)"
    R"("resize_method":"nearest","schedule_T":1000,"type":"handshake"})";

RewardRequest sample_request() {
  RewardRequest r;
  r.id = 7;
  r.caption = "a white dot";
  r.t_noise = 450;
  r.seed = 12345;
  r.frames = 1;
  r.height = 1;
  r.width = 2;
  r.pixels = {0, 128, 255, 255, 128, 0};
  return r;
}

bool read_all(int fd, std::uint8_t* dst, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, dst + got, n - got, 0);
    if (r <= 0) return false;
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void write_all(int fd, const std::vector<std::uint8_t>& b) {
  std::size_t sent = 0;
  while (sent < b.size()) {
    const ssize_t n = ::send(fd, b.data() + sent, b.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) return;
    sent += static_cast<std::size_t>(n);
  }
}

// In-process bridge: sends a handshake, then answers each request with
// whatever `handler` returns (nothing means stay silent).
class FakeBridge {
 public:
  using Handler = std::function<std::optional<RewardResponse>(const RewardRequest&)>;

  FakeBridge(Handshake hs, Handler handler) : hs_(std::move(hs)), handler_(std::move(handler)) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    ::listen(listen_fd_, 1);
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
  }

  ~FakeBridge() {
    stop_ = true;
    ::shutdown(listen_fd_, SHUT_RDWR);
    if (client_fd_ >= 0) ::shutdown(client_fd_, SHUT_RDWR);
    thread_.join();
    ::close(listen_fd_);
    if (client_fd_ >= 0) ::close(client_fd_);
  }

  Endpoint endpoint() const { return {"127.0.0.1", port_}; }
  int requests() const { return requests_.load(); }
  const RewardRequest& last() const { return last_; }

 private:
  void serve() {
    client_fd_ = ::accept(listen_fd_, nullptr, nullptr);
    if (client_fd_ < 0) return;
    write_all(client_fd_, encode_message(handshake_header(hs_)));
    while (!stop_) {
      std::uint8_t prefix[4];
      if (!read_all(client_fd_, prefix, 4)) return;
      const std::uint32_t len = (std::uint32_t{prefix[0]} << 24) | (std::uint32_t{prefix[1]} << 16) |
                                (std::uint32_t{prefix[2]} << 8) | prefix[3];
      std::vector<std::uint8_t> msg(prefix, prefix + 4);
      msg.resize(4 + len);
      if (!read_all(client_fd_, msg.data() + 4, len)) return;
      const json h = json::parse(msg.begin() + 4, msg.end());
      const std::size_t body = h.value("payload_bytes", std::size_t{0});
      msg.resize(4 + len + body);
      if (!read_all(client_fd_, msg.data() + 4 + len, body)) return;
      last_ = parse_request(decode_message(msg));
      ++requests_;
      if (auto resp = handler_(last_)) write_all(client_fd_, encode_response(*resp));
    }
  }

  Handshake hs_;
  Handler handler_;
  int listen_fd_ = -1;
  int client_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::atomic<int> requests_{0};
  RewardRequest last_;
  std::thread thread_;
};

Handshake toy_handshake(std::size_t max_window = 4) {
  Handshake h;
  h.max_window = max_window;
  h.model_id = "toy";
  h.resize_method = "nearest";
  return h;
}

FakeBridge::Handler zeros() {
  return [](const RewardRequest& r) -> std::optional<RewardResponse> {
    return RewardResponse{r.id, std::vector<double>(r.frames, 0.0),
                          std::vector<double>(r.frames, 0.0), std::nullopt};
  };
}

BridgeOptions fast_options() {
  BridgeOptions o;
  o.timeout = std::chrono::milliseconds(2000);
  o.upscale = 32;
  return o;
}

std::vector<Tensor> frames(std::size_t n) {
  EnvSpec spec;
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(render_position({0.1 * i, 0.5}, spec));
  return out;
}

const Prompt kCaption = Prompt::caption("a white dot in the top right corner of a black background");

}  // namespace

TEST(Codec, RequestGoldenBytes) {
  auto expect = bytes_of("0000008a", kRequestJson);
  const auto px = sample_request().pixels;
  expect.insert(expect.end(), px.begin(), px.end());
  EXPECT_EQ(encode_request(sample_request()), expect);
}

TEST(Codec, ResponseGoldenBytes) {
  const RewardResponse r{7, {0.5, 0.125}, {-0.25, 2.0}, std::nullopt};
  EXPECT_EQ(encode_response(r), bytes_of("00000032", kResponseJson));
}

TEST(Codec, HandshakeGoldenBytes) {
  Handshake h = toy_handshake(8);
  EXPECT_EQ(encode_message(handshake_header(h)), bytes_of("00000075", kHandshakeJson));
}

TEST(Codec, RoundTrips) {
  const auto req = parse_request(decode_message(encode_request(sample_request())));
  EXPECT_EQ(req.id, 7u);
  EXPECT_EQ(req.caption, "a white dot");
  EXPECT_EQ(req.t_noise, 450);
  EXPECT_EQ(req.pixels, sample_request().pixels);

  const RewardResponse r{9, {1e-3, 0.0}, {-2e-4, 1.5}, std::nullopt};
  const auto back = parse_response(decode_message(encode_response(r)));
  EXPECT_EQ(back.r_align, r.r_align);
  EXPECT_EQ(back.r_rec, r.r_rec);
  EXPECT_FALSE(back.error);

  const auto err = parse_response(decode_message(encode_response({3, {}, {}, "out of memory"})));
  EXPECT_EQ(err.error.value(), "out of memory");

  const auto hs = parse_handshake(decode_message(encode_message(handshake_header(toy_handshake(6)))));
  EXPECT_EQ(hs.max_window, 6u);
  EXPECT_EQ(hs.schedule_T, 1000);
  EXPECT_EQ(hs.model_id, "toy");
}

TEST(Codec, DecodeErrors) {
  EXPECT_THROW(decode_message(std::vector<std::uint8_t>{0, 0}), std::runtime_error);
  EXPECT_THROW(decode_message(bytes_of("00000010", "{}")), std::runtime_error);
  EXPECT_THROW(decode_message(bytes_of("00000002", "[]")), std::runtime_error);
  EXPECT_THROW(decode_message(bytes_of("00000003", "{x}")), std::runtime_error);
  // Payload shorter than advertised.
  EXPECT_THROW(decode_message(bytes_of("00000013", R"({"payload_bytes":4})") ), std::runtime_error);
  auto extra = encode_message(json{{"id", 1}});
  extra.push_back(0);
  EXPECT_THROW(decode_message(extra), std::runtime_error);
  EXPECT_THROW(parse_response(decode_message(encode_message(json{{"r_align", json::array()}}))),
               std::runtime_error);
  EXPECT_THROW(parse_response(decode_message(encode_message(
                   json{{"id", 1}, {"r_align", {1.0}}, {"r_rec", json::array()}}))),
               std::runtime_error);
  Handshake bad = toy_handshake();
  bad.protocol_version = 2;
  EXPECT_THROW(parse_handshake(decode_message(encode_message(handshake_header(bad)))),
               std::runtime_error);
  RewardRequest short_px = sample_request();
  short_px.pixels.pop_back();
  EXPECT_THROW(encode_request(short_px), std::invalid_argument);
}

TEST(Endpoint, Parse) {
  const auto e = parse_endpoint("localhost:5555");
  EXPECT_EQ(e.host, "localhost");
  EXPECT_EQ(e.port, 5555);
  EXPECT_EQ(parse_endpoint("::1:80").host, "::1");
  EXPECT_THROW(parse_endpoint("localhost"), std::invalid_argument);
  EXPECT_THROW(parse_endpoint("host:"), std::invalid_argument);
  EXPECT_THROW(parse_endpoint("host:70000"), std::invalid_argument);
  EXPECT_THROW(parse_endpoint("host:12x"), std::invalid_argument);
}

TEST(Client, ReadsHandshake) {
  FakeBridge server(toy_handshake(4), zeros());
  BridgeClient client(server.endpoint(), fast_options());
  EXPECT_EQ(client.max_window(), 4u);
  EXPECT_EQ(client.handshake().model_id, "toy");
  EXPECT_EQ(client.schedule().steps(), 1000);
  EXPECT_DOUBLE_EQ(client.schedule().alpha_bar(999), default_schedule().alpha_bar(999));
}

TEST(Client, EchoesZerosAndSendsUpscaledFrames) {
  FakeBridge server(toy_handshake(4), zeros());
  BridgeClient client(server.endpoint(), fast_options());
  const auto f = frames(3);
  const auto terms = client.window_terms(f, kCaption, {450, 99});
  EXPECT_EQ(terms.r_align, std::vector<double>(3, 0.0));
  EXPECT_EQ(terms.r_rec, std::vector<double>(3, 0.0));
  const auto& req = server.last();
  EXPECT_EQ(req.frames, 3u);
  EXPECT_EQ(req.height, 32u);
  EXPECT_EQ(req.t_noise, 450);
  EXPECT_EQ(req.seed, 99u);
  EXPECT_EQ(req.caption, kCaption.text());
  const auto rgb = upscale_rgb8(f[1], 32, 32);
  EXPECT_TRUE(std::equal(rgb.begin(), rgb.end(), req.pixels.begin() + 32 * 32 * 3));
}

TEST(Client, TermsFeedAccumulator) {
  FakeBridge server(toy_handshake(2), [](const RewardRequest& r) -> std::optional<RewardResponse> {
    return RewardResponse{r.id, std::vector<double>(r.frames, 1e-3),
                          std::vector<double>(r.frames, -1e-3), std::nullopt};
  });
  BridgeClient client(server.endpoint(), fast_options());
  const auto r = video_tadpole_rewards(frames(4), {2, {}, {500, 600}}, client, kCaption, 5);
  ASSERT_EQ(r.size(), 4u);
  for (const auto& x : r) EXPECT_NEAR(x.r_total, symlog(2.0) + symlog(-0.2), 1e-12);
  EXPECT_EQ(server.requests(), 3);
}

TEST(Client, ErrorResponseSurfaces) {
  FakeBridge server(toy_handshake(), [](const RewardRequest& r) -> std::optional<RewardResponse> {
    return RewardResponse{r.id, {}, {}, "model exploded"};
  });
  BridgeClient client(server.endpoint(), fast_options());
  try {
    client.window_terms(frames(1), kCaption, {450, 1});
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("model exploded"), std::string::npos);
  }
}

TEST(Client, UnparsedRequestErrorSurfaces) {
  FakeBridge server(toy_handshake(), [](const RewardRequest&) -> std::optional<RewardResponse> {
    return RewardResponse{0, {}, {}, "malformed request"};
  });
  BridgeClient client(server.endpoint(), fast_options());
  try {
    client.window_terms(frames(1), kCaption, {450, 1});
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("malformed request"), std::string::npos);
  }
}

TEST(Client, TimesOut) {
  FakeBridge server(toy_handshake(), [](const RewardRequest&) { return std::nullopt; });
  BridgeOptions o = fast_options();
  o.timeout = std::chrono::milliseconds(200);
  BridgeClient client(server.endpoint(), o);
  try {
    client.window_terms(frames(1), kCaption, {450, 1});
    FAIL() << "expected a timeout";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos);
  }
}

TEST(Client, OversizedWindowNeverSent) {
  FakeBridge server(toy_handshake(2), zeros());
  BridgeClient client(server.endpoint(), fast_options());
  EXPECT_THROW(client.window_terms(frames(3), kCaption, {450, 1}), std::invalid_argument);
  EXPECT_THROW(client.window_terms(frames(1), Prompt::component(0), {450, 1}),
               std::invalid_argument);
  EXPECT_THROW(client.window_terms(frames(1), kCaption, {1000, 1}), std::out_of_range);
  client.window_terms(frames(2), kCaption, {450, 1});
  EXPECT_EQ(server.requests(), 1);
}

TEST(Client, MismatchedIdRejected) {
  FakeBridge server(toy_handshake(), [](const RewardRequest& r) -> std::optional<RewardResponse> {
    return RewardResponse{r.id + 1, {0.0}, {0.0}, std::nullopt};
  });
  BridgeClient client(server.endpoint(), fast_options());
  EXPECT_THROW(client.window_terms(frames(1), kCaption, {450, 1}), std::runtime_error);
}

TEST(Client, WrongFrameCountRejected) {
  FakeBridge server(toy_handshake(), [](const RewardRequest& r) -> std::optional<RewardResponse> {
    return RewardResponse{r.id, {0.0, 0.0}, {0.0, 0.0}, std::nullopt};
  });
  BridgeClient client(server.endpoint(), fast_options());
  EXPECT_THROW(client.window_terms(frames(1), kCaption, {450, 1}), std::runtime_error);
}

TEST(Client, ConnectFailureIsReported) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const std::uint16_t port = ntohs(addr.sin_port);
  ::close(fd);
  EXPECT_THROW(BridgeClient({"127.0.0.1", port}, fast_options()), std::runtime_error);
}
