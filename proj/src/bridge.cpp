#include "tadpole/bridge.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

#include "tadpole/env.hpp"

namespace tadpole {

using nlohmann::json;

std::vector<std::uint8_t> encode_message(const json& header,
                                         std::span<const std::uint8_t> payload) {
  const std::string text = header.dump();
  if (text.size() > kMaxHeaderBytes) throw std::invalid_argument("bridge header too large");
  const auto len = static_cast<std::uint32_t>(text.size());
  std::vector<std::uint8_t> out;
  out.reserve(4 + text.size() + payload.size());
  out.push_back(static_cast<std::uint8_t>(len >> 24));
  out.push_back(static_cast<std::uint8_t>(len >> 16));
  out.push_back(static_cast<std::uint8_t>(len >> 8));
  out.push_back(static_cast<std::uint8_t>(len));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

namespace {

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

json parse_header(const std::uint8_t* p, std::size_t n) {
  json h = json::parse(p, p + n, nullptr, false);
  if (h.is_discarded() || !h.is_object()) {
    throw std::runtime_error("bridge header is not a JSON object");
  }
  return h;
}

std::size_t payload_size(const json& h) {
  if (!h.contains("payload_bytes")) return 0;
  const auto& v = h["payload_bytes"];
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw std::runtime_error("bridge payload_bytes must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

template <typename T>
T require_field(const json& h, const char* key) {
  if (!h.contains(key)) throw std::runtime_error(std::string("bridge message lacks '") + key + "'");
  try {
    return h.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::runtime_error(std::string("bridge field '") + key + "' has the wrong type");
  }
}

}  // namespace

BridgeMessage decode_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw std::runtime_error("bridge message shorter than its length prefix");
  const std::uint32_t len = read_be32(bytes.data());
  if (len > kMaxHeaderBytes || 4 + std::size_t{len} > bytes.size()) {
    throw std::runtime_error("bridge header length exceeds message");
  }
  BridgeMessage msg;
  msg.header = parse_header(bytes.data() + 4, len);
  const std::size_t body = payload_size(msg.header);
  if (4 + std::size_t{len} + body != bytes.size()) {
    throw std::runtime_error("bridge payload size does not match header");
  }
  msg.payload.assign(bytes.begin() + 4 + len, bytes.end());
  return msg;
}

json handshake_header(const Handshake& h) {
  return {{"type", "handshake"},
          {"protocol_version", h.protocol_version},
          {"max_window", h.max_window},
          {"schedule_T", h.schedule_T},
          {"model_id", h.model_id},
          {"resize_method", h.resize_method}};
}

Handshake parse_handshake(const BridgeMessage& msg) {
  const json& h = msg.header;
  if (h.value("type", std::string{}) != "handshake") {
    throw std::runtime_error("expected a bridge handshake message");
  }
  Handshake out;
  out.protocol_version = require_field<int>(h, "protocol_version");
  if (out.protocol_version != kBridgeProtocolVersion) {
    throw std::runtime_error("unsupported bridge protocol version " +
                             std::to_string(out.protocol_version));
  }
  out.max_window = require_field<std::size_t>(h, "max_window");
  out.schedule_T = require_field<int>(h, "schedule_T");
  out.model_id = require_field<std::string>(h, "model_id");
  out.resize_method = h.value("resize_method", std::string{});
  if (out.max_window < 1 || out.schedule_T < 1) {
    throw std::runtime_error("bridge handshake advertises empty capabilities");
  }
  return out;
}

std::vector<std::uint8_t> encode_request(const RewardRequest& req) {
  if (req.pixels.size() != req.frames * req.height * req.width * 3) {
    throw std::invalid_argument("reward request pixel buffer does not match its shape");
  }
  json h = {{"type", "reward"},       {"id", req.id},
            {"caption", req.caption}, {"t_noise", req.t_noise},
            {"seed", req.seed},       {"frames", req.frames},
            {"height", req.height},   {"width", req.width},
            {"channels", 3},          {"payload_bytes", req.pixels.size()}};
  return encode_message(h, req.pixels);
}

RewardRequest parse_request(const BridgeMessage& msg) {
  const json& h = msg.header;
  if (h.value("type", std::string{}) != "reward") throw std::runtime_error("not a reward request");
  RewardRequest r;
  r.id = require_field<std::uint64_t>(h, "id");
  r.caption = require_field<std::string>(h, "caption");
  r.t_noise = require_field<int>(h, "t_noise");
  r.seed = require_field<std::uint64_t>(h, "seed");
  r.frames = require_field<std::size_t>(h, "frames");
  r.height = require_field<std::size_t>(h, "height");
  r.width = require_field<std::size_t>(h, "width");
  if (require_field<int>(h, "channels") != 3) throw std::runtime_error("reward request must be RGB");
  if (msg.payload.size() != r.frames * r.height * r.width * 3) {
    throw std::runtime_error("reward request payload does not match its shape");
  }
  r.pixels = msg.payload;
  return r;
}

std::vector<std::uint8_t> encode_response(const RewardResponse& resp) {
  json h = {{"id", resp.id}};
  if (resp.error) {
    h["error"] = *resp.error;
  } else {
    h["r_align"] = resp.r_align;
    h["r_rec"] = resp.r_rec;
  }
  return encode_message(h);
}

RewardResponse parse_response(const BridgeMessage& msg) {
  const json& h = msg.header;
  RewardResponse r;
  r.id = require_field<std::uint64_t>(h, "id");
  if (h.contains("error")) {
    r.error = require_field<std::string>(h, "error");
    return r;
  }
  r.r_align = require_field<std::vector<double>>(h, "r_align");
  r.r_rec = require_field<std::vector<double>>(h, "r_rec");
  if (r.r_align.size() != r.r_rec.size()) {
    throw std::runtime_error("bridge response term arrays differ in length");
  }
  return r;
}

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw std::invalid_argument("bridge endpoint must be HOST:PORT, got '" + text + "'");
  }
  Endpoint e;
  e.host = text.substr(0, colon);
  try {
    std::size_t used = 0;
    const int port = std::stoi(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1 || port < 1 || port > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(port);
  } catch (const std::logic_error&) {
    throw std::invalid_argument("bad port in bridge endpoint '" + text + "'");
  }
  return e;
}

BridgeConnection::BridgeConnection(const Endpoint& endpoint,
                                   std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(endpoint.port);
  if (int rc = ::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw std::runtime_error("cannot resolve bridge host '" + endpoint.host +
                             "': " + ::gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd_ < 0) {
      last_error = std::strerror(errno);
      continue;
    }
    if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
    last_error = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) {
    throw std::runtime_error("cannot connect to bridge at " + endpoint.host + ":" + port +
                             ": " + last_error);
  }
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

BridgeConnection::~BridgeConnection() {
  if (fd_ >= 0) ::close(fd_);
}

void BridgeConnection::send(std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    pollfd p{fd_, POLLOUT, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(timeout_.count()));
    if (rc == 0) throw std::runtime_error("bridge send timed out");
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("bridge poll failed: ") + std::strerror(errno));
    }
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw std::runtime_error(std::string("bridge send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

void BridgeConnection::read_exact(std::uint8_t* dst, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(timeout_.count()));
    if (rc == 0) throw std::runtime_error("bridge response timed out");
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("bridge poll failed: ") + std::strerror(errno));
    }
    const ssize_t r = ::recv(fd_, dst + got, n - got, 0);
    if (r == 0) throw std::runtime_error("bridge closed the connection");
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw std::runtime_error(std::string("bridge recv failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
}

BridgeMessage BridgeConnection::receive() {
  std::uint8_t prefix[4];
  read_exact(prefix, 4);
  const std::uint32_t len = read_be32(prefix);
  if (len > kMaxHeaderBytes) throw std::runtime_error("bridge header length is implausible");
  std::vector<std::uint8_t> head(len);
  read_exact(head.data(), len);
  BridgeMessage msg;
  msg.header = parse_header(head.data(), head.size());
  msg.payload.resize(payload_size(msg.header));
  read_exact(msg.payload.data(), msg.payload.size());
  return msg;
}

BridgeClient::BridgeClient(const Endpoint& endpoint, BridgeOptions options)
    : conn_(endpoint, options.timeout),
      options_(options),
      handshake_(parse_handshake(conn_.receive())),
      schedule_(build_linear_schedule(handshake_.schedule_T, options.beta_start,
                                      options.beta_end)) {}

WindowTerms BridgeClient::window_terms(std::span<const Tensor> frames,
                                       const Prompt& prompt, const NoiseDraw& draw) {
  if (prompt.kind() != Prompt::Kind::caption) {
    throw std::invalid_argument("bridge backend needs a caption prompt");
  }
  if (frames.empty() || frames.size() > handshake_.max_window) {
    throw std::invalid_argument("window of " + std::to_string(frames.size()) +
                                " frames outside bridge limit 1.." +
                                std::to_string(handshake_.max_window));
  }
  schedule_.require_level(draw.t_noise);

  RewardRequest req;
  req.id = next_id_++;
  req.caption = prompt.text();
  req.t_noise = draw.t_noise;
  req.seed = draw.seed;
  req.frames = frames.size();
  for (const Tensor& f : frames) {
    if (f.shape().size() != 2) throw std::invalid_argument("bridge frames must be [H, W]");
    const std::size_t h = options_.upscale ? options_.upscale : f.shape()[0];
    const std::size_t w = options_.upscale ? options_.upscale : f.shape()[1];
    if (req.height == 0) {
      req.height = h;
      req.width = w;
    }
    auto rgb = upscale_rgb8(f, h, w);
    req.pixels.insert(req.pixels.end(), rgb.begin(), rgb.end());
  }
  conn_.send(encode_request(req));
  const RewardResponse resp = parse_response(conn_.receive());
  // Requests the bridge could not parse are answered with id 0.
  if (resp.error && (resp.id == req.id || resp.id == 0)) {
    throw std::runtime_error("bridge error: " + *resp.error);
  }
  if (resp.id != req.id) {
    throw std::runtime_error("bridge response id " + std::to_string(resp.id) +
                             " does not match request " + std::to_string(req.id));
  }
  if (resp.r_align.size() != frames.size()) {
    throw std::runtime_error("bridge returned terms for the wrong number of frames");
  }
  return {resp.r_align, resp.r_rec};
}

WindowTerms remote_reward_terms(std::span<const Tensor> frames,
                                const Prompt& prompt, int t_noise,
                                std::uint64_t seed, BridgeClient& client) {
  return client.window_terms(frames, prompt, {t_noise, seed});
}

}  // namespace tadpole
