#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tadpole/reward.hpp"

namespace tadpole {

// Wire format: 4-byte big-endian length of the JSON header, the header as
// compact UTF-8 JSON with sorted keys, then `payload_bytes` raw bytes.
struct BridgeMessage {
  nlohmann::json header;
  std::vector<std::uint8_t> payload;
};

inline constexpr int kBridgeProtocolVersion = 1;
// Header length cap; anything larger is treated as a corrupt stream.
inline constexpr std::uint32_t kMaxHeaderBytes = 1u << 24;

std::vector<std::uint8_t> encode_message(const nlohmann::json& header,
                                         std::span<const std::uint8_t> payload = {});

// Decodes exactly one message occupying all of `bytes`.
BridgeMessage decode_message(std::span<const std::uint8_t> bytes);

struct Handshake {
  int protocol_version = kBridgeProtocolVersion;
  std::size_t max_window = 1;
  int schedule_T = 1000;
  std::string model_id;
  std::string resize_method;
};

nlohmann::json handshake_header(const Handshake& h);
Handshake parse_handshake(const BridgeMessage& msg);

// Frames are row-major RGB8, frame after frame.
struct RewardRequest {
  std::uint64_t id = 0;
  std::string caption;
  int t_noise = 0;
  std::uint64_t seed = 0;
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

std::vector<std::uint8_t> encode_request(const RewardRequest& req);
RewardRequest parse_request(const BridgeMessage& msg);

struct RewardResponse {
  std::uint64_t id = 0;
  std::vector<double> r_align;
  std::vector<double> r_rec;
  std::optional<std::string> error;
};

std::vector<std::uint8_t> encode_response(const RewardResponse& resp);
RewardResponse parse_response(const BridgeMessage& msg);

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

Endpoint parse_endpoint(const std::string& text);

// Blocking TCP stream with a per-operation timeout.
class BridgeConnection {
 public:
  BridgeConnection(const Endpoint& endpoint, std::chrono::milliseconds timeout);
  ~BridgeConnection();
  BridgeConnection(const BridgeConnection&) = delete;
  BridgeConnection& operator=(const BridgeConnection&) = delete;

  void send(std::span<const std::uint8_t> bytes);
  BridgeMessage receive();

 private:
  void read_exact(std::uint8_t* dst, std::size_t n);
  int fd_ = -1;
  std::chrono::milliseconds timeout_;
};

struct BridgeOptions {
  std::chrono::milliseconds timeout{120000};
  // Frames are upscaled nearest-neighbour to this size before sending;
  // 0 sends the native resolution.
  std::size_t upscale = 512;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

// Term source backed by a bridge process. One request in flight at a time.
class BridgeClient final : public TermSource {
 public:
  BridgeClient(const Endpoint& endpoint, BridgeOptions options = {});

  WindowTerms window_terms(std::span<const Tensor> frames, const Prompt& prompt,
                           const NoiseDraw& draw) override;
  std::size_t max_window() const override { return handshake_.max_window; }
  const NoiseSchedule& schedule() const override { return schedule_; }
  const Handshake& handshake() const { return handshake_; }

 private:
  BridgeConnection conn_;
  BridgeOptions options_;
  Handshake handshake_;
  NoiseSchedule schedule_;
  std::uint64_t next_id_ = 1;
};

// Raw per-frame terms computed bridge-side for a caption prompt.
WindowTerms remote_reward_terms(std::span<const Tensor> frames,
                                const Prompt& prompt, int t_noise,
                                std::uint64_t seed, BridgeClient& client);

}  // namespace tadpole
