#include <chrono>
#include <deque>
#include <functional>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "smartmask/errors.hpp"
#include "smartmask/server.hpp"
#include "smartmask/stream.hpp"

namespace smartmask::server {
namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using asio::ip::tcp;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr auto kDeadline = std::chrono::seconds(10);

runner::ScenarioConfig quiet_config() {
  runner::ScenarioConfig cfg;
  cfg.calibration = runner::default_calibration();
  return cfg;
}

ServeOptions fast_options() {
  ServeOptions o;
  o.device_port = 0;
  o.gateway_port = 0;
  o.speed = 50.0;
  return o;
}

// Blocking device-port client. The server streams telemetry every tick, so
// reads never stall for long.
class DeviceClient {
 public:
  explicit DeviceClient(std::uint16_t port) : socket_(io_) {
    socket_.connect({asio::ip::make_address("127.0.0.1"), port});
  }

  void send(const protocol::Message& m, std::uint16_t seq) {
    asio::write(socket_, asio::buffer(protocol::encode_frame(m, seq)));
  }

  // Reads frames until `pred` accepts one; returns it, or nullopt on timeout.
  std::optional<protocol::DecodedFrame> until(
      const std::function<bool(const protocol::DecodedFrame&)>& pred) {
    const auto end = Clock::now() + kDeadline;
    std::array<std::uint8_t, 4096> buf{};
    while (Clock::now() < end) {
      while (!ready_.empty()) {
        auto frame = std::move(ready_.front());
        ready_.pop_front();
        const auto decoded = protocol::decode_frame(frame);
        if (const auto* f = std::get_if<protocol::DecodedFrame>(&decoded)) {
          seqs_.push_back(f->seq);
          if (pred(*f)) return *f;
        }
      }
      const auto n = socket_.read_some(asio::buffer(buf));
      for (auto& f : reassembler_.feed(std::span(buf.data(), n))) ready_.push_back(std::move(f));
    }
    return std::nullopt;
  }

  const std::vector<std::uint16_t>& seqs() const { return seqs_; }

 private:
  asio::io_context io_;
  tcp::socket socket_;
  protocol::StreamReassembler reassembler_;
  std::deque<std::vector<std::uint8_t>> ready_;
  std::vector<std::uint16_t> seqs_;
};

class GatewayClient {
 public:
  explicit GatewayClient(std::uint16_t port) : ws_(io_) {
    beast::get_lowest_layer(ws_).connect({asio::ip::make_address("127.0.0.1"), port});
    ws_.handshake("127.0.0.1", "/");
  }

  void send(const json& j) { ws_.write(asio::buffer(j.dump())); }

  std::optional<json> until(const std::function<bool(const json&)>& pred) {
    const auto end = Clock::now() + kDeadline;
    while (Clock::now() < end) {
      beast::flat_buffer buffer;
      ws_.read(buffer);
      const auto j = json::parse(beast::buffers_to_string(buffer.data()));
      if (pred(j)) return std::make_optional(j);
    }
    return std::nullopt;
  }

 private:
  asio::io_context io_;
  websocket::stream<tcp::socket> ws_;
};

bool is_telemetry(const protocol::DecodedFrame& f) {
  return std::holds_alternative<protocol::Telemetry>(f.message);
}

TEST(Server, EphemeralPortsAndTelemetry) {
  DeviceServer server(quiet_config(), fast_options());
  server.start();
  EXPECT_NE(server.device_port(), 0);
  EXPECT_NE(server.gateway_port(), 0);
  EXPECT_NE(server.device_port(), server.gateway_port());
  DeviceClient client(server.device_port());
  EXPECT_TRUE(client.until(is_telemetry));
  EXPECT_TRUE(client.until([](const auto& f) {
    return std::holds_alternative<protocol::Status>(f.message);
  }));
  server.stop();
  server.wait();
  EXPECT_GT(server.ticks(), 0u);
}

TEST(Server, SetModeAckedWithinOneTick) {
  DeviceServer server(quiet_config(), fast_options());
  server.start();
  DeviceClient client(server.device_port());
  ASSERT_TRUE(client.until(is_telemetry));
  client.send(protocol::make_set_mode(1), 321);
  std::size_t telemetry_seen = 0;
  const auto ack = client.until([&](const auto& f) {
    if (is_telemetry(f)) ++telemetry_seen;
    return std::holds_alternative<protocol::Ack>(f.message);
  });
  ASSERT_TRUE(ack);
  const auto& a = std::get<protocol::Ack>(ack->message);
  EXPECT_EQ(a.seq, 321);
  EXPECT_EQ(a.status, static_cast<std::uint8_t>(protocol::AckStatus::ok));
  // The command lands on the next tick boundary; allow one tick in flight.
  EXPECT_LE(telemetry_seen, 2u);
  const auto status = client.until([](const auto& f) {
    return std::holds_alternative<protocol::Status>(f.message);
  });
  ASSERT_TRUE(status);
  EXPECT_EQ(std::get<protocol::Status>(status->message).mode, 1);
}

TEST(Server, PerSessionSequenceNumbers) {
  DeviceServer server(quiet_config(), fast_options());
  server.start();
  DeviceClient a(server.device_port());
  DeviceClient b(server.device_port());
  for (int i = 0; i < 10; ++i) {
    ASSERT_TRUE(a.until(is_telemetry));
    ASSERT_TRUE(b.until(is_telemetry));
  }
  for (const auto* c : {&a, &b}) {
    const auto& s = c->seqs();
    EXPECT_EQ(s.front(), 0);
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_EQ(s[i], static_cast<std::uint16_t>(s[i - 1] + 1));
  }
}

TEST(Server, PortInUseRaisesIoError) {
  DeviceServer first(quiet_config(), fast_options());
  first.start();
  auto options = fast_options();
  options.device_port = first.device_port();
  DeviceServer second(quiet_config(), options);
  EXPECT_THROW(second.start(), IoError);
}

TEST(Server, RejectsBadOptions) {
  auto options = fast_options();
  options.speed = 0.0;
  EXPECT_THROW(DeviceServer(quiet_config(), options), ConfigError);
  auto cfg = quiet_config();
  cfg.control_dt = 0.25;
  EXPECT_THROW(DeviceServer(cfg, fast_options()), ConfigError);
}

TEST(Server, StopIsIdempotent) {
  DeviceServer server(quiet_config(), fast_options());
  server.start();
  server.stop();
  server.stop();
  server.wait();
  server.wait();
}

TEST(Gateway, HelloCommandAndAck) {
  DeviceServer server(quiet_config(), fast_options());
  server.start();
  GatewayClient client(server.gateway_port());
  const auto hello = client.until([](const json& j) { return j.at("type") == "hello"; });
  ASSERT_TRUE(hello);
  EXPECT_EQ(hello->at("bins").size(), 5u);
  EXPECT_FALSE(hello->at("encrypted").get<bool>());

  client.send({{"type", "command"}, {"command", "set_mode"}, {"mode", "manual"}});
  const auto sent = client.until([](const json& j) { return j.at("type") == "command_sent"; });
  ASSERT_TRUE(sent);
  const auto ack = client.until([](const json& j) { return j.at("type") == "ack"; });
  ASSERT_TRUE(ack);
  EXPECT_EQ(ack->at("ack_seq"), sent->at("seq"));
  EXPECT_EQ(ack->at("status_name"), "ok");

  client.send({{"type", "command"}, {"command", "warp"}});
  EXPECT_TRUE(client.until([](const json& j) { return j.at("type") == "error"; }));
}

TEST(Gateway, InjectedSneezeRaisesCoarseReading) {
  DeviceServer server(quiet_config(), fast_options());
  server.start();
  GatewayClient client(server.gateway_port());
  ASSERT_TRUE(client.until([](const json& j) { return j.at("type") == "telemetry"; }));
  client.send({{"type", "inject_event"}, {"kind", "sneeze"}, {"scale", 10.0}});
  const auto injected = client.until([](const json& j) { return j.at("type") == "event_injected"; });
  ASSERT_TRUE(injected);
  EXPECT_EQ(injected->at("total_count"), 400000.0);
  int ticks = 0;
  const auto risen = client.until([&](const json& j) {
    if (j.at("type") != "telemetry") return false;
    ++ticks;
    double coarse = 0.0;
    for (std::size_t i = 2; i < 5; ++i) coarse += j.at("number")[i].get<double>();
    return coarse > 0.0 || ticks >= 3;
  });
  ASSERT_TRUE(risen);
  EXPECT_LE(ticks, 2);
}

TEST(Gateway, GroundTruthSubscription) {
  DeviceServer server(quiet_config(), fast_options());
  server.start();
  GatewayClient client(server.gateway_port());
  client.send({{"type", "ground_truth"}, {"enabled", true}});
  ASSERT_TRUE(client.until([](const json& j) { return j.at("type") == "ground_truth_subscription"; }));
  const auto truth = client.until([](const json& j) { return j.at("type") == "ground_truth"; });
  ASSERT_TRUE(truth);
  EXPECT_EQ(truth->at("breathing_true").size(), 5u);
}

}  // namespace
}  // namespace smartmask::server
