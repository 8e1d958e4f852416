#include "smartmask/server.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <thread>
#include <variant>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>

#include "smartmask/errors.hpp"
#include "smartmask/gateway.hpp"
#include "smartmask/logging.hpp"
#include "smartmask/report.hpp"
#include "smartmask/simulation.hpp"
#include "smartmask/stream.hpp"

namespace smartmask::server {

namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

constexpr std::uint32_t kDeviceNoncePrefix = 0x80000000u;
// A client that falls this far behind is disconnected.
constexpr std::size_t kMaxQueuedWrites = 4096;

struct SetSpeedRequest {
  double speed = 1.0;
};

using Inbound = std::variant<runner::QueuedCommand, env::EmissionEvent, SetSpeedRequest>;

struct Broadcast {
  std::vector<runner::RoutedAck> acks;
  std::vector<protocol::Alert> alerts;
  protocol::Telemetry telemetry;
  std::optional<protocol::Status> status;
  std::string ground_truth;
};

std::uint8_t percent(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 100L));
}

Broadcast make_broadcast(const runner::TickRecord& rec, const env::EnvState& env,
                         bool with_status) {
  Broadcast b;
  b.acks = rec.acks;
  for (const auto a : rec.alerts) b.alerts.push_back({static_cast<std::uint8_t>(a)});
  auto& t = b.telemetry;
  t.timestamp_ms = static_cast<std::uint32_t>(std::llround(rec.time * 1000.0));
  for (std::size_t i = 0; i < protocol::kPmBins && i < rec.mask.number.size(); ++i) {
    t.number[i] = static_cast<float>(rec.mask.number[i]);
    t.mass[i] = static_cast<float>(rec.mask.mass[i]);
  }
  t.temperature = static_cast<float>(rec.ambient.temperature_c);
  t.rh = static_cast<float>(rec.ambient.relative_humidity);
  t.risk = static_cast<std::uint8_t>(rec.risk);
  if (with_status) {
    protocol::Status s;
    s.battery_pct = percent(rec.resources.battery_pct);
    s.liquid_pct = percent(rec.resources.liquid_pct);
    s.mode = static_cast<std::uint8_t>(rec.mode);
    s.spraying = rec.spraying ? 1 : 0;
    s.cumulative_exposure = static_cast<float>(rec.cumulative_exposure);
    b.status = s;
  }
  b.ground_truth = gateway::ground_truth_to_json(rec, env).dump();
  return b;
}

}  // namespace

class DeviceSession;
class GatewaySession;

struct Core {
  Core(runner::ScenarioConfig c, ServeOptions o)
      : cfg(std::move(c)), options(std::move(o)), device_acceptor(io), gateway_acceptor(io) {}

  runner::ScenarioConfig cfg;
  ServeOptions options;
  asio::io_context io;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
  tcp::acceptor device_acceptor;
  tcp::acceptor gateway_acceptor;
  std::uint16_t bound_device_port = 0;
  std::uint16_t bound_gateway_port = 0;

  // I/O thread only.
  std::map<std::uint64_t, std::shared_ptr<DeviceSession>> devices;
  std::map<std::uint64_t, std::shared_ptr<GatewaySession>> gateways;
  std::uint64_t next_session_id = 1;

  // Simulation inbox.
  std::mutex inbox_mutex;
  std::condition_variable inbox_cv;
  std::deque<Inbound> inbox;

  std::atomic<bool> stopping{false};
  std::atomic<std::size_t> tick_count{0};
  std::thread io_thread;
  std::thread sim_thread;
  std::mutex lifecycle_mutex;
  bool started = false;
  bool joined = false;

  void submit(Inbound item) {
    {
      std::lock_guard lock(inbox_mutex);
      inbox.push_back(std::move(item));
    }
    inbox_cv.notify_one();
  }

  void bind(tcp::acceptor& acceptor, std::uint16_t port, const char* what);
  void accept_devices();
  void accept_gateways();
  void simulation_loop();
  void fan_out(const Broadcast& b);
  void close_all();
};

class DeviceSession : public std::enable_shared_from_this<DeviceSession> {
 public:
  DeviceSession(Core& owner, tcp::socket socket, std::uint64_t id)
      : owner_(owner), socket_(std::move(socket)), id_(id) {
    if (owner_.options.key) key_.emplace(*owner_.options.key, kDeviceNoncePrefix | (id & 0x7fffffffu));
  }

  void start() { read(); }

  void send(const protocol::Message& message) {
    if (closed_) return;
    try {
      out_.push_back(key_ ? protocol::encode_frame(message, seq_++, *key_)
                          : protocol::encode_frame(message, seq_++));
    } catch (const protocol::EncodeError& e) {
      log::error(fmt::format("device session {}: {}", id_, e.what()));
      return;
    }
    if (out_.size() > kMaxQueuedWrites) {
      log::warn(fmt::format("device session {}: client too slow, closing", id_));
      close();
      return;
    }
    if (out_.size() == 1) write();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    boost::system::error_code ignored;
    socket_.shutdown(tcp::socket::shutdown_both, ignored);
    socket_.close(ignored);
    owner_.devices.erase(id_);
  }

 private:
  void read() {
    socket_.async_read_some(asio::buffer(buffer_),
                            [self = shared_from_this()](boost::system::error_code ec, std::size_t n) {
                              if (ec) {
                                log::debug(fmt::format("device session {} closed: {}", self->id_,
                                                       ec.message()));
                                self->close();
                                return;
                              }
                              self->handle(std::span(self->buffer_.data(), n));
                              if (!self->closed_) self->read();
                            });
  }

  void handle(std::span<const std::uint8_t> bytes) {
    for (const auto& frame : reassembler_.feed(bytes)) {
      const auto result = key_ ? protocol::decode_frame(frame, *key_) : protocol::decode_frame(frame);
      if (const auto* error = std::get_if<protocol::DecodeError>(&result)) {
        log::warn(fmt::format("device session {}: dropped frame ({})", id_, protocol::to_string(*error)));
        continue;
      }
      const auto& decoded = std::get<protocol::DecodedFrame>(result);
      if (const auto* command = std::get_if<protocol::Command>(&decoded.message)) {
        owner_.submit(runner::QueuedCommand{id_, decoded.seq, *command});
      } else {
        log::debug(fmt::format("device session {}: ignoring {} frame", id_,
                               protocol::to_string(protocol::message_type(decoded.message))));
      }
    }
  }

  void write() {
    asio::async_write(socket_, asio::buffer(out_.front()),
                      [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
                        if (self->closed_) return;
                        if (ec) {
                          self->close();
                          return;
                        }
                        self->out_.pop_front();
                        if (!self->out_.empty()) self->write();
                      });
  }

  Core& owner_;
  tcp::socket socket_;
  std::uint64_t id_;
  std::optional<protocol::SessionKey> key_;
  std::uint16_t seq_ = 0;
  protocol::StreamReassembler reassembler_;
  std::array<std::uint8_t, 4096> buffer_{};
  std::deque<std::vector<std::uint8_t>> out_;
  bool closed_ = false;
};

class GatewaySession : public std::enable_shared_from_this<GatewaySession> {
 public:
  GatewaySession(Core& owner, tcp::socket socket, std::uint64_t id)
      : owner_(owner), ws_(std::move(socket)), device_(owner.io), id_(id) {
    if (owner_.options.key) key_.emplace(*owner_.options.key, static_cast<std::uint32_t>(id & 0x7fffffffu));
  }

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) {
        self->close();
        return;
      }
      self->connect_device();
    });
  }

  bool wants_ground_truth() const { return ground_truth_ && ready_; }

  void send_text(std::string text) {
    if (closed_) return;
    text += '\n';
    out_.push_back(std::move(text));
    if (out_.size() > kMaxQueuedWrites) {
      close();
      return;
    }
    if (out_.size() == 1) write_ws();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    boost::system::error_code ignored;
    device_.shutdown(tcp::socket::shutdown_both, ignored);
    device_.close(ignored);
    beast::get_lowest_layer(ws_).close();
    owner_.gateways.erase(id_);
  }

 private:
  void connect_device() {
    const tcp::endpoint endpoint(asio::ip::make_address(owner_.options.bind_address),
                                 owner_.bound_device_port);
    device_.async_connect(endpoint, [self = shared_from_this()](boost::system::error_code ec) {
      if (ec) {
        self->send_text(gateway::error_to_json("device link failed: " + ec.message()).dump());
        self->close();
        return;
      }
      self->ready_ = true;
      const env::BinGrid grid;
      json bins = json::array();
      for (std::size_t i = 0; i < grid.size(); ++i) bins.push_back(runner::bin_label(grid, i));
      self->send_text(json{{"type", "hello"},
                           {"bins", bins},
                           {"control_dt_s", self->owner_.cfg.control_dt},
                           {"encrypted", self->key_.has_value()}}
                          .dump());
      self->read_ws();
      self->read_device();
    });
  }

  void read_ws() {
    ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->close();
        return;
      }
      const std::string text = beast::buffers_to_string(self->in_.data());
      self->in_.consume(self->in_.size());
      std::size_t start = 0;
      while (start <= text.size()) {
        const std::size_t end = std::min(text.find('\n', start), text.size());
        const std::string line = text.substr(start, end - start);
        if (line.find_first_not_of(" \t\r") != std::string::npos) self->handle_request(line);
        start = end + 1;
      }
      if (!self->closed_) self->read_ws();
    });
  }

  void handle_request(const std::string& line) {
    gateway::Request request;
    try {
      request = gateway::parse_request_line(line, owner_.cfg.calibration.humidifier_rate);
    } catch (const ConfigError& e) {
      send_text(gateway::error_to_json(e.what()).dump());
      return;
    }
    std::visit(
        [this](const auto& r) {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, gateway::SendCommand>) {
            const std::uint16_t seq = seq_++;
            send_device(key_ ? protocol::encode_frame(r.command, seq, *key_)
                             : protocol::encode_frame(r.command, seq));
            send_text(json{{"type", "command_sent"}, {"seq", seq}}.dump());
          } else if constexpr (std::is_same_v<T, gateway::InjectEvent>) {
            owner_.submit(r.event);
            send_text(json{{"type", "event_injected"},
                           {"kind", env::to_string(r.event.kind)},
                           {"total_count", r.event.total_count}}
                          .dump());
          } else if constexpr (std::is_same_v<T, gateway::SetSpeed>) {
            owner_.submit(SetSpeedRequest{r.speed});
            send_text(json{{"type", "speed"}, {"speed", r.speed}}.dump());
          } else {
            ground_truth_ = r.enabled;
            send_text(json{{"type", "ground_truth_subscription"}, {"enabled", r.enabled}}.dump());
          }
        },
        request);
  }

  void read_device() {
    device_.async_read_some(asio::buffer(buffer_),
                            [self = shared_from_this()](boost::system::error_code ec, std::size_t n) {
                              if (ec) {
                                self->close();
                                return;
                              }
                              self->handle_device(std::span(self->buffer_.data(), n));
                              if (!self->closed_) self->read_device();
                            });
  }

  void handle_device(std::span<const std::uint8_t> bytes) {
    for (const auto& frame : reassembler_.feed(bytes)) {
      const auto result = key_ ? protocol::decode_frame(frame, *key_) : protocol::decode_frame(frame);
      if (const auto* error = std::get_if<protocol::DecodeError>(&result)) {
        send_text(gateway::error_to_json(std::string("device frame rejected: ") +
                                         std::string(protocol::to_string(*error)))
                      .dump());
        continue;
      }
      const auto& decoded = std::get<protocol::DecodedFrame>(result);
      send_text(gateway::message_to_json(decoded.message, decoded.seq).dump());
    }
  }

  void send_device(std::vector<std::uint8_t> frame) {
    device_out_.push_back(std::move(frame));
    if (device_out_.size() == 1) write_device();
  }

  void write_device() {
    asio::async_write(device_, asio::buffer(device_out_.front()),
                      [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
                        if (self->closed_) return;
                        if (ec) {
                          self->close();
                          return;
                        }
                        self->device_out_.pop_front();
                        if (!self->device_out_.empty()) self->write_device();
                      });
  }

  void write_ws() {
    ws_.text(true);
    ws_.async_write(asio::buffer(out_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (self->closed_) return;
                      if (ec) {
                        self->close();
                        return;
                      }
                      self->out_.pop_front();
                      if (!self->out_.empty()) self->write_ws();
                    });
  }

  Core& owner_;
  websocket::stream<beast::tcp_stream> ws_;
  tcp::socket device_;
  std::uint64_t id_;
  std::optional<protocol::SessionKey> key_;
  std::uint16_t seq_ = 0;
  beast::flat_buffer in_;
  std::deque<std::string> out_;
  protocol::StreamReassembler reassembler_;
  std::array<std::uint8_t, 4096> buffer_{};
  std::deque<std::vector<std::uint8_t>> device_out_;
  bool ground_truth_ = false;
  bool ready_ = false;
  bool closed_ = false;
};

void Core::bind(tcp::acceptor& acceptor, std::uint16_t port, const char* what) {
  boost::system::error_code ec;
  const auto address = asio::ip::make_address(options.bind_address, ec);
  if (ec) throw ConfigError("invalid bind address", "bind_address");
  const tcp::endpoint endpoint(address, port);
  acceptor.open(endpoint.protocol(), ec);
  if (!ec) acceptor.set_option(tcp::acceptor::reuse_address(true), ec);
  if (!ec) acceptor.bind(endpoint, ec);
  if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw IoError(fmt::format("cannot listen on {} port {}: {}", what, port, ec.message()));
  }
}

void Core::accept_devices() {
  device_acceptor.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    const std::uint64_t id = next_session_id++;
    auto session = std::make_shared<DeviceSession>(*this, std::move(socket), id);
    devices.emplace(id, session);
    log::info(fmt::format("device session {} connected", id));
    session->start();
    accept_devices();
  });
}

void Core::accept_gateways() {
  gateway_acceptor.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
    if (ec) return;
    const std::uint64_t id = next_session_id++;
    auto session = std::make_shared<GatewaySession>(*this, std::move(socket), id);
    gateways.emplace(id, session);
    log::info(fmt::format("gateway client {} connected", id));
    session->start();
    accept_gateways();
  });
}

void Core::fan_out(const Broadcast& b) {
  // Copies: sessions may drop themselves from the maps while sending.
  const auto devs = devices;
  for (const auto& ack : b.acks) {
    if (const auto it = devs.find(ack.origin); it != devs.end()) it->second->send(ack.ack);
  }
  for (const auto& [id, session] : devs) {
    for (const auto& alert : b.alerts) session->send(alert);
    session->send(b.telemetry);
    if (b.status) session->send(*b.status);
  }
  const auto gws = gateways;
  for (const auto& [id, session] : gws) {
    if (session->wants_ground_truth()) session->send_text(b.ground_truth);
  }
}

void Core::simulation_loop() {
  using clock = std::chrono::steady_clock;
  runner::CoSimulation sim(cfg, true);
  double speed = std::clamp(options.speed, 1e-3, 1000.0);
  const auto period = [&] {
    return std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(cfg.control_dt / speed));
  };
  auto next = clock::now();
  const std::size_t status_every = std::max<std::size_t>(options.status_every, 1);

  while (!stopping.load()) {
    std::deque<Inbound> pending;
    {
      std::lock_guard lock(inbox_mutex);
      pending.swap(inbox);
    }
    for (auto& item : pending) {
      if (auto* command = std::get_if<runner::QueuedCommand>(&item)) {
        sim.enqueue(std::move(*command));
      } else if (auto* event = std::get_if<env::EmissionEvent>(&item)) {
        sim.inject(*event);
      } else {
        speed = std::get<SetSpeedRequest>(item).speed;
        next = clock::now();
        log::info(fmt::format("simulation speed set to {}x", speed));
      }
    }

    const std::size_t tick = sim.tick();
    const auto record = sim.advance();
    auto broadcast = make_broadcast(record, sim.environment(), tick % status_every == 0);
    asio::post(io, [this, b = std::move(broadcast)] { fan_out(b); });
    tick_count.fetch_add(1);

    next += period();
    std::unique_lock lock(inbox_mutex);
    // Commands arriving mid-tick wait for the next tick boundary.
    inbox_cv.wait_until(lock, next, [this] { return stopping.load(); });
  }
}

void Core::close_all() {
  boost::system::error_code ignored;
  device_acceptor.close(ignored);
  gateway_acceptor.close(ignored);
  const auto devs = devices;
  for (const auto& [id, s] : devs) s->close();
  const auto gws = gateways;
  for (const auto& [id, s] : gws) s->close();
}

struct DeviceServer::Impl : Core {
  using Core::Core;
};

DeviceServer::DeviceServer(runner::ScenarioConfig cfg, ServeOptions options)
    : impl_(std::make_unique<Impl>(std::move(cfg), std::move(options))) {
  runner::validate(impl_->cfg);
  if (!(impl_->options.speed > 0.0)) throw ConfigError("must be positive", "speed");
}

DeviceServer::~DeviceServer() {
  stop();
  wait();
}

void DeviceServer::start() {
  std::lock_guard lock(impl_->lifecycle_mutex);
  if (impl_->started) return;
  auto& im = *impl_;
  im.bind(im.device_acceptor, im.options.device_port, "device");
  im.bind(im.gateway_acceptor, im.options.gateway_port, "gateway");
  im.bound_device_port = im.device_acceptor.local_endpoint().port();
  im.bound_gateway_port = im.gateway_acceptor.local_endpoint().port();
  im.work.emplace(asio::make_work_guard(im.io));
  im.accept_devices();
  im.accept_gateways();
  im.io_thread = std::thread([&im] { im.io.run(); });
  im.sim_thread = std::thread([&im] {
    try {
      im.simulation_loop();
    } catch (const std::exception& e) {
      log::error(fmt::format("simulation stopped: {}", e.what()));
    }
  });
  im.started = true;
  log::info(fmt::format("device service on {}:{}, gateway on {}:{}", im.options.bind_address,
                        im.bound_device_port, im.options.bind_address, im.bound_gateway_port));
}

void DeviceServer::stop() {
  auto& im = *impl_;
  if (im.stopping.exchange(true)) return;
  im.inbox_cv.notify_all();
  if (!im.started) return;
  asio::post(im.io, [&im] {
    im.close_all();
    im.work.reset();
  });
}

void DeviceServer::wait() {
  auto& im = *impl_;
  std::lock_guard lock(im.lifecycle_mutex);
  if (!im.started || im.joined) return;
  if (im.sim_thread.joinable()) im.sim_thread.join();
  if (im.io_thread.joinable()) im.io_thread.join();
  im.joined = true;
}

std::uint16_t DeviceServer::device_port() const { return impl_->bound_device_port; }
std::uint16_t DeviceServer::gateway_port() const { return impl_->bound_gateway_port; }
std::size_t DeviceServer::ticks() const { return impl_->tick_count.load(); }

}  // namespace smartmask::server
