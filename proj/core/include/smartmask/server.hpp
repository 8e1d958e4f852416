#pragma once

// Real-time device service.
//
// A single simulation thread advances an unbounded co-simulation, paced by
// the wall clock. Networking runs on a separate I/O thread; the two sides only
// exchange ordered queues (commands and sim controls in, tick broadcasts out).
//
// Device port: binary frames. Every connection is its own session with its
// own outbound sequence counter. TELEMETRY goes out every tick, STATUS every
// `status_every` ticks, ALERTs when raised, ACKs only to the sender.
//
// Gateway port: WebSocket, one JSON object per text message (see gateway.hpp).
// Each gateway client is bridged through its own device-port connection.
//
// With a key, all frames in both directions are encrypted. Device-side nonce
// prefixes have the high bit set; clients must use prefixes below 0x80000000,
// distinct per connection.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "smartmask/protocol.hpp"
#include "smartmask/scenario.hpp"

namespace smartmask::server {

struct ServeOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t device_port = 7450;  // 0 picks a free port
  std::uint16_t gateway_port = 7451;  // 0 picks a free port
  double speed = 1.0;  // simulated seconds per wall-clock second
  std::size_t status_every = 5;
  std::optional<protocol::SessionKey::KeyBytes> key;
};

class DeviceServer {
 public:
  DeviceServer(runner::ScenarioConfig cfg, ServeOptions options);
  ~DeviceServer();
  DeviceServer(const DeviceServer&) = delete;
  DeviceServer& operator=(const DeviceServer&) = delete;

  // Binds both ports and starts the threads. Throws IoError when a port
  // cannot be bound.
  void start();
  // Idempotent; safe from any thread and from signal handlers' posted work.
  void stop();
  // Blocks until stop() has been called and the threads have exited.
  void wait();

  std::uint16_t device_port() const;
  std::uint16_t gateway_port() const;
  // Control ticks completed so far.
  std::size_t ticks() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace smartmask::server
