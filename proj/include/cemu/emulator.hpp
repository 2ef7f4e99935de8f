#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "cemu/config.hpp"
#include "cemu/delay.hpp"
#include "cemu/engine.hpp"
#include "cemu/net.hpp"
#include "cemu/transport.hpp"

namespace cemu {

// The emulated environment as a process: accepts the real node's connection,
// adopts its declared collective plan at handshake, then replays the
// boundary-projected message DAG with dummy payloads and modeled delays.
//
// One TCP connection carries all emulated peers; src/dst rank fields
// disambiguate the virtual endpoints. The emulator therefore requires every
// emulated rank in the config to share a single listen endpoint.
class EmulatorServer {
 public:
  struct Options {
    bool once = false;           // serve one session, then return
    int64_t poll_period_us = 0;  // 0 = take it from the config
    std::optional<Endpoint> listen;  // bind here instead of the config value
  };

  explicit EmulatorServer(const JobConfig& cfg)
      : EmulatorServer(cfg, Options()) {}
  EmulatorServer(const JobConfig& cfg, Options opts);

  Endpoint listen_endpoint() const { return listen_ep_; }

  // Accept loop; blocks. Returns after one session when options.once.
  void serve();

  // Asks serve() to wind down after the current session.
  void request_stop() { stop_.store(true); }

  // Sessions handled so far (for tests).
  uint64_t sessions_served() const { return sessions_; }

 private:
  void handle_session(TcpSocket sock);

  JobConfig cfg_;
  Options opts_;
  Endpoint listen_ep_;
  TcpListener listener_;
  std::atomic<bool> stop_{false};
  uint64_t sessions_ = 0;
};

// The unique endpoint shared by all emulated ranks; throws ConfigError if the
// config maps emulated ranks to more than one address.
Endpoint emulator_endpoint(const JobConfig& cfg);

}  // namespace cemu
