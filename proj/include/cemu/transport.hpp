#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cemu/config.hpp"
#include "cemu/dag.hpp"
#include "cemu/frame.hpp"
#include "cemu/net.hpp"

namespace cemu {

class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& what)
      : std::runtime_error(what) {}
};

// One declared collective call: what will be issued, in order, per iteration.
// For all-gather `bytes` is the per-rank block size.
struct CollectivePlanEntry {
  CollKind kind = CollKind::kAllReduce;
  uint64_t bytes = 0;
  uint32_t elem_size = 1;

  bool operator==(const CollectivePlanEntry&) const = default;
};

// HELLO/TOPO payload: identity, config digest and the declared plan. Digests
// must match on both sides before any collective traffic flows.
struct SessionHello {
  int32_t rank = -1;  // -1 = the emulated environment
  uint32_t world_size = 0;
  uint64_t config_digest = 0;
  std::vector<CollectivePlanEntry> plan;
};

std::vector<uint8_t> encode_hello(const SessionHello& h);
SessionHello decode_hello(const std::vector<uint8_t>& payload);

// Deterministic dummy payload: zero bytes. The numeric content is explicitly
// meaningless; zeros make the real node's reductions predictable (additive
// identity).
std::vector<uint8_t> dummy_payload(size_t size);

// Framed, thread-safe connection. Writes are serialized so frames are never
// interleaved; reads are expected from a single reader thread.
class FrameConn {
 public:
  explicit FrameConn(TcpSocket sock) : sock_(std::move(sock)) {}

  void write_frame(const Frame& f);

  // DATA frame with the payload taken from caller-owned memory (no copy into
  // the frame object).
  void write_data(const Frame& header, std::span<const uint8_t> payload);

  // DATA frame whose payload is `payload_len` zero bytes, streamed from a
  // static block instead of materializing the buffer.
  void write_data_zero(const Frame& header, uint64_t payload_len);

  // Blocking. nullopt on clean EOF.
  std::optional<Frame> read_frame();

  void write_error(const std::string& reason);
  void shutdown();
  void set_read_timeout_ms(int ms) { sock_.set_recv_timeout_ms(ms); }

 private:
  TcpSocket sock_;
  std::mutex write_mu_;
  FrameReader reader_;
  std::vector<uint8_t> rbuf_;
};

enum class HandshakeRole { kInitiator, kResponder };

// HELLO/TOPO exchange. The initiator offers its identity and plan; the
// responder verifies the config digest (and, when `enforce_plan_match`, the
// plan) and answers with TOPO. Mismatches produce an ERROR frame and a
// TransportError. Returns the peer's hello.
SessionHello perform_handshake(FrameConn& conn, HandshakeRole role,
                               const SessionHello& mine,
                               bool enforce_plan_match,
                               int timeout_ms = 10000);

}  // namespace cemu
