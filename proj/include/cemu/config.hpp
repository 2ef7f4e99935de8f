#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace cemu {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Classical collective cost-model parameters: per-message latency, per-byte
// transfer time, per-byte reduction time. All microseconds.
struct LinkParams {
  double alpha_us = 0.0;
  double beta_us_per_byte = 0.0;
  double gamma_us_per_byte = 0.0;

  bool operator==(const LinkParams&) const = default;
};

enum class DelayKind { kNone, kAlphaBeta, kFixed };

const char* delay_kind_name(DelayKind k);
DelayKind parse_delay_kind(const std::string& s);

struct Endpoint {
  std::string host;
  uint16_t port = 0;

  bool operator==(const Endpoint&) const = default;
  std::string str() const { return host + ":" + std::to_string(port); }
};

Endpoint parse_endpoint(const std::string& s);

// Full job description: world size, which ranks are real, link model,
// bucketing, delay injection and per-rank endpoints. Immutable once parsed.
struct JobConfig {
  uint32_t world_size = 0;
  std::set<uint32_t> real_ranks;
  std::vector<std::string> node_class;  // one label per rank, must be uniform
  LinkParams link;
  std::string collective_algo = "ring";
  uint64_t bucket_bytes = 0;
  std::string chunk_policy = "one-chunk-per-partition";
  DelayKind delay_kind = DelayKind::kNone;
  double delay_fixed_us = 0.0;
  double delay_inject_us = 0.0;
  int64_t poll_period_us = 10;
  std::vector<Endpoint> endpoints;  // one per rank

  bool operator==(const JobConfig&) const = default;

  bool is_real(uint32_t rank) const { return real_ranks.count(rank) != 0; }
};

// Parse the documented key=value config format; throws ConfigError naming the
// offending field on malformed input or invariant violations.
JobConfig parse_job_config(const std::string& text);
JobConfig load_job_config(const std::string& path);

// Canonical textual form; parse_job_config(render_job_config(c)) == c.
std::string render_job_config(const JobConfig& cfg);

// FNV-1a 64 over the canonical rendering; both ends of a connection must
// agree on it before any collective traffic flows.
uint64_t config_digest(const JobConfig& cfg);

// Rank-indexed node records plus link-annotated ring edges. Emulated nodes
// carry fabricated records with the same shape as real ones.
struct TopologyGraph {
  struct Node {
    std::string node_class;
    bool is_real = false;
  };
  struct Edge {
    uint32_t src = 0;
    uint32_t dst = 0;
    LinkParams link;
  };
  std::vector<Node> nodes;
  std::vector<Edge> edges;
};

TopologyGraph synthesize_global_topology(const JobConfig& cfg);

// True iff every node is reachable from rank 0 following edges in either
// direction.
bool topology_connected(const TopologyGraph& topo);

// Deterministic ring: ascending rank order. Both sides of a connection derive
// it independently, so it must be a pure function of the rank set.
class RingOrder {
 public:
  explicit RingOrder(uint32_t n);

  uint32_t size() const { return n_; }
  uint32_t successor(uint32_t rank) const;
  uint32_t predecessor(uint32_t rank) const;
  const std::vector<uint32_t>& order() const { return order_; }

  bool operator==(const RingOrder& o) const { return order_ == o.order_; }

 private:
  uint32_t n_;
  std::vector<uint32_t> order_;
};

RingOrder ring_order(const TopologyGraph& topo);

}  // namespace cemu
