#include "cemu/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace cemu {

const char* delay_kind_name(DelayKind k) {
  switch (k) {
    case DelayKind::kNone: return "none";
    case DelayKind::kAlphaBeta: return "alpha_beta";
    case DelayKind::kFixed: return "fixed";
  }
  return "none";
}

DelayKind parse_delay_kind(const std::string& s) {
  if (s == "none") return DelayKind::kNone;
  if (s == "alpha_beta") return DelayKind::kAlphaBeta;
  if (s == "fixed") return DelayKind::kFixed;
  throw ConfigError("delay.kind: unknown value '" + s + "'");
}

Endpoint parse_endpoint(const std::string& s) {
  const size_t colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == s.size()) {
    throw ConfigError("endpoint: expected host:port, got '" + s + "'");
  }
  Endpoint ep;
  ep.host = s.substr(0, colon);
  const std::string port_str = s.substr(colon + 1);
  char* end = nullptr;
  const long port = std::strtol(port_str.c_str(), &end, 10);
  if (*end != '\0' || port <= 0 || port > 65535) {
    throw ConfigError("endpoint: bad port '" + port_str + "'");
  }
  ep.port = static_cast<uint16_t>(port);
  return ep;
}

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long r = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE) {
    throw ConfigError(key + ": expected unsigned integer, got '" + v + "'");
  }
  return r;
}

double parse_f64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double r = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') {
    throw ConfigError(key + ": expected number, got '" + v + "'");
  }
  return r;
}

double parse_nonneg(const std::string& key, const std::string& v) {
  const double r = parse_f64(key, v);
  if (r < 0) throw ConfigError(key + ": must be >= 0");
  return r;
}

std::string fmt_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void validate(const JobConfig& cfg) {
  if (cfg.world_size < 2) {
    throw ConfigError("world_size: must satisfy world_size >= 2");
  }
  if (cfg.real_ranks.empty()) {
    throw ConfigError("real_ranks: must be nonempty");
  }
  for (uint32_t r : cfg.real_ranks) {
    if (r >= cfg.world_size) {
      throw ConfigError("real_ranks: rank " + std::to_string(r) +
                        " out of range [0," +
                        std::to_string(cfg.world_size - 1) + "]");
    }
  }
  if (cfg.real_ranks.size() >= cfg.world_size) {
    throw ConfigError(
        "real_ranks: must be a strict subset of all ranks "
        "(at least one rank has to be emulated)");
  }
  if (cfg.bucket_bytes == 0) {
    throw ConfigError("bucket_bytes: must be > 0");
  }
  if (cfg.collective_algo != "ring") {
    throw ConfigError("collective_algo: only 'ring' is supported, got '" +
                      cfg.collective_algo + "'");
  }
  if (cfg.chunk_policy != "one-chunk-per-partition") {
    throw ConfigError("chunk_policy: only 'one-chunk-per-partition' is "
                      "supported, got '" + cfg.chunk_policy + "'");
  }
  if (cfg.link.alpha_us < 0 || cfg.link.beta_us_per_byte < 0 ||
      cfg.link.gamma_us_per_byte < 0) {
    throw ConfigError("link: parameters must be >= 0");
  }
  if (cfg.node_class.size() != cfg.world_size) {
    throw ConfigError("node_class: need one label per rank");
  }
  for (const auto& c : cfg.node_class) {
    if (c != cfg.node_class[0]) {
      throw ConfigError(
          "node_class: non-uniform node classes are not supported; "
          "this build emulates uniform clusters only");
    }
  }
  if (cfg.endpoints.size() != cfg.world_size) {
    throw ConfigError("endpoint: need one endpoint per rank, got " +
                      std::to_string(cfg.endpoints.size()));
  }
  if (cfg.poll_period_us <= 0) {
    throw ConfigError("poll_period_us: must be > 0");
  }
  // Real ranks must each own a unique address; emulated ranks may alias one
  // another (they are typically all served by a single emulator listener) but
  // must never collide with a real rank's address.
  for (uint32_t a = 0; a < cfg.world_size; ++a) {
    for (uint32_t b = a + 1; b < cfg.world_size; ++b) {
      if (cfg.endpoints[a] != cfg.endpoints[b]) continue;
      if (cfg.is_real(a) || cfg.is_real(b)) {
        throw ConfigError("endpoint." + std::to_string(a) + "/endpoint." +
                          std::to_string(b) +
                          ": ranks sharing an endpoint must both be emulated");
      }
    }
  }
}

}  // namespace

JobConfig parse_job_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    }
    if (!kv.emplace(key, val).second) {
      throw ConfigError(key + ": duplicate key");
    }
  }

  JobConfig cfg;
  auto take = [&](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(key + ": missing required key");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto take_opt = [&](const std::string& key,
                      const std::string& dflt) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  cfg.world_size = static_cast<uint32_t>(parse_u64("world_size",
                                                   take("world_size")));
  {
    std::istringstream rs(take("real_ranks"));
    std::string tok;
    while (std::getline(rs, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      cfg.real_ranks.insert(
          static_cast<uint32_t>(parse_u64("real_ranks", tok)));
    }
  }
  cfg.bucket_bytes = parse_u64("bucket_bytes", take("bucket_bytes"));
  cfg.collective_algo = take_opt("collective_algo", "ring");
  cfg.chunk_policy = take_opt("chunk_policy", "one-chunk-per-partition");
  cfg.link.alpha_us = parse_nonneg("link.alpha_us",
                                   take_opt("link.alpha_us", "0"));
  cfg.link.beta_us_per_byte =
      parse_nonneg("link.beta_us_per_byte", take_opt("link.beta_us_per_byte",
                                                     "0"));
  cfg.link.gamma_us_per_byte =
      parse_nonneg("link.gamma_us_per_byte",
                   take_opt("link.gamma_us_per_byte", "0"));
  cfg.delay_kind = parse_delay_kind(take_opt("delay.kind", "none"));
  cfg.delay_fixed_us = parse_nonneg("delay.fixed_us",
                                    take_opt("delay.fixed_us", "0"));
  cfg.delay_inject_us = parse_nonneg("delay.inject_us",
                                     take_opt("delay.inject_us", "0"));
  cfg.poll_period_us = static_cast<int64_t>(
      parse_u64("poll_period_us", take_opt("poll_period_us", "10")));

  // node_class: either one shared label or per-rank node_class.R keys.
  const std::string shared_class = take_opt("node_class", "");
  cfg.node_class.resize(cfg.world_size,
                        shared_class.empty() ? "default" : shared_class);
  cfg.endpoints.resize(cfg.world_size);
  std::vector<bool> have_ep(cfg.world_size, false);
  for (auto it = kv.begin(); it != kv.end();) {
    const std::string& key = it->first;
    if (key.rfind("node_class.", 0) == 0) {
      const uint64_t r = parse_u64(key, key.substr(11));
      if (r >= cfg.world_size) throw ConfigError(key + ": rank out of range");
      cfg.node_class[r] = it->second;
      it = kv.erase(it);
    } else if (key.rfind("endpoint.", 0) == 0) {
      const uint64_t r = parse_u64(key, key.substr(9));
      if (r >= cfg.world_size) throw ConfigError(key + ": rank out of range");
      cfg.endpoints[r] = parse_endpoint(it->second);
      have_ep[r] = true;
      it = kv.erase(it);
    } else {
      ++it;
    }
  }
  for (uint32_t r = 0; r < cfg.world_size; ++r) {
    if (!have_ep[r]) {
      throw ConfigError("endpoint." + std::to_string(r) +
                        ": missing required key");
    }
  }
  if (!kv.empty()) {
    throw ConfigError(kv.begin()->first + ": unknown key");
  }

  validate(cfg);
  return cfg;
}

JobConfig load_job_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_job_config(ss.str());
}

std::string render_job_config(const JobConfig& cfg) {
  std::ostringstream out;
  out << "world_size = " << cfg.world_size << "\n";
  out << "real_ranks = ";
  bool first = true;
  for (uint32_t r : cfg.real_ranks) {
    if (!first) out << ",";
    out << r;
    first = false;
  }
  out << "\n";
  out << "collective_algo = " << cfg.collective_algo << "\n";
  out << "chunk_policy = " << cfg.chunk_policy << "\n";
  out << "bucket_bytes = " << cfg.bucket_bytes << "\n";
  out << "link.alpha_us = " << fmt_f64(cfg.link.alpha_us) << "\n";
  out << "link.beta_us_per_byte = " << fmt_f64(cfg.link.beta_us_per_byte)
      << "\n";
  out << "link.gamma_us_per_byte = " << fmt_f64(cfg.link.gamma_us_per_byte)
      << "\n";
  out << "delay.kind = " << delay_kind_name(cfg.delay_kind) << "\n";
  out << "delay.fixed_us = " << fmt_f64(cfg.delay_fixed_us) << "\n";
  out << "delay.inject_us = " << fmt_f64(cfg.delay_inject_us) << "\n";
  out << "poll_period_us = " << cfg.poll_period_us << "\n";
  for (uint32_t r = 0; r < cfg.world_size; ++r) {
    out << "node_class." << r << " = " << cfg.node_class[r] << "\n";
  }
  for (uint32_t r = 0; r < cfg.world_size; ++r) {
    out << "endpoint." << r << " = " << cfg.endpoints[r].str() << "\n";
  }
  return out.str();
}

uint64_t config_digest(const JobConfig& cfg) {
  const std::string text = render_job_config(cfg);
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

TopologyGraph synthesize_global_topology(const JobConfig& cfg) {
  TopologyGraph topo;
  topo.nodes.resize(cfg.world_size);
  for (uint32_t r = 0; r < cfg.world_size; ++r) {
    topo.nodes[r].node_class = cfg.node_class[r];
    topo.nodes[r].is_real = cfg.is_real(r);
  }
  // Edge structure is a function of the rank set alone; emulated nodes get
  // the same fabricated link records as real ones.
  for (uint32_t r = 0; r < cfg.world_size; ++r) {
    TopologyGraph::Edge e;
    e.src = r;
    e.dst = (r + 1) % cfg.world_size;
    e.link = cfg.link;
    topo.edges.push_back(e);
  }
  return topo;
}

bool topology_connected(const TopologyGraph& topo) {
  const size_t n = topo.nodes.size();
  if (n == 0) return false;
  std::vector<std::vector<uint32_t>> adj(n);
  for (const auto& e : topo.edges) {
    if (e.src >= n || e.dst >= n) return false;
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  std::vector<bool> seen(n, false);
  std::vector<uint32_t> stack{0};
  seen[0] = true;
  size_t count = 1;
  while (!stack.empty()) {
    const uint32_t u = stack.back();
    stack.pop_back();
    for (uint32_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count == n;
}

RingOrder::RingOrder(uint32_t n) : n_(n) {
  if (n < 2) throw ConfigError("ring: need at least 2 ranks");
  order_.resize(n);
  for (uint32_t i = 0; i < n; ++i) order_[i] = i;
}

uint32_t RingOrder::successor(uint32_t rank) const {
  return (rank + 1) % n_;
}

uint32_t RingOrder::predecessor(uint32_t rank) const {
  return (rank + n_ - 1) % n_;
}

RingOrder ring_order(const TopologyGraph& topo) {
  return RingOrder(static_cast<uint32_t>(topo.nodes.size()));
}

}  // namespace cemu
