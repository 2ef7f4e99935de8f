#include "cemu/transport.hpp"

#include <json.hpp>

namespace cemu {

using json = nlohmann::json;

std::vector<uint8_t> encode_hello(const SessionHello& h) {
  json plan = json::array();
  for (const auto& e : h.plan) {
    plan.push_back({{"op", coll_kind_name(e.kind)},
                    {"bytes", e.bytes},
                    {"elem_size", e.elem_size}});
  }
  const json j = {{"rank", h.rank},
                  {"world_size", h.world_size},
                  {"config_digest", h.config_digest},
                  {"plan", plan}};
  const std::string s = j.dump();
  return {s.begin(), s.end()};
}

SessionHello decode_hello(const std::vector<uint8_t>& payload) {
  SessionHello h;
  try {
    const json j = json::parse(payload.begin(), payload.end());
    h.rank = j.at("rank").get<int32_t>();
    h.world_size = j.at("world_size").get<uint32_t>();
    h.config_digest = j.at("config_digest").get<uint64_t>();
    for (const auto& e : j.at("plan")) {
      CollectivePlanEntry entry;
      entry.kind = parse_coll_kind(e.at("op").get<std::string>());
      entry.bytes = e.at("bytes").get<uint64_t>();
      entry.elem_size = e.at("elem_size").get<uint32_t>();
      h.plan.push_back(entry);
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed handshake payload: ") +
                         e.what());
  }
  return h;
}

std::vector<uint8_t> dummy_payload(size_t size) {
  return std::vector<uint8_t>(size, 0);
}

void FrameConn::write_frame(const Frame& f) {
  std::lock_guard<std::mutex> lk(write_mu_);
  const std::vector<uint8_t> bytes = encode_frame(f);
  sock_.write_all(bytes.data(), bytes.size());
}

void FrameConn::write_data(const Frame& header,
                           std::span<const uint8_t> payload) {
  std::lock_guard<std::mutex> lk(write_mu_);
  const std::vector<uint8_t> hdr =
      encode_frame_header(header, static_cast<uint32_t>(payload.size()));
  sock_.write_two(hdr.data(), hdr.size(), payload.data(), payload.size());
}

void FrameConn::write_data_zero(const Frame& header, uint64_t payload_len) {
  static const std::vector<uint8_t> kZeros(8 * 1024 * 1024, 0);
  std::lock_guard<std::mutex> lk(write_mu_);
  const std::vector<uint8_t> hdr =
      encode_frame_header(header, static_cast<uint32_t>(payload_len));
  const size_t first = std::min<uint64_t>(payload_len, kZeros.size());
  sock_.write_two(hdr.data(), hdr.size(), kZeros.data(), first);
  uint64_t left = payload_len - first;
  while (left > 0) {
    const size_t n = std::min<uint64_t>(left, kZeros.size());
    sock_.write_all(kZeros.data(), n);
    left -= n;
  }
}

std::optional<Frame> FrameConn::read_frame() {
  if (rbuf_.empty()) rbuf_.resize(512 * 1024);
  while (true) {
    if (auto f = reader_.next()) return f;
    const size_t n = sock_.read_some(rbuf_.data(), rbuf_.size());
    if (n == 0) {
      if (reader_.buffered_bytes() != 0) {
        throw FrameError("connection closed mid-frame");
      }
      return std::nullopt;
    }
    reader_.feed(rbuf_.data(), n);
  }
}

void FrameConn::write_error(const std::string& reason) {
  Frame f;
  f.type = MsgType::kError;
  f.payload.assign(reason.begin(), reason.end());
  try {
    write_frame(f);
  } catch (const NetError&) {
    // peer already gone; the error is being reported locally anyway
  }
}

void FrameConn::shutdown() { sock_.shutdown_both(); }

SessionHello perform_handshake(FrameConn& conn, HandshakeRole role,
                               const SessionHello& mine,
                               bool enforce_plan_match, int timeout_ms) {
  conn.set_read_timeout_ms(timeout_ms);
  SessionHello peer;
  auto read_expected = [&](MsgType want) -> Frame {
    std::optional<Frame> f;
    try {
      f = conn.read_frame();
    } catch (const NetError& e) {
      throw TransportError(std::string("handshake: ") + e.what());
    }
    if (!f) throw TransportError("handshake: connection closed");
    if (f->type == MsgType::kError) {
      throw TransportError("handshake rejected by peer: " +
                           std::string(f->payload.begin(),
                                       f->payload.end()));
    }
    if (f->type != want) {
      throw TransportError(std::string("handshake: expected ") +
                           msg_type_name(want) + ", got " +
                           msg_type_name(f->type));
    }
    return *f;
  };
  auto check_peer = [&](const SessionHello& got) {
    if (got.config_digest != mine.config_digest ||
        got.world_size != mine.world_size) {
      conn.write_error("config digest mismatch");
      throw TransportError("handshake: config digest mismatch");
    }
    if (enforce_plan_match && got.plan != mine.plan) {
      conn.write_error("collective plan mismatch");
      throw TransportError("handshake: collective plan mismatch");
    }
  };

  if (role == HandshakeRole::kInitiator) {
    Frame hello;
    hello.type = MsgType::kHello;
    hello.payload = encode_hello(mine);
    conn.write_frame(hello);
    peer = decode_hello(read_expected(MsgType::kTopo).payload);
    check_peer(peer);
  } else {
    peer = decode_hello(read_expected(MsgType::kHello).payload);
    check_peer(peer);
    Frame topo;
    topo.type = MsgType::kTopo;
    topo.payload = encode_hello(mine);
    conn.write_frame(topo);
  }
  conn.set_read_timeout_ms(0);
  return peer;
}

}  // namespace cemu
