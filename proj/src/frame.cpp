#include "cemu/frame.hpp"

namespace cemu {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::kHello: return "HELLO";
    case MsgType::kTopo: return "TOPO";
    case MsgType::kOpenOp: return "OPEN_OP";
    case MsgType::kData: return "DATA";
    case MsgType::kError: return "ERROR";
    case MsgType::kBye: return "BYE";
  }
  return "UNKNOWN";
}

void encode_frame_into(const Frame& f, std::vector<uint8_t>& out,
                       uint32_t max_payload) {
  if (f.payload.size() > max_payload) {
    throw FrameError("payload_len " + std::to_string(f.payload.size()) +
                     " exceeds cap " + std::to_string(max_payload));
  }
  out.reserve(out.size() + kFrameHeaderBytes + f.payload.size());
  out.insert(out.end(), kWireMagic, kWireMagic + 4);
  out.push_back(kWireVersion);
  out.push_back(static_cast<uint8_t>(f.type));
  put_u32(out, f.op_id);
  put_u32(out, f.seq);
  put_u16(out, f.src_rank);
  put_u16(out, f.dst_rank);
  put_u16(out, f.chunk_index);
  put_u32(out, static_cast<uint32_t>(f.payload.size()));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
}

std::vector<uint8_t> encode_frame(const Frame& f, uint32_t max_payload) {
  std::vector<uint8_t> out;
  encode_frame_into(f, out, max_payload);
  return out;
}

std::vector<uint8_t> encode_frame_header(const Frame& f, uint32_t payload_len,
                                         uint32_t max_payload) {
  if (payload_len > max_payload) {
    throw FrameError("payload_len " + std::to_string(payload_len) +
                     " exceeds cap " + std::to_string(max_payload));
  }
  std::vector<uint8_t> out;
  out.reserve(kFrameHeaderBytes);
  out.insert(out.end(), kWireMagic, kWireMagic + 4);
  out.push_back(kWireVersion);
  out.push_back(static_cast<uint8_t>(f.type));
  put_u32(out, f.op_id);
  put_u32(out, f.seq);
  put_u16(out, f.src_rank);
  put_u16(out, f.dst_rank);
  put_u16(out, f.chunk_index);
  put_u32(out, payload_len);
  return out;
}

namespace {

// Validates the fixed header; returns payload length.
uint32_t parse_header(const uint8_t* buf, uint32_t max_payload, Frame& f) {
  if (std::memcmp(buf, kWireMagic, 4) != 0) {
    throw FrameError("bad magic");
  }
  if (buf[4] != kWireVersion) {
    throw FrameError("bad version " + std::to_string(buf[4]));
  }
  const uint8_t t = buf[5];
  if (t < 1 || t > 6) {
    throw FrameError("bad msg_type " + std::to_string(t));
  }
  f.type = static_cast<MsgType>(t);
  f.op_id = get_u32(buf + 6);
  f.seq = get_u32(buf + 10);
  f.src_rank = get_u16(buf + 14);
  f.dst_rank = get_u16(buf + 16);
  f.chunk_index = get_u16(buf + 18);
  const uint32_t payload_len = get_u32(buf + 20);
  if (payload_len > max_payload) {
    throw FrameError("payload_len " + std::to_string(payload_len) +
                     " exceeds cap " + std::to_string(max_payload));
  }
  return payload_len;
}

}  // namespace

Frame decode_frame(const uint8_t* buf, size_t len, uint32_t max_payload) {
  if (len < kFrameHeaderBytes) throw FrameError("truncated header");
  Frame f;
  const uint32_t payload_len = parse_header(buf, max_payload, f);
  if (len < kFrameHeaderBytes + payload_len) {
    throw FrameError("truncated payload");
  }
  f.payload.assign(buf + kFrameHeaderBytes,
                   buf + kFrameHeaderBytes + payload_len);
  return f;
}

void FrameReader::feed(const uint8_t* data, size_t len) {
  // Compact lazily once consumed bytes dominate.
  if (consumed_ > 0 && consumed_ * 2 > buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<long>(consumed_));
    consumed_ = 0;
  }
  buf_.insert(buf_.end(), data, data + len);
}

std::optional<Frame> FrameReader::next() {
  const size_t avail = buf_.size() - consumed_;
  if (avail < kFrameHeaderBytes) return std::nullopt;
  Frame f;
  const uint32_t payload_len =
      parse_header(buf_.data() + consumed_, max_payload_, f);
  if (avail < kFrameHeaderBytes + payload_len) return std::nullopt;
  const uint8_t* p = buf_.data() + consumed_ + kFrameHeaderBytes;
  f.payload.assign(p, p + payload_len);
  consumed_ += kFrameHeaderBytes + payload_len;
  return f;
}

}  // namespace cemu
