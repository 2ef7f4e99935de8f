#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cemu {

// Wire message types. DATA carries one collective chunk; the rest manage the
// session lifecycle.
enum class MsgType : uint8_t {
  kHello = 1,
  kTopo = 2,
  kOpenOp = 3,
  kData = 4,
  kError = 5,
  kBye = 6,
};

const char* msg_type_name(MsgType t);

// One framed wire message. All multi-byte integers are little-endian on the
// wire; the fixed header is kFrameHeaderBytes long and is followed by
// payload_len payload bytes.
struct Frame {
  MsgType type = MsgType::kData;
  uint32_t op_id = 0;
  uint32_t seq = 0;  // schedule position for DATA, plan index for OPEN_OP
  uint16_t src_rank = 0;
  uint16_t dst_rank = 0;
  uint16_t chunk_index = 0;
  std::vector<uint8_t> payload;

  bool operator==(const Frame&) const = default;
};

inline constexpr uint8_t kWireVersion = 1;
inline constexpr char kWireMagic[4] = {'C', 'E', 'M', 'U'};
inline constexpr size_t kFrameHeaderBytes = 24;
inline constexpr uint32_t kDefaultMaxPayload = 64u * 1024 * 1024;

class FrameError : public std::runtime_error {
 public:
  explicit FrameError(const std::string& what) : std::runtime_error(what) {}
};

// Serialize a frame; throws FrameError if the payload exceeds max_payload.
std::vector<uint8_t> encode_frame(const Frame& f,
                                  uint32_t max_payload = kDefaultMaxPayload);

void encode_frame_into(const Frame& f, std::vector<uint8_t>& out,
                       uint32_t max_payload = kDefaultMaxPayload);

// Header alone, with an explicit payload length (payload bytes streamed
// separately by the caller).
std::vector<uint8_t> encode_frame_header(const Frame& f, uint32_t payload_len,
                                         uint32_t max_payload =
                                             kDefaultMaxPayload);

// Decode exactly one frame from `buf`; requires the buffer to contain the
// whole frame. Throws FrameError on bad magic/version/length.
Frame decode_frame(const uint8_t* buf, size_t len,
                   uint32_t max_payload = kDefaultMaxPayload);

// Incremental decoder: feed arbitrary byte slices, pop whole frames.
// Self-delimiting: any concatenation of valid frames decodes to exactly that
// frame sequence regardless of how the bytes were split.
class FrameReader {
 public:
  explicit FrameReader(uint32_t max_payload = kDefaultMaxPayload)
      : max_payload_(max_payload) {}

  void feed(const uint8_t* data, size_t len);

  // Returns the next complete frame, or nullopt if more bytes are needed.
  std::optional<Frame> next();

  size_t buffered_bytes() const { return buf_.size() - consumed_; }

 private:
  uint32_t max_payload_;
  std::vector<uint8_t> buf_;
  size_t consumed_ = 0;
};

}  // namespace cemu
