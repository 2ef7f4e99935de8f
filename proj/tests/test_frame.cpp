#include <doctest.h>

#include <random>

#include "cemu/frame.hpp"

using namespace cemu;

namespace {

Frame random_frame(std::mt19937_64& rng, size_t max_payload = 4096) {
  Frame f;
  f.type = static_cast<MsgType>(1 + rng() % 6);
  f.op_id = static_cast<uint32_t>(rng());
  f.seq = static_cast<uint32_t>(rng());
  f.src_rank = static_cast<uint16_t>(rng());
  f.dst_rank = static_cast<uint16_t>(rng());
  f.chunk_index = static_cast<uint16_t>(rng());
  f.payload.resize(rng() % max_payload);
  for (auto& b : f.payload) b = static_cast<uint8_t>(rng());
  return f;
}

}  // namespace

TEST_CASE("frame round-trips bit-exactly") {
  Frame f;
  f.type = MsgType::kHello;
  f.src_rank = 0;
  const auto bytes = encode_frame(f);
  CHECK(bytes.size() == kFrameHeaderBytes);  // empty payload: header only
  const Frame back = decode_frame(bytes.data(), bytes.size());
  CHECK(back == f);
}

TEST_CASE("frame header layout is little-endian and fixed-size") {
  Frame f;
  f.type = MsgType::kData;
  f.op_id = 0x01020304;
  f.seq = 0x0a0b0c0d;
  f.src_rank = 0x1122;
  f.dst_rank = 0x3344;
  f.chunk_index = 0x5566;
  f.payload = {0xde, 0xad};
  const auto b = encode_frame(f);
  REQUIRE(b.size() == kFrameHeaderBytes + 2);
  CHECK(b[0] == 'C');
  CHECK(b[1] == 'E');
  CHECK(b[2] == 'M');
  CHECK(b[3] == 'U');
  CHECK(b[4] == kWireVersion);
  CHECK(b[5] == 4);  // DATA
  CHECK(b[6] == 0x04);
  CHECK(b[7] == 0x03);
  CHECK(b[8] == 0x02);
  CHECK(b[9] == 0x01);
  CHECK(b[14] == 0x22);
  CHECK(b[15] == 0x11);
  CHECK(b[20] == 2);  // payload_len
  CHECK(b[21] == 0);
}

TEST_CASE("decode rejects bad magic, version, truncation and oversize") {
  Frame f;
  f.type = MsgType::kData;
  f.payload = {1, 2, 3};
  auto bytes = encode_frame(f);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_frame(bad_magic.data(), bad_magic.size()),
                  FrameError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_frame(bad_version.data(), bad_version.size()),
                  FrameError);

  CHECK_THROWS_AS(decode_frame(bytes.data(), kFrameHeaderBytes - 1),
                  FrameError);
  CHECK_THROWS_AS(decode_frame(bytes.data(), bytes.size() - 1), FrameError);

  // payload_len over the cap
  Frame big;
  big.type = MsgType::kData;
  big.payload.resize(300);
  CHECK_THROWS_AS(encode_frame(big, /*max_payload=*/256), FrameError);
  auto wire = encode_frame(big);
  CHECK_THROWS_AS(decode_frame(wire.data(), wire.size(), /*max_payload=*/256),
                  FrameError);
}

TEST_CASE("incremental reader reproduces any concatenation under random "
          "splits") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Frame> frames;
    std::vector<uint8_t> wire;
    const size_t count = 1 + rng() % 6;
    for (size_t i = 0; i < count; ++i) {
      frames.push_back(random_frame(rng));
      encode_frame_into(frames.back(), wire);
    }
    FrameReader reader;
    std::vector<Frame> got;
    size_t off = 0;
    while (off < wire.size()) {
      const size_t n = 1 + rng() % 977;
      const size_t take = std::min(n, wire.size() - off);
      reader.feed(wire.data() + off, take);
      off += take;
      while (auto f = reader.next()) got.push_back(*f);
    }
    REQUIRE(got.size() == frames.size());
    for (size_t i = 0; i < frames.size(); ++i) CHECK(got[i] == frames[i]);
    CHECK(reader.buffered_bytes() == 0);
  }
}

TEST_CASE("reader surfaces corruption mid-stream") {
  std::mt19937_64 rng(11);
  Frame f = random_frame(rng);
  auto wire = encode_frame(f);
  wire[1] = 'x';
  FrameReader reader;
  reader.feed(wire.data(), wire.size());
  CHECK_THROWS_AS(reader.next(), FrameError);
}
