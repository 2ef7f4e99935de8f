#pragma once

#include <cstddef>
#include <cstdint>

namespace cemu {

// Elementwise sum kernels used when a worker folds a received chunk into its
// local buffer. Scalar reference implementations always exist; on x86 an AVX2
// variant is selected at runtime when the CPU supports it. The two must be
// bit-identical (equivalence-tested), so selection is purely a speed matter.

// dst[i] = dst[i] + src[i], int32 lanes.
void reduce_add_i32(int32_t* dst, const int32_t* src, size_t count);

// dst[i] = dst[i] + src[i], wrapping uint8 lanes (byte-granular payloads).
void reduce_add_u8(uint8_t* dst, const uint8_t* src, size_t count);

// Name of the selected backend ("scalar" or "avx2"); for logs and tests.
const char* reduce_backend();

namespace detail {
void reduce_add_i32_scalar(int32_t* dst, const int32_t* src, size_t count);
void reduce_add_u8_scalar(uint8_t* dst, const uint8_t* src, size_t count);
#if defined(__x86_64__)
void reduce_add_i32_avx2(int32_t* dst, const int32_t* src, size_t count);
void reduce_add_u8_avx2(uint8_t* dst, const uint8_t* src, size_t count);
#endif
}  // namespace detail

}  // namespace cemu
