// AVX2 variants of the reduce kernels. This translation unit is the only one
// compiled with -mavx2; callers reach it through the runtime dispatch in
// reduce.cpp, never directly.
#if defined(__x86_64__)

#include <immintrin.h>

#include "cemu/reduce.hpp"

namespace cemu::detail {

void reduce_add_i32_avx2(int32_t* dst, const int32_t* src, size_t count) {
  size_t i = 0;
  for (; i + 8 <= count; i += 8) {
    __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dst + i));
    __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i),
                        _mm256_add_epi32(a, b));
  }
  reduce_add_i32_scalar(dst + i, src + i, count - i);
}

void reduce_add_u8_avx2(uint8_t* dst, const uint8_t* src, size_t count) {
  size_t i = 0;
  for (; i + 32 <= count; i += 32) {
    __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dst + i));
    __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i),
                        _mm256_add_epi8(a, b));
  }
  reduce_add_u8_scalar(dst + i, src + i, count - i);
}

}  // namespace cemu::detail

#endif  // __x86_64__
