#include "cemu/reduce.hpp"

namespace cemu {

namespace detail {

void reduce_add_i32_scalar(int32_t* dst, const int32_t* src, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    // wrapping add, matching the vector lanes
    dst[i] = static_cast<int32_t>(static_cast<uint32_t>(dst[i]) +
                                  static_cast<uint32_t>(src[i]));
  }
}

void reduce_add_u8_scalar(uint8_t* dst, const uint8_t* src, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    dst[i] = static_cast<uint8_t>(dst[i] + src[i]);
  }
}

}  // namespace detail

namespace {

enum class Backend { kScalar, kAvx2 };

Backend pick_backend() {
#if defined(__x86_64__)
  if (__builtin_cpu_supports("avx2")) return Backend::kAvx2;
#endif
  return Backend::kScalar;
}

const Backend g_backend = pick_backend();

}  // namespace

const char* reduce_backend() {
  return g_backend == Backend::kAvx2 ? "avx2" : "scalar";
}

void reduce_add_i32(int32_t* dst, const int32_t* src, size_t count) {
#if defined(__x86_64__)
  if (g_backend == Backend::kAvx2) {
    detail::reduce_add_i32_avx2(dst, src, count);
    return;
  }
#endif
  detail::reduce_add_i32_scalar(dst, src, count);
}

void reduce_add_u8(uint8_t* dst, const uint8_t* src, size_t count) {
#if defined(__x86_64__)
  if (g_backend == Backend::kAvx2) {
    detail::reduce_add_u8_avx2(dst, src, count);
    return;
  }
#endif
  detail::reduce_add_u8_scalar(dst, src, count);
}

}  // namespace cemu
