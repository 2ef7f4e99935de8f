#include "cemu/delay.hpp"

namespace cemu {

double ring_allreduce_delay_us(uint32_t n, uint64_t total_bytes,
                               const LinkParams& link) {
  if (n < 2) throw DagError("delay model: world size must be >= 2");
  const double steps = 2.0 * (n - 1);
  const double frac = static_cast<double>(n - 1) / n;
  const double m = static_cast<double>(total_bytes);
  return steps * link.alpha_us + 2.0 * frac * m * link.beta_us_per_byte +
         frac * m * link.gamma_us_per_byte;
}

double ring_allgather_delay_us(uint32_t n, uint64_t bytes_per_rank,
                               const LinkParams& link) {
  if (n < 2) throw DagError("delay model: world size must be >= 2");
  const double steps = static_cast<double>(n - 1);
  const double m = static_cast<double>(bytes_per_rank);
  return steps * link.alpha_us + steps * m * link.beta_us_per_byte;
}

std::vector<double> release_offsets_us(const BoundaryDag& boundary,
                                       const DelayModelParams& params,
                                       uint64_t bytes) {
  const size_t k = boundary.count(BoundaryDir::kToReal);
  std::vector<double> offsets(k, 0.0);
  switch (params.kind) {
    case DelayKind::kNone:
      break;
    case DelayKind::kFixed:
      for (auto& o : offsets) o = params.fixed_us;
      break;
    case DelayKind::kAlphaBeta: {
      const double total =
          boundary.kind == CollKind::kAllReduce
              ? ring_allreduce_delay_us(boundary.n, bytes, params.link)
              : ring_allgather_delay_us(boundary.n, bytes, params.link);
      for (size_t j = 0; j < k; ++j) {
        offsets[j] = total * static_cast<double>(j + 1) / k;
      }
      break;
    }
  }
  if (!offsets.empty()) offsets[0] += params.inject_us;
  return offsets;
}

DelayModelFn make_delay_model(const DelayModelParams& params) {
  return [params](const BoundaryDag& boundary, uint64_t bytes) {
    return release_offsets_us(boundary, params, bytes);
  };
}

}  // namespace cemu
