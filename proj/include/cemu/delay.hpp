#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cemu/config.hpp"
#include "cemu/dag.hpp"

namespace cemu {

// Delay calculation inside the emulated environment. A model turns one
// collective call's boundary DAG into per-to-real-vertex release offsets
// (microseconds relative to operation registration). The three built-ins are
// the reference implementations; anything matching DelayModelFn plugs in.
struct DelayModelParams {
  DelayKind kind = DelayKind::kNone;
  LinkParams link;
  double fixed_us = 0.0;
  double inject_us = 0.0;  // per-call what-if delay, stalls the first reply

  static DelayModelParams from_config(const JobConfig& cfg) {
    DelayModelParams p;
    p.kind = cfg.delay_kind;
    p.link = cfg.link;
    p.fixed_us = cfg.delay_fixed_us;
    p.inject_us = cfg.delay_inject_us;
    return p;
  }
};

// Classical ring all-reduce cost: 2(n-1)a + 2((n-1)/n)mB + ((n-1)/n)mG.
double ring_allreduce_delay_us(uint32_t n, uint64_t total_bytes,
                               const LinkParams& link);

// Ring all-gather cost: (n-1)a + (n-1)mB with m the per-rank block size.
double ring_allgather_delay_us(uint32_t n, uint64_t bytes_per_rank,
                               const LinkParams& link);

// Offsets for every to-real vertex of `boundary`, in canonical order.
//   none:       all zero
//   fixed:      fixed_us everywhere
//   alpha_beta: the model total spread linearly across the K to-real
//               positions (the j-th vertex, 1-based, gets j/K of the total)
// inject_us is then added to the first to-real vertex only: the what-if knob
// is a per-call stall ahead of the emulator's first reply, and everything
// downstream shifts through the dependency structure.
std::vector<double> release_offsets_us(const BoundaryDag& boundary,
                                       const DelayModelParams& params,
                                       uint64_t bytes);

using DelayModelFn = std::function<std::vector<double>(
    const BoundaryDag& boundary, uint64_t bytes)>;

DelayModelFn make_delay_model(const DelayModelParams& params);

}  // namespace cemu
