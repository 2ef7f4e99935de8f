// Collective exerciser: every rank of the job runs the same call sequence.
// Timing mode measures per-call latency on rank 0; verify mode checks
// results against locally recomputed expectations (requires all ranks to be
// real workers).
#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <random>

#include "cemu/clock.hpp"
#include "cemu/collective.hpp"
#include "cemu/config.hpp"
#include "cemu/csv.hpp"
#include "cemu/stats.hpp"
#include "cemu/trace.hpp"

namespace {

using namespace cemu;

uint64_t mix(uint64_t seed, uint64_t trial, uint64_t rank) {
  uint64_t h = seed ^ (trial * 0x9e3779b97f4a7c15ull) ^
               (rank * 0xbf58476d1ce4e5b9ull);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

std::vector<int32_t> trial_vector(uint64_t seed, uint64_t trial,
                                  uint32_t rank, size_t elems) {
  std::mt19937_64 rng(mix(seed, trial, rank));
  std::vector<int32_t> v(elems);
  for (auto& x : v) x = static_cast<int32_t>(rng());
  return v;
}

int run_verify(const JobConfig& cfg, uint32_t rank, CollKind op,
               uint32_t trials, uint64_t seed,
               const WorkerSession::Overrides& overrides) {
  const uint32_t n = cfg.world_size;
  // Sizes are derived from the shared seed so every rank declares the same
  // plan without further coordination.
  std::mt19937_64 size_rng(mix(seed, 0xa11, 0));
  std::vector<size_t> elems_per_trial(trials);
  for (auto& e : elems_per_trial) {
    e = n + size_rng() % 1024;
  }
  std::vector<CollectivePlanEntry> plan;
  for (size_t e : elems_per_trial) {
    plan.push_back(CollectivePlanEntry{op, e * 4, 4});
  }
  WorkerSession session(cfg, rank, plan, overrides);

  for (uint32_t t = 0; t < trials; ++t) {
    const size_t elems = elems_per_trial[t];
    if (op == CollKind::kAllReduce) {
      std::vector<int32_t> buf = trial_vector(seed, t, rank, elems);
      session.allreduce(
          std::span<uint8_t>(reinterpret_cast<uint8_t*>(buf.data()),
                             elems * 4),
          4);
      std::vector<int32_t> want(elems, 0);
      for (uint32_t r = 0; r < n; ++r) {
        const auto v = trial_vector(seed, t, r, elems);
        for (size_t i = 0; i < elems; ++i) {
          want[i] = static_cast<int32_t>(static_cast<uint32_t>(want[i]) +
                                         static_cast<uint32_t>(v[i]));
        }
      }
      if (buf != want) {
        std::fprintf(stderr,
                     "rank %u trial %u: allreduce result mismatch\n", rank,
                     t);
        return 1;
      }
    } else {
      std::vector<int32_t> full(elems * n, 0);
      const auto mine = trial_vector(seed, t, rank, elems);
      std::copy(mine.begin(), mine.end(), full.begin() + rank * elems);
      session.allgather(
          std::span<uint8_t>(reinterpret_cast<uint8_t*>(full.data()),
                             full.size() * 4),
          4);
      for (uint32_t r = 0; r < n; ++r) {
        const auto v = trial_vector(seed, t, r, elems);
        if (!std::equal(v.begin(), v.end(), full.begin() + r * elems)) {
          std::fprintf(stderr,
                       "rank %u trial %u: allgather block %u mismatch\n",
                       rank, t, r);
          return 1;
        }
      }
    }
  }
  session.close();
  if (rank == 0) {
    std::printf("VERIFY ok op=%s n=%u trials=%u\n", coll_kind_name(op), n,
                trials);
  }
  return 0;
}

int run_timing(const JobConfig& cfg, uint32_t rank, CollKind op,
               const std::vector<uint64_t>& sizes, uint32_t reps,
               uint32_t warmup, const std::string& csv_path,
               bool deterministic,
               const WorkerSession::Overrides& overrides) {
  std::vector<CollectivePlanEntry> plan;
  for (uint64_t bytes : sizes) {
    const uint64_t aligned = bytes - bytes % 4;
    for (uint32_t i = 0; i < warmup + reps; ++i) {
      plan.push_back(CollectivePlanEntry{op, aligned, 4});
    }
  }
  WorkerSession session(cfg, rank, plan, overrides);

  std::unique_ptr<CsvWriter> csv;
  if (rank == 0 && !csv_path.empty()) {
    csv = std::make_unique<CsvWriter>(
        csv_path,
        std::vector<std::string>{"op", "size_bytes", "repetitions", "mean_us",
                                 "stddev_us"},
        deterministic);
  }

  for (uint64_t bytes : sizes) {
    const uint64_t aligned = bytes - bytes % 4;
    const uint64_t buf_bytes =
        op == CollKind::kAllGather ? aligned * cfg.world_size : aligned;
    std::vector<uint8_t> buf(buf_bytes, 0);
    std::vector<double> us;
    us.reserve(reps);
    for (uint32_t i = 0; i < warmup + reps; ++i) {
      const int64_t t0 = now_us();
      if (op == CollKind::kAllReduce) {
        session.allreduce(std::span<uint8_t>(buf), 4);
      } else {
        session.allgather(std::span<uint8_t>(buf), 4);
      }
      const int64_t t1 = now_us();
      if (i >= warmup) us.push_back(static_cast<double>(t1 - t0));
    }
    if (rank == 0) {
      const double m = mean(us);
      const double sd = sample_stddev(us);
      std::printf("RESULT op=%s bytes=%" PRIu64 " reps=%u mean_us=%.3f "
                  "stddev_us=%.3f\n",
                  coll_kind_name(op), aligned, reps, m, sd);
      std::fflush(stdout);
      if (csv) {
        csv->row({coll_kind_name(op), std::to_string(aligned),
                  std::to_string(reps), std::to_string(m),
                  std::to_string(sd)});
      }
    }
  }
  session.close();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cemu coll: run ring collectives for benchmarks and checks"};
  std::string config_path;
  std::string op_name = "allreduce";
  std::string csv_path;
  std::string trace_path;
  uint32_t rank = 0;
  std::vector<uint64_t> sizes;
  uint32_t reps = 100;
  uint32_t warmup = 10;
  uint32_t verify_trials = 0;
  uint64_t seed = 1;
  bool deterministic = false;
  app.add_option("--config", config_path, "job config file")->required();
  app.add_option("--rank", rank, "this process's rank")->required();
  app.add_option("--op", op_name, "allreduce or allgather");
  app.add_option("--bytes", sizes, "payload sizes (timing mode)");
  app.add_option("--reps", reps, "timed repetitions per size");
  app.add_option("--warmup", warmup, "untimed repetitions per size");
  app.add_option("--verify-trials", verify_trials,
                 "verify mode: random exact-result trials");
  app.add_option("--seed", seed, "verify mode seed (shared by all ranks)");
  app.add_option("--csv", csv_path, "timing results csv (rank 0)");
  app.add_option("--trace", trace_path, "event log path (or $CEMU_TRACE)");
  std::string listen_override;
  std::string connect_override;
  app.add_option("--listen", listen_override,
                 "bind host:port (overrides this rank's config endpoint)");
  app.add_option("--connect", connect_override,
                 "dial host:port for the ring successor (overrides config)");
  app.add_flag("--deterministic", deterministic,
               "omit the timestamp comment from csv output");
  CLI11_PARSE(app, argc, argv);

  try {
    const cemu::JobConfig cfg = cemu::load_job_config(config_path);
    cemu::global_event_log().open(trace_path);
    const cemu::CollKind op = cemu::parse_coll_kind(op_name);
    cemu::WorkerSession::Overrides overrides;
    if (!listen_override.empty()) {
      overrides.listen = cemu::parse_endpoint(listen_override);
    }
    if (!connect_override.empty()) {
      overrides.connect = cemu::parse_endpoint(connect_override);
    }
    if (verify_trials > 0) {
      return run_verify(cfg, rank, op, verify_trials, seed, overrides);
    }
    if (sizes.empty()) {
      throw cemu::ConfigError("--bytes: timing mode needs at least one size");
    }
    return run_timing(cfg, rank, op, sizes, reps, warmup, csv_path,
                      deterministic, overrides);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cemu-coll: %s\n", e.what());
    return 1;
  }
}
