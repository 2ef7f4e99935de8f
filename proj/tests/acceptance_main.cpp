// Acceptance suite: every release gate in one binary, one PASS/FAIL line per
// criterion. In-process checks cover structure and math; timing and
// multi-process behavior run the real tools over loopback.
//
//   1 collective correctness vs direct computation, n in 2..8, multi-process
//   2 DAG message counts and acyclicity, n in 2..16
//   3 boundary-view isomorphism, n in 2..16
//   4 protocol safety/liveness under 10,000 randomized interleavings
//   5 end-to-end emulation fidelity <= 5% on the shipped profiles
//   6 microbench overhead <= 1.05x baseline at sizes >= 2 MiB
//   7 what-if sweep: tail slope ~ bucket count, marginal slope below it
//   8 delay-model closed forms vs independent accumulation, 1e-9 relative
//   9 wire-format round-trip and split fuzzing, 10,000 frames

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "cemu/collective.hpp"
#include "cemu/config.hpp"
#include "cemu/dag.hpp"
#include "cemu/delay.hpp"
#include "cemu/engine.hpp"
#include "cemu/frame.hpp"
#include "cemu/harness.hpp"
#include "../tools/proc_util.hpp"
#include "oracles.hpp"

using namespace cemu;
using namespace cemu::tools;

namespace {

struct Ctx {
  std::string workdir;
  uint16_t next_port = 31000;
  bool verbose = false;

  uint16_t ports(int count) {
    const uint16_t p = find_free_ports(next_port, count);
    next_port = static_cast<uint16_t>(p + count);
    return p;
  }
};

std::string render_run_config(Ctx& c, uint32_t n, bool emulated,
                              double inject_us, const std::string& name) {
  JobConfig cfg;
  cfg.world_size = n;
  cfg.real_ranks = {0};
  cfg.node_class.assign(n, "default");
  cfg.bucket_bytes = 64 * 1024;
  cfg.delay_inject_us = inject_us;
  const uint16_t base = c.ports(static_cast<int>(n) + 1);
  for (uint32_t r = 0; r < n; ++r) {
    cfg.endpoints.push_back(
        Endpoint{"127.0.0.1", static_cast<uint16_t>(base + r)});
  }
  if (emulated) {
    for (uint32_t r = 1; r < n; ++r) {
      cfg.endpoints[r] = Endpoint{"127.0.0.1",
                                  static_cast<uint16_t>(base + n)};
    }
  }
  return write_temp_file(c.workdir, name, render_job_config(cfg));
}

// ---------------------------------------------------------------- criterion 1

bool criterion1(Ctx& c, std::string& detail) {
  const uint32_t trials_per_group = 16;  // 7 world sizes x 16 >= 100 per op
  uint64_t total_trials = 0;
  for (uint32_t n = 2; n <= 8; ++n) {
    for (const char* op : {"allreduce", "allgather"}) {
      const std::string cfg = render_run_config(
          c, n, /*emulated=*/false,
          0, "c1-n" + std::to_string(n) + "-" + op + ".cfg");
      std::vector<Child> group;
      for (uint32_t r = 0; r < n; ++r) {
        group.push_back(spawn(
            {tool_path("cemu-coll"), "--config", cfg, "--rank",
             std::to_string(r), "--op", op, "--verify-trials",
             std::to_string(trials_per_group), "--seed",
             std::to_string(1000 + n)},
            c.workdir + "/c1-n" + std::to_string(n) + "-" + op + "-r" +
                std::to_string(r) + ".out"));
      }
      bool ok = true;
      for (const Child& ch : group) {
        if (wait_child(ch) != 0) ok = false;
      }
      if (!ok) {
        detail = "exact-result verification failed at n=" +
                 std::to_string(n) + " op=" + op;
        return false;
      }
      total_trials += trials_per_group * n;  // every rank checks every trial
    }
  }
  detail = "n=2..8 allreduce+allgather, " + std::to_string(total_trials) +
           " rank-trials exact";
  return true;
}

// ---------------------------------------------------------------- criterion 2

bool criterion2(Ctx&, std::string& detail) {
  for (uint32_t n = 2; n <= 16; ++n) {
    const CollectiveDag ar = build_ring_allreduce_dag(n, 64 * n, 0);
    const CollectiveDag ag = build_ring_allgather_dag(n, 64, 0);
    if (!validate_acyclic(ar).ok || !validate_acyclic(ag).ok) {
      detail = "cycle detected at n=" + std::to_string(n);
      return false;
    }
    for (uint32_t r = 0; r < n; ++r) {
      size_t ar_sends = 0, ar_recvs = 0, ag_sends = 0, ag_recvs = 0;
      for (const auto& t : ar.vertices) {
        if (t.owner_rank == r) {
          (t.kind == TaskKind::kSend ? ar_sends : ar_recvs)++;
        }
      }
      for (const auto& t : ag.vertices) {
        if (t.owner_rank == r) {
          (t.kind == TaskKind::kSend ? ag_sends : ag_recvs)++;
        }
      }
      if (ar_sends != 2 * (n - 1) || ar_recvs != 2 * (n - 1) ||
          ag_sends != n - 1 || ag_recvs != n - 1) {
        detail = "message count mismatch at n=" + std::to_string(n) +
                 " rank=" + std::to_string(r);
        return false;
      }
    }
  }
  detail = "2(n-1)/(n-1) counts and acyclicity for n=2..16";
  return true;
}

// ---------------------------------------------------------------- criterion 3

bool criterion3(Ctx&, std::string& detail) {
  for (uint32_t n = 2; n <= 16; ++n) {
    for (CollKind kind : {CollKind::kAllReduce, CollKind::kAllGather}) {
      const CollectiveDag dag = build_collective_dag(kind, n, 64 * n, 0);
      const BoundaryDag real_view =
          project_boundary(dag, {0}, BoundarySide::kReal);
      const BoundaryDag emu_view =
          project_boundary(dag, {0}, BoundarySide::kEmulated);
      if (!check_isomorphic(real_view, emu_view)) {
        detail = std::string("views differ at n=") + std::to_string(n) +
                 " kind=" + coll_kind_name(kind);
        return false;
      }
    }
  }
  detail = "real-node and merged views isomorphic for n=2..16";
  return true;
}

// ---------------------------------------------------------------- criterion 4

bool criterion4(Ctx&, std::string& detail) {
  std::mt19937_64 rng(20240817);
  const int runs = 10000;
  int completed = 0, errored = 0;
  for (int run = 0; run < runs; ++run) {
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::seconds(5);
    const uint32_t n = 2 + rng() % 5;
    const CollKind kind =
        rng() % 2 ? CollKind::kAllReduce : CollKind::kAllGather;
    const bool corrupt = run % 5 == 4;  // every fifth run injects a fault

    const CollectiveDag dag = build_collective_dag(kind, n, 64 * n, 0);
    auto boundary =
        std::make_shared<BoundaryDag>(project_boundary(dag, {0}));
    const test::ClosureProjection closure =
        test::project_by_closure(dag, {0}, BoundarySide::kEmulated);

    Controller ctrl;
    const uint32_t id = ctrl.register_operation(
        boundary,
        std::vector<double>(boundary->count(BoundaryDir::kToReal), 0.0), 0);

    std::vector<MsgDesc> to_send;
    std::vector<MsgDesc> expected;
    for (const auto& v : boundary->vertices) {
      (v.dir == BoundaryDir::kFromReal ? to_send : expected).push_back(v.msg);
    }
    std::vector<bool> marked(boundary->vertices.size(), false);
    auto index_of = [&](const MsgDesc& m) -> size_t {
      for (size_t i = 0; i < boundary->vertices.size(); ++i) {
        if (boundary->vertices[i].msg == m) return i;
      }
      return SIZE_MAX;
    };
    size_t sent = 0, received = 0;
    bool protocol_error = false;
    auto receipt_of_step = [&](uint32_t step) {
      for (size_t i = 0; i < received; ++i) {
        if (expected[i].step == step) return true;
      }
      return false;
    };

    while (!ctrl.op_complete(id) && !protocol_error) {
      if (std::chrono::steady_clock::now() > deadline) {
        detail = "watchdog: interleaving " + std::to_string(run) + " hung";
        return false;
      }
      const bool do_poll = rng() % 2 == 0;
      if (do_poll) {
        for (const auto& [oid, msg] : ctrl.poll_round_robin(0)) {
          const size_t v = index_of(msg);
          if (v == SIZE_MAX) {
            detail = "released a message outside the boundary";
            return false;
          }
          // safety: every closure predecessor must already be marked
          for (size_t u = 0; u < marked.size(); ++u) {
            if (closure.reach[u][v] && !marked[u]) {
              detail = "released step " + std::to_string(msg.step) +
                       " with unmarked predecessor (run " +
                       std::to_string(run) + ")";
              return false;
            }
          }
          marked[v] = true;
          ++received;
        }
      } else if (sent < to_send.size()) {
        const uint32_t step = to_send[sent].step;
        const bool ready = step == 0 || receipt_of_step(step - 1);
        if (!ready) continue;
        MsgDesc m = to_send[sent];
        if (corrupt && sent == to_send.size() / 2) {
          switch (rng() % 3) {
            case 0: m.step += 1; break;
            case 1: m.chunk_index = (m.chunk_index + 1) % n; break;
            default: m.size_bytes += 1; break;
          }
          const auto err = ctrl.on_receive(id, m, 0);
          if (!err.has_value()) {
            detail = "corrupted message accepted (run " +
                     std::to_string(run) + ")";
            return false;
          }
          protocol_error = true;
          break;
        }
        if (ctrl.on_receive(id, m, 0).has_value()) {
          detail = "legal message rejected (run " + std::to_string(run) + ")";
          return false;
        }
        marked[index_of(m)] = true;
        ++sent;
      }
    }
    (protocol_error ? errored : completed)++;
    if (protocol_error && !ctrl.op_failed(id)) {
      detail = "operation not marked failed after protocol error";
      return false;
    }
  }
  detail = std::to_string(runs) + " interleavings: " +
           std::to_string(completed) + " completed, " +
           std::to_string(errored) + " rejected faults, 0 safety violations";
  return true;
}

// -------------------------------------------------------- criteria 5/6/7 glue

int run_bench(Ctx& c, const std::vector<std::string>& global_args,
              const std::vector<std::string>& sub_args,
              const std::string& tag) {
  std::vector<std::string> argv = {tool_path("cemu-bench")};
  argv.insert(argv.end(), global_args.begin(), global_args.end());
  argv.insert(argv.end(), {"--workdir", c.workdir + "/" + tag, "--port-base",
                           std::to_string(c.ports(64))});
  argv.insert(argv.end(), sub_args.begin(), sub_args.end());
  const Child child = spawn(argv, c.workdir + "/" + tag + ".out");
  return wait_child(child);
}

std::string grep_file(const std::string& path, const std::string& needle) {
  std::ifstream in(path);
  std::string line, hits;
  while (std::getline(in, line)) {
    if (line.find(needle) != std::string::npos) hits += line + "; ";
  }
  return hits;
}

bool criterion5(Ctx& c, std::string& detail) {
  const std::string cfg = render_run_config(c, 2, false, 0, "c5-base.cfg");
  const int rc = run_bench(c,
                           {"--config", cfg, "--out", c.workdir + "/e2e.csv",
                            "--check"},
                           {"e2e", "--iters", "62", "--warmup", "12"}, "c5");
  detail = grep_file(c.workdir + "/c5.out", "rel_err");
  if (detail.empty()) detail = "e2e run failed before producing results";
  return rc == 0;
}

bool criterion6(Ctx& c, std::string& detail) {
  const std::string cfg = render_run_config(c, 2, false, 0, "c6-base.cfg");
  const int rc = run_bench(
      c,
      {"--config", cfg, "--out", c.workdir + "/microbench.csv", "--check"},
      {"microbench", "--sizes", "2097152", "4194304", "--reps", "800",
       "--warmup", "10", "--segments", "8"},
      "c6");
  detail = grep_file(c.workdir + "/c6.out", "ratio");
  if (detail.empty()) detail = "microbench run failed before results";
  return rc == 0;
}

bool criterion7(Ctx& c, std::string& detail) {
  const std::string cfg = render_run_config(c, 2, false, 0, "c7-base.cfg");
  const int rc = run_bench(
      c,
      {"--config", cfg, "--out", c.workdir + "/whatif.csv", "--check"},
      {"whatif", "--model", "bert-like", "--delays-us", "0", "500", "1000",
       "4000", "6000", "8000", "10000", "--iters", "62", "--warmup", "12"},
      "c7");
  detail = grep_file(c.workdir + "/c7.out", "slope");
  if (detail.empty()) detail = "what-if sweep failed before results";
  return rc == 0;
}

// ---------------------------------------------------------------- criterion 8

bool criterion8(Ctx&, std::string& detail) {
  std::mt19937_64 rng(555);
  for (int i = 0; i < 1000; ++i) {
    const uint32_t n = 2 + rng() % 15;
    const uint64_t m = rng() % (1ull << 30);
    LinkParams link{(rng() % 10000) / 13.0, (rng() % 10000) / 777777.0,
                    (rng() % 10000) / 3333333.0};
    long double ar = 0;
    const long double chunk = static_cast<long double>(m) / n;
    for (uint32_t s = 0; s < 2 * (n - 1); ++s) {
      ar += link.alpha_us + chunk * link.beta_us_per_byte;
    }
    for (uint32_t s = 0; s < n - 1; ++s) {
      ar += chunk * link.gamma_us_per_byte;
    }
    long double ag = 0;
    for (uint32_t t = 0; t < n - 1; ++t) {
      ag += link.alpha_us +
            static_cast<long double>(m) * link.beta_us_per_byte;
    }
    const double got_ar = ring_allreduce_delay_us(n, m, link);
    const double got_ag = ring_allgather_delay_us(n, m, link);
    const double ref_ar = static_cast<double>(ar);
    const double ref_ag = static_cast<double>(ag);
    if (std::abs(got_ar - ref_ar) > 1e-9 * std::max(1.0, std::abs(ref_ar)) ||
        std::abs(got_ag - ref_ag) > 1e-9 * std::max(1.0, std::abs(ref_ag))) {
      detail = "draw " + std::to_string(i) + " off by more than 1e-9";
      return false;
    }
  }
  detail = "1000 random draws vs per-step accumulation, 1e-9 relative";
  return true;
}

// ---------------------------------------------------------------- criterion 9

bool criterion9(Ctx&, std::string& detail) {
  std::mt19937_64 rng(999);
  int frames_checked = 0;
  while (frames_checked < 10000) {
    std::vector<Frame> frames;
    std::vector<uint8_t> wire;
    const size_t count = 1 + rng() % 8;
    for (size_t i = 0; i < count; ++i) {
      Frame f;
      f.type = static_cast<MsgType>(1 + rng() % 6);
      f.op_id = static_cast<uint32_t>(rng());
      f.seq = static_cast<uint32_t>(rng());
      f.src_rank = static_cast<uint16_t>(rng());
      f.dst_rank = static_cast<uint16_t>(rng());
      f.chunk_index = static_cast<uint16_t>(rng());
      f.payload.resize(rng() % 2048);
      for (auto& b : f.payload) b = static_cast<uint8_t>(rng());
      const Frame back = decode_frame(encode_frame(f).data(),
                                      encode_frame(f).size());
      if (!(back == f)) {
        detail = "single-frame round trip mismatch";
        return false;
      }
      frames.push_back(f);
      encode_frame_into(f, wire);
    }
    FrameReader reader;
    std::vector<Frame> got;
    size_t off = 0;
    while (off < wire.size()) {
      const size_t take = std::min<size_t>(1 + rng() % 701,
                                           wire.size() - off);
      reader.feed(wire.data() + off, take);
      off += take;
      while (auto f = reader.next()) got.push_back(*f);
    }
    if (got.size() != frames.size() || reader.buffered_bytes() != 0) {
      detail = "split fuzz lost or invented frames";
      return false;
    }
    for (size_t i = 0; i < frames.size(); ++i) {
      if (!(got[i] == frames[i])) {
        detail = "split fuzz mismatch at frame " + std::to_string(i);
        return false;
      }
    }
    frames_checked += static_cast<int>(count);
  }
  detail = std::to_string(frames_checked) +
           " frames round-tripped under random split points";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[i + 1]);
    }
  }
  Ctx ctx;
  ctx.workdir = "/tmp/cemu-acceptance-" + std::to_string(::getpid());
  std::filesystem::create_directories(ctx.workdir);

  struct Criterion {
    int id;
    const char* title;
    std::function<bool(Ctx&, std::string&)> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "collective correctness vs direct computation", criterion1},
      {2, "DAG message counts and acyclicity", criterion2},
      {3, "boundary view isomorphism", criterion3},
      {4, "protocol safety under randomized interleavings", criterion4},
      {5, "end-to-end emulation fidelity <= 5%", criterion5},
      {6, "microbench overhead <= 1.05x at >= 2 MiB", criterion6},
      {7, "what-if curve: tail slope ~ bucket count", criterion7},
      {8, "delay model closed forms to 1e-9", criterion8},
      {9, "wire format round-trip and split fuzzing", criterion9},
  };

  int failures = 0;
  for (const Criterion& cr : criteria) {
    if (only != 0 && cr.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = cr.fn(ctx, detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - t0)
            .count() /
        1000.0;
    std::printf("[%s] criterion %d: %s (%.1fs) — %s\n", ok ? "PASS" : "FAIL",
                cr.id, cr.title, secs, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed; artifacts in %s\n", failures,
                ctx.workdir.c_str());
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
