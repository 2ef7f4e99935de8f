// The real node: a synthetic data-parallel training loop over the wire
// protocol. The same binary and flags serve baseline and emulated runs; the
// mode is decided solely by who answers at the configured endpoints.
#include <CLI11.hpp>

#include <cstdio>

#include "cemu/clock.hpp"
#include "cemu/collective.hpp"
#include "cemu/config.hpp"
#include "cemu/harness.hpp"
#include "cemu/stats.hpp"
#include "cemu/trace.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cemu worker: synthetic data-parallel training loop"};
  std::string config_path;
  std::string model_name;
  std::string out_path;
  std::string trace_path;
  uint32_t rank = 0;
  int64_t iters = -1;
  int64_t warmup = -1;
  bool deterministic = false;
  app.add_option("--config", config_path, "job config file")->required();
  app.add_option("--rank", rank, "this process's rank")->required();
  app.add_option("--model", model_name,
                 "model spec file or built-in profile (bert-like, small, "
                 "wide)")
      ->required();
  app.add_option("--iters", iters, "iteration count (overrides model spec)");
  app.add_option("--warmup", warmup,
                 "warmup iterations excluded from statistics");
  app.add_option("--out", out_path, "per-iteration trace csv");
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
    cemu::ModelSpec model = cemu::load_model_spec(model_name);
    if (iters >= 0) model.iterations = static_cast<uint32_t>(iters);
    if (warmup >= 0) model.warmup_iterations = static_cast<uint32_t>(warmup);
    if (model.warmup_iterations >= model.iterations) {
      throw cemu::ConfigError("warmup must be < iterations");
    }
    cemu::global_event_log().open(trace_path);

    cemu::WorkerSession::Overrides overrides;
    if (!listen_override.empty()) {
      overrides.listen = cemu::parse_endpoint(listen_override);
    }
    if (!connect_override.empty()) {
      overrides.connect = cemu::parse_endpoint(connect_override);
    }
    cemu::WorkerSession session(
        cfg, rank, cemu::harness_plan(model, cfg.bucket_bytes), overrides);

    const int64_t wall0 = cemu::now_us();
    const int64_t cpu0 = cemu::process_cpu_time_us();
    const auto traces = cemu::run_training_loop(cfg, model, session);
    const int64_t cpu1 = cemu::process_cpu_time_us();
    const int64_t wall1 = cemu::now_us();
    session.close();

    if (!out_path.empty()) {
      cemu::write_iteration_csv(out_path, traces, deterministic);
    }
    const auto stats =
        cemu::iteration_stats(traces, model.warmup_iterations);
    const double cpu_pct =
        wall1 > wall0
            ? 100.0 * static_cast<double>(cpu1 - cpu0) / (wall1 - wall0)
            : 0.0;
    std::printf(
        "SUMMARY model=%s rank=%u iters=%u warmup=%u buckets=%zu "
        "mean_us=%.3f stddev_us=%.3f cpu_pct=%.2f\n",
        model.name.c_str(), rank, model.iterations, model.warmup_iterations,
        cemu::bucketize(model, cfg.bucket_bytes).size(), stats.mean_us,
        stats.stddev_us, cpu_pct);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cemu-worker: %s\n", e.what());
    return 1;
  }
}
