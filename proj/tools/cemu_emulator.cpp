// The emulated environment process: binds the emulated ranks' shared
// endpoint and impersonates every rank outside the real set.
#include <CLI11.hpp>

#include <cstdio>

#include "cemu/emulator.hpp"
#include "cemu/trace.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cemu emulator: impersonates the emulated node set"};
  std::string config_path;
  std::string trace_path;
  bool once = false;
  int64_t poll_us = 0;
  app.add_option("--config", config_path, "job config file")->required();
  app.add_option("--trace", trace_path, "event log path (or $CEMU_TRACE)");
  app.add_flag("--once", once, "serve one session, then exit");
  app.add_option("--poll-us", poll_us, "poll period override (microseconds)");
  std::string listen_override;
  app.add_option("--listen", listen_override,
                 "bind host:port (overrides the config-derived endpoint)");
  CLI11_PARSE(app, argc, argv);

  try {
    const cemu::JobConfig cfg = cemu::load_job_config(config_path);
    cemu::global_event_log().open(trace_path);
    cemu::EmulatorServer::Options opts;
    opts.once = once;
    opts.poll_period_us = poll_us;
    if (!listen_override.empty()) {
      opts.listen = cemu::parse_endpoint(listen_override);
    }
    cemu::EmulatorServer server(cfg, opts);
    std::printf("listening on %s\n", server.listen_endpoint().str().c_str());
    std::fflush(stdout);
    server.serve();
    std::printf("served %llu session(s)\n",
                static_cast<unsigned long long>(server.sessions_served()));
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cemu-emulator: %s\n", e.what());
    return 1;
  }
}
