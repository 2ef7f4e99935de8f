#include "cemu/emulator.hpp"

#include <poll.h>

#include <condition_variable>
#include <thread>
#include <vector>

#include "cemu/clock.hpp"
#include "cemu/trace.hpp"

namespace cemu {

Endpoint emulator_endpoint(const JobConfig& cfg) {
  Endpoint ep;
  bool have = false;
  for (uint32_t r = 0; r < cfg.world_size; ++r) {
    if (cfg.is_real(r)) continue;
    if (!have) {
      ep = cfg.endpoints[r];
      have = true;
    } else if (!(cfg.endpoints[r] == ep)) {
      throw ConfigError(
          "endpoint: the emulator serves all emulated ranks over one "
          "listener; emulated ranks must share a single endpoint");
    }
  }
  if (!have) throw ConfigError("real_ranks: nothing to emulate");
  return ep;
}

EmulatorServer::EmulatorServer(const JobConfig& cfg, Options opts)
    : cfg_(cfg),
      opts_(opts),
      listen_ep_(opts.listen ? *opts.listen : emulator_endpoint(cfg)) {
  if (opts_.poll_period_us <= 0) opts_.poll_period_us = cfg.poll_period_us;
  listener_.bind_listen(listen_ep_);
}

void EmulatorServer::serve() {
  while (!stop_.load()) {
    pollfd pfd{};
    pfd.fd = listener_.fd();
    pfd.events = POLLIN;
    const int r = ::poll(&pfd, 1, 200);
    if (r <= 0) continue;
    TcpSocket sock;
    try {
      sock = listener_.accept_conn();
    } catch (const NetError&) {
      break;
    }
    handle_session(std::move(sock));
    ++sessions_;
    if (opts_.once) break;
  }
}

void EmulatorServer::handle_session(TcpSocket sock) {
  FrameConn conn(std::move(sock));

  SessionHello mine;
  mine.rank = -1;  // the environment, not a single rank
  mine.world_size = cfg_.world_size;
  mine.config_digest = config_digest(cfg_);

  SessionHello peer;
  try {
    peer = perform_handshake(conn, HandshakeRole::kResponder, mine,
                             /*enforce_plan_match=*/false);
  } catch (const std::exception& e) {
    global_event_log().message("handshake_reject", e.what());
    return;
  }
  if (peer.rank < 0 || !cfg_.is_real(static_cast<uint32_t>(peer.rank))) {
    conn.write_error("rank " + std::to_string(peer.rank) +
                     " is not a real rank in this job");
    return;
  }
  mine.plan = peer.plan;  // adopted: OPEN_OP binds op ids to entries

  // Pre-build one boundary template per plan entry; per-op instances patch
  // the op id in.
  const DelayModelParams delay = DelayModelParams::from_config(cfg_);
  struct Template {
    std::shared_ptr<const BoundaryDag> boundary;
    std::vector<double> offsets;
  };
  std::vector<Template> templates;
  try {
    for (const auto& e : peer.plan) {
      const CollectiveDag dag =
          build_collective_dag(e.kind, cfg_.world_size, e.bytes, 0,
                               e.elem_size);
      auto boundary = std::make_shared<BoundaryDag>(
          project_boundary(dag, cfg_.real_ranks, BoundarySide::kEmulated));
      Template t;
      t.offsets = release_offsets_us(*boundary, delay, e.bytes);
      t.boundary = std::move(boundary);
      templates.push_back(std::move(t));
    }
  } catch (const std::exception& e) {
    conn.write_error(std::string("cannot build plan: ") + e.what());
    return;
  }

  Controller controller;
  std::mutex poll_mu;
  std::condition_variable poll_cv;
  bool session_done = false;

  // Serializes frame emission: once an ERROR (or BYE) went out, no DATA may
  // follow on this connection, and a release->write pass is atomic so the
  // wire order always matches the canonical release order.
  struct GuardedWrites {
    FrameConn& conn;
    Controller& ctrl;
    std::mutex mu;
    bool dead = false;

    // Releases everything currently eligible and writes it out. Called from
    // the receive path (events unlock releases) and from the poller (time
    // floors expire).
    void drain() {
      std::lock_guard<std::mutex> lk(mu);
      if (dead) return;
      while (true) {
        const auto batch = ctrl.poll_round_robin(now_us());
        if (batch.empty()) break;
        for (const auto& [op_id, msg] : batch) {
          Frame f;
          f.type = MsgType::kData;
          f.op_id = op_id;
          f.seq = msg.step;
          f.src_rank = static_cast<uint16_t>(msg.src_rank);
          f.dst_rank = static_cast<uint16_t>(msg.dst_rank);
          f.chunk_index = static_cast<uint16_t>(msg.chunk_index);
          conn.write_data_zero(f, msg.size_bytes);
        }
      }
    }
    bool frame(const Frame& f) {
      std::lock_guard<std::mutex> lk(mu);
      if (dead) return false;
      conn.write_frame(f);
      if (f.type == MsgType::kError || f.type == MsgType::kBye) dead = true;
      return true;
    }
    void error(const std::string& reason) {
      Frame f;
      f.type = MsgType::kError;
      f.payload.assign(reason.begin(), reason.end());
      try {
        frame(f);
      } catch (const std::exception&) {
        std::lock_guard<std::mutex> lk(mu);
        dead = true;
      }
    }
  } writes{conn, controller, {}, false};

  // Polling path: the receive path drains eligible releases inline, so this
  // thread only has to watch time floors (delay model and injection) and
  // acts as a fallback sweep.
  std::thread poller([&] {
    std::unique_lock<std::mutex> lk(poll_mu);
    while (!session_done) {
      const auto next = controller.next_release_at_us();
      if (next) {
        const int64_t now = now_us();
        if (*next > now) {
          const int64_t wait =
              std::max<int64_t>(*next - now, opts_.poll_period_us);
          poll_cv.wait_for(lk, std::chrono::microseconds(wait));
        }
      } else {
        poll_cv.wait_for(lk, std::chrono::milliseconds(2));
      }
      if (session_done) break;
      lk.unlock();
      try {
        writes.drain();
      } catch (const std::exception& e) {
        global_event_log().message("send_fail", e.what());
        lk.lock();
        session_done = true;
        return;
      }
      lk.lock();
    }
  });

  auto finish = [&] {
    {
      std::lock_guard<std::mutex> lk(poll_mu);
      session_done = true;
    }
    poll_cv.notify_all();
    poller.join();
  };

  // Receive path.
  try {
    while (true) {
      auto f = conn.read_frame();
      if (!f) break;
      if (f->type == MsgType::kOpenOp) {
        if (f->seq >= templates.size()) {
          writes.error("OPEN_OP with plan index " +
                           std::to_string(f->seq) + " out of range");
          break;
        }
        if (f->seq != f->op_id % templates.size()) {
          writes.error("OPEN_OP binds op " + std::to_string(f->op_id) +
                           " to plan index " + std::to_string(f->seq) +
                           ", expected " +
                           std::to_string(f->op_id % templates.size()));
          break;
        }
        const Template& t = templates[f->seq];
        auto boundary = std::make_shared<BoundaryDag>(*t.boundary);
        for (auto& v : boundary->vertices) v.msg.op_id = f->op_id;
        // Mirror the announcement, as a real peer starting the op would.
        Frame open;
        open.type = MsgType::kOpenOp;
        open.op_id = f->op_id;
        open.seq = f->seq;
        writes.frame(open);
        const uint32_t id = controller.register_operation(
            std::move(boundary), t.offsets, now_us());
        if (id != f->op_id) {
          writes.error("op ids out of sync: peer opened " +
                           std::to_string(f->op_id) + ", emulator is at " +
                           std::to_string(id));
          break;
        }
        writes.drain();
        poll_cv.notify_all();
      } else if (f->type == MsgType::kData) {
        MsgDesc msg;
        msg.op_id = f->op_id;
        msg.step = f->seq;
        msg.src_rank = f->src_rank;
        msg.dst_rank = f->dst_rank;
        msg.chunk_index = f->chunk_index;
        msg.size_bytes = f->payload.size();
        const auto err = controller.on_receive(f->op_id, msg, now_us());
        if (err) {
          writes.error(err->str());
          break;
        }
        writes.drain();
        poll_cv.notify_all();
      } else if (f->type == MsgType::kBye) {
        Frame bye;
        bye.type = MsgType::kBye;
        try {
          writes.frame(bye);
        } catch (const std::exception&) {
        }
        break;
      } else {
        writes.error(std::string("unexpected frame type ") +
                         msg_type_name(f->type));
        break;
      }
    }
  } catch (const std::exception& e) {
    global_event_log().message("session_error", e.what());
  }
  finish();
}

}  // namespace cemu
