#include "cemu/collective.hpp"

#include <poll.h>

#include <cassert>
#include <cstring>

#include "cemu/clock.hpp"
#include "cemu/reduce.hpp"
#include "cemu/trace.hpp"

namespace cemu {

namespace {
constexpr int kAwaitTimeoutMs = 30000;
}

bool CollOp::done() const {
  std::lock_guard<std::mutex> lk(mu_);
  return done_;
}

bool CollOp::failed() const {
  std::lock_guard<std::mutex> lk(mu_);
  return failed_;
}

WorkerSession::WorkerSession(const JobConfig& cfg, uint32_t rank,
                             std::vector<CollectivePlanEntry> plan,
                             const Overrides& overrides)
    : cfg_(cfg),
      rank_(rank),
      ring_(cfg.world_size),
      plan_(std::move(plan)) {
  if (rank_ >= cfg_.world_size) {
    throw TransportError("rank " + std::to_string(rank_) + " out of range");
  }
  dag_cache_.resize(plan_.size());

  // Bind our own endpoint before reaching out: ring neighbors connect to it
  // concurrently during startup.
  listener_.bind_listen(overrides.listen ? *overrides.listen
                                         : cfg_.endpoints[rank_]);
  acceptor_ = std::thread([this] { accept_main(); });

  try {
    const uint32_t succ = ring_.successor(rank_);
    out_ = std::make_shared<FrameConn>(
        tcp_connect(overrides.connect ? *overrides.connect
                                      : cfg_.endpoints[succ]));

    SessionHello mine;
    mine.rank = static_cast<int32_t>(rank_);
    mine.world_size = cfg_.world_size;
    mine.config_digest = config_digest(cfg_);
    mine.plan = plan_;
    perform_handshake(*out_, HandshakeRole::kInitiator, mine,
                      /*enforce_plan_match=*/false);
  } catch (...) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      closing_ = true;
    }
    if (acceptor_.joinable()) acceptor_.join();
    for (auto& c : conns_) c->shutdown();
    for (auto& r : readers_) {
      if (r.joinable()) r.join();
    }
    throw;
  }

  {
    std::lock_guard<std::mutex> lk(mu_);
    readers_.emplace_back([this, conn = out_] { reader_main(conn); });
  }
  engine_ = std::thread([this] { engine_main(); });
}

WorkerSession::~WorkerSession() {
  try {
    close();
  } catch (...) {
  }
}

void WorkerSession::accept_main() {
  // poll + accept so shutdown never depends on waking a blocked accept(2)
  while (true) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (closing_) return;
    }
    if (!listener_.valid()) return;
    pollfd pfd{};
    pfd.fd = listener_.fd();
    pfd.events = POLLIN;
    const int r = ::poll(&pfd, 1, 200);
    if (r <= 0) continue;
    TcpSocket sock;
    try {
      sock = listener_.accept_conn();
    } catch (const NetError&) {
      return;
    }
    auto conn = std::make_shared<FrameConn>(std::move(sock));
    SessionHello mine;
    mine.rank = static_cast<int32_t>(rank_);
    mine.world_size = cfg_.world_size;
    mine.config_digest = config_digest(cfg_);
    mine.plan = plan_;
    try {
      perform_handshake(*conn, HandshakeRole::kResponder, mine,
                        /*enforce_plan_match=*/true);
    } catch (const std::exception& e) {
      global_event_log().message("handshake_reject", e.what());
      continue;
    }
    std::lock_guard<std::mutex> lk(mu_);
    if (closing_) return;
    conns_.push_back(conn);
    readers_.emplace_back([this, conn] { reader_main(conn); });
  }
}

void WorkerSession::reader_main(std::shared_ptr<FrameConn> conn) {
  try {
    while (true) {
      std::optional<Frame> f;
      try {
        f = conn->read_frame();
      } catch (const NetError&) {
        std::lock_guard<std::mutex> lk(mu_);
        if (closing_) return;
        throw;
      }
      if (!f) {
        std::lock_guard<std::mutex> lk(mu_);
        if (!closing_) {
          // EOF without BYE while operations may be pending
          fail_reason_ = "peer closed connection unexpectedly";
          failed_ = true;
          cv_.notify_all();
        }
        return;
      }
      switch (f->type) {
        case MsgType::kData:
        case MsgType::kOpenOp: {
          std::lock_guard<std::mutex> lk(mu_);
          inboxes_[f->op_id].frames.push_back(std::move(*f));
          cv_.notify_all();
          break;
        }
        case MsgType::kBye:
          return;  // orderly stream end; engine consumed everything before it
        case MsgType::kError: {
          fail_session("peer reported error: " +
                       std::string(f->payload.begin(), f->payload.end()));
          return;
        }
        default:
          fail_session(std::string("unexpected frame type ") +
                       msg_type_name(f->type));
          return;
      }
    }
  } catch (const std::exception& e) {
    fail_session(std::string("transport failure: ") + e.what());
  }
}

void WorkerSession::fail_session(const std::string& why) {
  std::lock_guard<std::mutex> lk(mu_);
  if (failed_) return;
  failed_ = true;
  fail_reason_ = why;
  global_event_log().message("session_error", why);
  cv_.notify_all();
}

CollHandle WorkerSession::submit(CollKind kind, std::span<uint8_t> buffer,
                                 uint32_t elem_size) {
  auto handle = std::make_shared<CollOp>();
  handle->issue_us_ = now_us();
  std::lock_guard<std::mutex> lk(mu_);
  if (closing_) throw TransportError("session is closing");
  if (plan_.empty()) {
    throw TransportError("no collectives were declared for this session");
  }
  const CollectivePlanEntry& entry = plan_[next_op_id_ % plan_.size()];
  if (entry.kind != kind || entry.elem_size != elem_size) {
    throw TransportError("collective call does not match the declared plan");
  }
  const uint64_t want = kind == CollKind::kAllReduce
                            ? entry.bytes
                            : entry.bytes * cfg_.world_size;
  if (buffer.size() != want) {
    throw TransportError("buffer size " + std::to_string(buffer.size()) +
                         " does not match plan entry (" +
                         std::to_string(want) + ")");
  }
  Submitted op;
  op.op_id = next_op_id_++;
  op.kind = kind;
  op.elem_size = elem_size;
  op.buffer = buffer;
  op.handle = handle;
  queue_.push_back(std::move(op));
  cv_.notify_all();
  return handle;
}

CollHandle WorkerSession::allreduce_async(std::span<uint8_t> buffer,
                                          uint32_t elem_size) {
  return submit(CollKind::kAllReduce, buffer, elem_size);
}

CollHandle WorkerSession::allgather_async(std::span<uint8_t> full,
                                          uint32_t elem_size) {
  return submit(CollKind::kAllGather, full, elem_size);
}

void WorkerSession::wait(const CollHandle& h) {
  if (!h) throw std::invalid_argument("wait on null collective handle");
  std::unique_lock<std::mutex> lk(h->mu_);
  h->cv_.wait(lk, [&] { return h->done_; });
  if (h->failed_) throw TransportError(h->error_);
}

void WorkerSession::allreduce(std::span<uint8_t> buffer, uint32_t elem_size) {
  wait(allreduce_async(buffer, elem_size));
}

void WorkerSession::allgather(std::span<uint8_t> full, uint32_t elem_size) {
  wait(allgather_async(full, elem_size));
}

const CollectiveDag& WorkerSession::dag_for(uint32_t plan_index) {
  if (!dag_cache_[plan_index]) {
    const CollectivePlanEntry& e = plan_[plan_index];
    dag_cache_[plan_index] = std::make_unique<CollectiveDag>(
        build_collective_dag(e.kind, cfg_.world_size, e.bytes, /*op_id=*/0,
                             e.elem_size));
  }
  return *dag_cache_[plan_index];
}

Frame WorkerSession::await_frame(uint32_t op_id) {
  std::unique_lock<std::mutex> lk(mu_);
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(kAwaitTimeoutMs);
  while (true) {
    if (failed_) throw TransportError(fail_reason_);
    auto it = inboxes_.find(op_id);
    if (it != inboxes_.end() && !it->second.frames.empty()) {
      Frame f = std::move(it->second.frames.front());
      it->second.frames.pop_front();
      return f;
    }
    if (cv_.wait_until(lk, deadline) == std::cv_status::timeout) {
      lk.unlock();
      fail_session("timed out waiting for collective traffic");
      throw TransportError("timed out waiting for collective traffic");
    }
  }
}

void WorkerSession::run_op(const Submitted& op) {
  const uint32_t plan_index = op.op_id % static_cast<uint32_t>(plan_.size());
  const CollectivePlanEntry& entry = plan_[plan_index];
  const CollectiveDag& dag = dag_for(plan_index);
  const uint32_t n = cfg_.world_size;
  const uint32_t succ = ring_.successor(rank_);

  Frame open;
  open.type = MsgType::kOpenOp;
  open.op_id = op.op_id;
  open.seq = plan_index;
  open.src_rank = static_cast<uint16_t>(rank_);
  open.dst_rank = static_cast<uint16_t>(succ);
  out_->write_frame(open);

  auto slice = [&](const MsgDesc& m) -> std::span<uint8_t> {
    if (op.kind == CollKind::kAllReduce) {
      const uint64_t off =
          chunk_offset_bytes(n, entry.bytes, entry.elem_size, m.chunk_index);
      return op.buffer.subspan(off, m.size_bytes);
    }
    return op.buffer.subspan(static_cast<uint64_t>(m.chunk_index) *
                                 entry.bytes,
                             entry.bytes);
  };

  for (uint32_t p = 0; p < dag.positions; ++p) {
    MsgDesc sm = scheduled_send(dag, rank_, p);
    sm.op_id = op.op_id;
    Frame f;
    f.type = MsgType::kData;
    f.op_id = op.op_id;
    f.seq = p;
    f.src_rank = static_cast<uint16_t>(sm.src_rank);
    f.dst_rank = static_cast<uint16_t>(sm.dst_rank);
    f.chunk_index = static_cast<uint16_t>(sm.chunk_index);
    out_->write_data(f, slice(sm));
    global_event_log().log(op.op_id, "send", "out", p, sm.chunk_index);

    MsgDesc em = scheduled_recv(dag, rank_, p);
    em.op_id = op.op_id;
    Frame rf;
    while (true) {
      rf = await_frame(op.op_id);
      if (rf.type == MsgType::kOpenOp) {
        if (rf.seq != plan_index) {
          const std::string why =
              "peer opened op " + std::to_string(op.op_id) +
              " with plan index " + std::to_string(rf.seq) + ", expected " +
              std::to_string(plan_index);
          fail_session(why);
          throw TransportError(why);
        }
        continue;  // a peer's op announcement, not data
      }
      break;
    }
    if (rf.seq != p || rf.src_rank != em.src_rank ||
        rf.dst_rank != em.dst_rank || rf.chunk_index != em.chunk_index ||
        rf.payload.size() != em.size_bytes) {
      const std::string why =
          "protocol mismatch: expected {" + em.str() + "}, got {op=" +
          std::to_string(rf.op_id) + " step=" + std::to_string(rf.seq) +
          " src=" + std::to_string(rf.src_rank) + " dst=" +
          std::to_string(rf.dst_rank) + " chunk=" +
          std::to_string(rf.chunk_index) + " size=" +
          std::to_string(rf.payload.size()) + "}";
      fail_session(why);
      throw TransportError(why);
    }
    global_event_log().log(op.op_id, "recv", "in", p, em.chunk_index);

    std::span<uint8_t> dst = slice(em);
    const bool reduce_phase =
        op.kind == CollKind::kAllReduce && p <= n - 2;
    if (reduce_phase) {
      if (entry.elem_size == 4) {
        reduce_add_i32(reinterpret_cast<int32_t*>(dst.data()),
                       reinterpret_cast<const int32_t*>(rf.payload.data()),
                       dst.size() / 4);
      } else {
        reduce_add_u8(dst.data(), rf.payload.data(), dst.size());
      }
    } else {
      std::memcpy(dst.data(), rf.payload.data(), dst.size());
    }
  }
}

void WorkerSession::engine_main() {
  while (true) {
    Submitted op;
    {
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [&] { return !queue_.empty() || closing_ || failed_; });
      if (failed_ || (closing_ && queue_.empty())) break;
      op = std::move(queue_.front());
      queue_.pop_front();
    }
    bool ok = false;
    std::string err;
    try {
      run_op(op);
      ok = true;
    } catch (const std::exception& e) {
      err = e.what();
    }
    {
      std::lock_guard<std::mutex> lk(op.handle->mu_);
      op.handle->done_ = true;
      op.handle->failed_ = !ok;
      op.handle->error_ = err;
      op.handle->complete_us_ = now_us();
    }
    op.handle->cv_.notify_all();
    {
      std::lock_guard<std::mutex> lk(mu_);
      inboxes_.erase(op.op_id);
    }
    if (!ok) break;
  }
  // Drain: anything still queued fails with the session reason.
  std::deque<Submitted> rest;
  std::string reason;
  {
    std::lock_guard<std::mutex> lk(mu_);
    rest.swap(queue_);
    reason = fail_reason_.empty() ? "session closed" : fail_reason_;
  }
  for (auto& op : rest) {
    std::lock_guard<std::mutex> lk(op.handle->mu_);
    op.handle->done_ = true;
    op.handle->failed_ = true;
    op.handle->error_ = reason;
    op.handle->cv_.notify_all();
  }
}

void WorkerSession::close() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (closing_) return;
    closing_ = true;
    cv_.notify_all();
  }
  if (engine_.joinable()) engine_.join();
  bool was_failed;
  {
    std::lock_guard<std::mutex> lk(mu_);
    was_failed = failed_;
  }
  if (!was_failed && out_) {
    Frame bye;
    bye.type = MsgType::kBye;
    bye.src_rank = static_cast<uint16_t>(rank_);
    try {
      out_->write_frame(bye);
    } catch (const std::exception&) {
    }
  }
  if (acceptor_.joinable()) acceptor_.join();
  listener_.close();
  // shutdown(2) wakes readers blocked in recv; the BYE already sits ahead of
  // the FIN in the stream, so the peer still sees an orderly goodbye.
  std::vector<std::shared_ptr<FrameConn>> conns;
  {
    std::lock_guard<std::mutex> lk(mu_);
    conns = conns_;
  }
  if (out_) out_->shutdown();
  for (auto& c : conns) c->shutdown();
  for (auto& r : readers_) {
    if (r.joinable()) r.join();
  }
}

}  // namespace cemu
