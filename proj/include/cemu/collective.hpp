#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cemu/config.hpp"
#include "cemu/dag.hpp"
#include "cemu/net.hpp"
#include "cemu/transport.hpp"

namespace cemu {

// Completion handle for one asynchronous collective call.
class CollOp {
 public:
  bool done() const;
  bool failed() const;
  int64_t issue_us() const { return issue_us_; }
  int64_t complete_us() const { return complete_us_; }

 private:
  friend class WorkerSession;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool done_ = false;
  bool failed_ = false;
  std::string error_;
  int64_t issue_us_ = 0;
  int64_t complete_us_ = 0;
};

using CollHandle = std::shared_ptr<CollOp>;

// The real node's collective session: ring membership, connections to ring
// neighbors, and an in-order execution engine for asynchronous collective
// calls (one operation in flight at a time, like a single in-order stream;
// issue returns immediately and a background engine drives the wire work).
//
// The same code path serves baseline and emulated runs; which one happens is
// decided purely by who answers at the configured endpoints.
class WorkerSession {
 public:
  // Transport-level endpoint overrides (for multi-host deployments or NAT):
  // they change where this process binds and dials without touching the job
  // identity, so the config digest both sides compare stays the same.
  struct Overrides {
    std::optional<Endpoint> listen;   // where this rank accepts
    std::optional<Endpoint> connect;  // how to reach the ring successor
  };

  WorkerSession(const JobConfig& cfg, uint32_t rank,
                std::vector<CollectivePlanEntry> plan,
                const Overrides& overrides = Overrides());
  ~WorkerSession();

  uint32_t rank() const { return rank_; }
  uint32_t world_size() const { return cfg_.world_size; }

  // In-place ring all-reduce over `buffer`; the k-th call session-wide must
  // match plan[k % plan.size()].
  CollHandle allreduce_async(std::span<uint8_t> buffer, uint32_t elem_size);

  // Ring all-gather; `full` holds world_size blocks of plan bytes each and
  // this rank's own block must already sit at offset rank*bytes.
  CollHandle allgather_async(std::span<uint8_t> full, uint32_t elem_size);

  // Blocks until the operation finished; throws TransportError if the session
  // failed. Waiting again on a finished handle returns immediately.
  void wait(const CollHandle& h);

  // Issue-and-wait convenience.
  void allreduce(std::span<uint8_t> buffer, uint32_t elem_size);
  void allgather(std::span<uint8_t> full, uint32_t elem_size);

  // Graceful shutdown: BYE on the outbound link, join all threads. Implied by
  // destruction.
  void close();

 private:
  struct Submitted {
    uint32_t op_id;
    CollKind kind;
    uint32_t elem_size;
    std::span<uint8_t> buffer;
    CollHandle handle;
  };
  struct Inbox {
    std::deque<Frame> frames;
  };

  void engine_main();
  void reader_main(std::shared_ptr<FrameConn> conn);
  void accept_main();
  void run_op(const Submitted& op);
  Frame await_frame(uint32_t op_id);
  void fail_session(const std::string& why);
  CollHandle submit(CollKind kind, std::span<uint8_t> buffer,
                    uint32_t elem_size);
  const CollectiveDag& dag_for(uint32_t plan_index);

  JobConfig cfg_;
  uint32_t rank_;
  RingOrder ring_;
  std::vector<CollectivePlanEntry> plan_;
  std::vector<std::unique_ptr<CollectiveDag>> dag_cache_;

  std::shared_ptr<FrameConn> out_;  // to ring successor
  std::vector<std::shared_ptr<FrameConn>> conns_;  // accepted inbound links
  TcpListener listener_;
  std::vector<std::thread> readers_;
  std::thread acceptor_;
  std::thread engine_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Submitted> queue_;
  std::map<uint32_t, Inbox> inboxes_;
  uint32_t next_op_id_ = 0;
  bool closing_ = false;
  bool failed_ = false;
  std::string fail_reason_;
};

}  // namespace cemu
