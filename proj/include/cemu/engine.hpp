#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cemu/dag.hpp"
#include "cemu/trace.hpp"

namespace cemu {

// Outcome of matching an incoming message against the expected one.
struct ProtocolError {
  std::string reason;
  std::optional<MsgDesc> expected;
  MsgDesc actual;

  std::string str() const;
};

// Per-operation emulation state: the boundary DAG plus one bit per boundary
// message recording whether it has been sent to / received from the real
// side, and a release floor per to-real message (delay model + injection).
//
// Invariants: a sent bit is set only after every boundary predecessor's bit;
// received bits are set at most once, strictly in canonical order; the
// operation is complete exactly when both bitmaps are full.
class OpState {
 public:
  OpState(uint32_t op_id, std::shared_ptr<const BoundaryDag> boundary,
          const std::vector<double>& release_offsets_us, int64_t now_us);

  uint32_t op_id() const { return op_id_; }
  const BoundaryDag& boundary() const { return *boundary_; }
  int64_t created_at_us() const { return created_at_us_; }

  // Try Send: the lowest-ordered unsent to-real message is released iff all
  // its boundary predecessors are marked and its release floor has passed.
  // Marks the sent bit before returning. nullopt is not an error.
  std::optional<MsgDesc> try_send_to_real(int64_t now_us);

  // Try Receive: matches strictly in order against the next expected
  // from-real message; mismatches (wrong step/chunk/size, duplicates) are
  // fatal for the operation.
  std::optional<ProtocolError> on_receive_from_real(const MsgDesc& msg);

  bool is_complete() const;
  bool failed() const { return failed_; }
  const std::string& error() const { return error_; }

  // Monotonic release floor of the next unsent to-real message, if its
  // dependencies are already satisfied and only time gates it.
  std::optional<int64_t> next_release_at_us() const;

  size_t sent_count() const { return sent_cursor_; }
  size_t received_count() const { return recv_cursor_; }
  const std::vector<bool>& sent_bitmap() const { return sent_bits_; }
  const std::vector<bool>& received_bitmap() const { return recv_bits_; }
  int64_t release_not_before_us(size_t to_real_index) const {
    return release_at_us_[to_real_index];
  }

 private:
  bool vertex_marked(uint32_t v) const;
  bool preds_marked(uint32_t v) const;

  uint32_t op_id_;
  std::shared_ptr<const BoundaryDag> boundary_;
  int64_t created_at_us_;
  std::vector<uint32_t> to_real_;    // vertex ids in canonical order
  std::vector<uint32_t> from_real_;  // vertex ids in canonical order
  std::vector<uint32_t> dir_index_;  // per vertex: index within its direction
  std::vector<bool> sent_bits_;      // per to-real message
  std::vector<bool> recv_bits_;      // per from-real message
  std::vector<int64_t> release_at_us_;
  size_t sent_cursor_ = 0;
  size_t recv_cursor_ = 0;
  bool failed_ = false;
  std::string error_;
};

// The logically centralized controller: op_id -> OpState registry with
// round-robin polling across live operations. All mutation goes through the
// controller mutex; the receive path and the polling path may run
// concurrently against one instance.
class Controller {
 public:
  explicit Controller(size_t retired_capacity = 1024)
      : retired_capacity_(retired_capacity) {}

  // Registers a new operation and returns its id (sequential from 0).
  uint32_t register_operation(std::shared_ptr<const BoundaryDag> boundary,
                              const std::vector<double>& release_offsets_us,
                              int64_t now_us);

  // One fairness pass: visits live operations starting at the round-robin
  // cursor, collects at most one releasable message per operation, retires
  // completed operations, then advances the cursor.
  std::vector<std::pair<uint32_t, MsgDesc>> poll_round_robin(int64_t now_us);

  // Routes an incoming message to its operation. Unknown op ids and
  // per-operation mismatches surface as ProtocolError.
  std::optional<ProtocolError> on_receive(uint32_t op_id, const MsgDesc& msg,
                                          int64_t now_us);

  bool op_complete(uint32_t op_id) const;
  bool op_failed(uint32_t op_id) const;
  size_t live_count() const;
  std::optional<int64_t> next_release_at_us() const;

  // Completed (or failed) operations, most recent last, bounded ring.
  struct RetiredOp {
    uint32_t op_id;
    bool failed;
    std::string error;
    int64_t created_at_us;
    int64_t retired_at_us;
  };
  std::vector<RetiredOp> retired() const;

 private:
  void retire_locked(uint32_t op_id, int64_t now_us);

  mutable std::mutex mu_;
  size_t retired_capacity_;
  uint32_t next_op_id_ = 0;
  std::map<uint32_t, std::unique_ptr<OpState>> live_;
  std::vector<uint32_t> live_order_;
  size_t cursor_ = 0;
  std::deque<RetiredOp> retired_;
  std::map<uint32_t, bool> finished_;  // op_id -> failed?
};

}  // namespace cemu
