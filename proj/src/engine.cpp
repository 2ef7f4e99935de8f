#include "cemu/engine.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>

namespace cemu {

std::string ProtocolError::str() const {
  std::ostringstream os;
  os << reason;
  if (expected) os << "; expected {" << expected->str() << "}";
  os << "; got {" << actual.str() << "}";
  return os.str();
}

OpState::OpState(uint32_t op_id, std::shared_ptr<const BoundaryDag> boundary,
                 const std::vector<double>& release_offsets_us,
                 int64_t now_us)
    : op_id_(op_id), boundary_(std::move(boundary)), created_at_us_(now_us) {
  const auto& verts = boundary_->vertices;
  if (verts.empty()) throw DagError("operation has an empty boundary");
  dir_index_.resize(verts.size());
  for (uint32_t v = 0; v < verts.size(); ++v) {
    if (verts[v].dir == BoundaryDir::kToReal) {
      dir_index_[v] = static_cast<uint32_t>(to_real_.size());
      to_real_.push_back(v);
    } else {
      dir_index_[v] = static_cast<uint32_t>(from_real_.size());
      from_real_.push_back(v);
    }
  }
  sent_bits_.assign(to_real_.size(), false);
  recv_bits_.assign(from_real_.size(), false);
  release_at_us_.resize(to_real_.size(), now_us);
  assert(release_offsets_us.size() == to_real_.size());
  for (size_t i = 0; i < to_real_.size(); ++i) {
    const double off =
        i < release_offsets_us.size() ? release_offsets_us[i] : 0.0;
    release_at_us_[i] = now_us + static_cast<int64_t>(std::llround(off));
  }
}

bool OpState::vertex_marked(uint32_t v) const {
  const auto& vert = boundary_->vertices[v];
  return vert.dir == BoundaryDir::kToReal ? sent_bits_[dir_index_[v]]
                                          : recv_bits_[dir_index_[v]];
}

bool OpState::preds_marked(uint32_t v) const {
  for (uint32_t p : boundary_->preds[v]) {
    if (!vertex_marked(p)) return false;
  }
  return true;
}

std::optional<MsgDesc> OpState::try_send_to_real(int64_t now_us) {
  if (failed_ || sent_cursor_ >= to_real_.size()) return std::nullopt;
  // Head-of-line discipline: only the next unsent message is considered, so
  // the real side always observes the canonical order.
  const uint32_t v = to_real_[sent_cursor_];
  if (!preds_marked(v)) return std::nullopt;
  if (now_us < release_at_us_[sent_cursor_]) return std::nullopt;
  sent_bits_[sent_cursor_] = true;
  ++sent_cursor_;
  const MsgDesc& m = boundary_->vertices[v].msg;
  global_event_log().log(op_id_, "send", "to_real", m.step, m.chunk_index);
  return m;
}

std::optional<ProtocolError> OpState::on_receive_from_real(
    const MsgDesc& msg) {
  auto fail = [&](const std::string& reason,
                  std::optional<MsgDesc> expected) -> ProtocolError {
    ProtocolError err{reason, std::move(expected), msg};
    failed_ = true;
    error_ = err.str();
    global_event_log().log(op_id_, "error", "from_real", msg.step,
                           msg.chunk_index);
    return err;
  };

  if (failed_) {
    return fail("operation already failed", std::nullopt);
  }
  if (recv_cursor_ >= from_real_.size()) {
    return fail("unexpected message: all messages already received",
                std::nullopt);
  }
  // Duplicate of something already marked gets its own report.
  for (size_t i = 0; i < recv_cursor_; ++i) {
    if (boundary_->vertices[from_real_[i]].msg == msg) {
      return fail("duplicate message", std::nullopt);
    }
  }
  const MsgDesc& expected = boundary_->vertices[from_real_[recv_cursor_]].msg;
  if (!(msg == expected)) {
    std::string reason = "unexpected message";
    if (msg.step != expected.step) {
      reason = "expected step " + std::to_string(expected.step);
    } else if (msg.chunk_index != expected.chunk_index) {
      reason = "expected chunk " + std::to_string(expected.chunk_index);
    } else if (msg.size_bytes != expected.size_bytes) {
      reason = "expected size " + std::to_string(expected.size_bytes);
    }
    return fail(reason, expected);
  }
  recv_bits_[recv_cursor_] = true;
  ++recv_cursor_;
  global_event_log().log(op_id_, "recv", "from_real", msg.step,
                         msg.chunk_index);
  return std::nullopt;
}

bool OpState::is_complete() const {
  return !failed_ && sent_cursor_ == to_real_.size() &&
         recv_cursor_ == from_real_.size();
}

std::optional<int64_t> OpState::next_release_at_us() const {
  if (failed_ || sent_cursor_ >= to_real_.size()) return std::nullopt;
  const uint32_t v = to_real_[sent_cursor_];
  if (!preds_marked(v)) return std::nullopt;
  return release_at_us_[sent_cursor_];
}

uint32_t Controller::register_operation(
    std::shared_ptr<const BoundaryDag> boundary,
    const std::vector<double>& release_offsets_us, int64_t now_us) {
  std::lock_guard<std::mutex> lk(mu_);
  const uint32_t id = next_op_id_++;
  assert(live_.count(id) == 0 && "duplicate op_id");
  live_.emplace(id, std::make_unique<OpState>(id, std::move(boundary),
                                              release_offsets_us, now_us));
  live_order_.push_back(id);
  global_event_log().log(id, "register", "-", -1, -1);
  return id;
}

std::vector<std::pair<uint32_t, MsgDesc>> Controller::poll_round_robin(
    int64_t now_us) {
  std::lock_guard<std::mutex> lk(mu_);
  std::vector<std::pair<uint32_t, MsgDesc>> out;
  if (live_order_.empty()) return out;
  const size_t count = live_order_.size();
  if (cursor_ >= count) cursor_ = 0;
  std::vector<uint32_t> done;
  for (size_t i = 0; i < count; ++i) {
    const uint32_t id = live_order_[(cursor_ + i) % count];
    OpState& op = *live_.at(id);
    if (auto msg = op.try_send_to_real(now_us)) {
      out.emplace_back(id, *msg);
    }
    if (op.is_complete() || op.failed()) done.push_back(id);
  }
  for (uint32_t id : done) retire_locked(id, now_us);
  if (!live_order_.empty()) cursor_ = (cursor_ + 1) % live_order_.size();
  return out;
}

std::optional<ProtocolError> Controller::on_receive(uint32_t op_id,
                                                    const MsgDesc& msg,
                                                    int64_t now_us) {
  std::lock_guard<std::mutex> lk(mu_);
  auto it = live_.find(op_id);
  if (it == live_.end()) {
    ProtocolError err;
    err.reason = finished_.count(op_id)
                     ? "message for already-finished operation"
                     : "message for unknown operation";
    err.actual = msg;
    return err;
  }
  auto res = it->second->on_receive_from_real(msg);
  // Failures retire immediately so the poller stops touching them; an
  // operation whose final receive just landed retires here as well.
  if (res || it->second->is_complete()) retire_locked(op_id, now_us);
  return res;
}

bool Controller::op_complete(uint32_t op_id) const {
  std::lock_guard<std::mutex> lk(mu_);
  auto it = live_.find(op_id);
  if (it != live_.end()) return it->second->is_complete();
  auto fin = finished_.find(op_id);
  return fin != finished_.end() && !fin->second;
}

bool Controller::op_failed(uint32_t op_id) const {
  std::lock_guard<std::mutex> lk(mu_);
  auto it = live_.find(op_id);
  if (it != live_.end()) return it->second->failed();
  auto fin = finished_.find(op_id);
  return fin != finished_.end() && fin->second;
}

size_t Controller::live_count() const {
  std::lock_guard<std::mutex> lk(mu_);
  return live_order_.size();
}

std::optional<int64_t> Controller::next_release_at_us() const {
  std::lock_guard<std::mutex> lk(mu_);
  std::optional<int64_t> best;
  for (const auto& [id, op] : live_) {
    if (auto t = op->next_release_at_us()) {
      if (!best || *t < *best) best = t;
    }
  }
  return best;
}

std::vector<Controller::RetiredOp> Controller::retired() const {
  std::lock_guard<std::mutex> lk(mu_);
  return {retired_.begin(), retired_.end()};
}

void Controller::retire_locked(uint32_t op_id, int64_t now_us) {
  auto it = live_.find(op_id);
  if (it == live_.end()) return;
  OpState& op = *it->second;
  RetiredOp r;
  r.op_id = op_id;
  r.failed = op.failed();
  r.error = op.error();
  r.created_at_us = op.created_at_us();
  r.retired_at_us = now_us;
  retired_.push_back(std::move(r));
  finished_[op_id] = op.failed();
  // the finished index follows the bounded ring: once a trace drops out,
  // late traffic for that op is simply "unknown"
  while (retired_.size() > retired_capacity_) {
    finished_.erase(retired_.front().op_id);
    retired_.pop_front();
  }
  global_event_log().log(op_id, op.failed() ? "error" : "complete", "-", -1,
                         -1);
  live_.erase(it);
  auto pos = std::find(live_order_.begin(), live_order_.end(), op_id);
  const size_t idx = static_cast<size_t>(pos - live_order_.begin());
  live_order_.erase(pos);
  if (idx < cursor_ && cursor_ > 0) --cursor_;
}

}  // namespace cemu
