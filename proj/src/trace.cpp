#include "cemu/trace.hpp"

#include <cstdlib>

#include "cemu/clock.hpp"

namespace cemu {

void EventLog::open(const std::string& path) {
  std::string p = path;
  if (p.empty()) {
    const char* env = std::getenv("CEMU_TRACE");
    if (env != nullptr) p = env;
  }
  if (p.empty()) return;
  std::lock_guard<std::mutex> lk(mu_);
  out_.open(p, std::ios::out | std::ios::trunc);
  enabled_ = out_.is_open();
}

void EventLog::log(uint32_t op_id, const char* event, const char* direction,
                   int64_t step, int64_t chunk) {
  if (!enabled_) return;
  std::lock_guard<std::mutex> lk(mu_);
  out_ << now_us() << " " << op_id << " " << event << " " << direction << " ";
  if (step >= 0) {
    out_ << step;
  } else {
    out_ << "-";
  }
  out_ << " ";
  if (chunk >= 0) {
    out_ << chunk;
  } else {
    out_ << "-";
  }
  out_ << "\n";
  out_.flush();
}

void EventLog::message(const char* event, const std::string& detail) {
  if (!enabled_) return;
  std::lock_guard<std::mutex> lk(mu_);
  out_ << now_us() << " - " << event << " " << detail << "\n";
  out_.flush();
}

EventLog& global_event_log() {
  static EventLog log;
  return log;
}

}  // namespace cemu
