#pragma once

#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>

namespace cemu {

// Structured event log, one line per send/receive/complete/error:
//   <timestamp_us> <op_id> <event> <direction> <step> <chunk>
// with "-" for fields that do not apply. Opened from an explicit path or the
// CEMU_TRACE environment variable; a default-constructed log swallows events.
class EventLog {
 public:
  EventLog() = default;

  // Opens `path` if nonempty, otherwise falls back to $CEMU_TRACE.
  void open(const std::string& path);

  bool enabled() const { return enabled_; }

  void log(uint32_t op_id, const char* event, const char* direction,
           int64_t step, int64_t chunk);
  void message(const char* event, const std::string& detail);

 private:
  bool enabled_ = false;
  std::ofstream out_;
  std::mutex mu_;
};

// Process-wide log shared by the transport and engine layers.
EventLog& global_event_log();

}  // namespace cemu
