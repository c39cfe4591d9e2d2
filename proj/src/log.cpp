#include "motionsel/log.hpp"

#include <cstdarg>
#include <cstdlib>
#include <cstring>

namespace motionsel {

LogLevel log_level() {
  static LogLevel lvl = [] {
    const char* s = std::getenv("MOTIONSEL_LOG");
    if (!s) return LogLevel::kInfo;
    if (std::strcmp(s, "quiet") == 0) return LogLevel::kQuiet;
    if (std::strcmp(s, "warn") == 0) return LogLevel::kWarn;
    if (std::strcmp(s, "debug") == 0) return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return lvl;
}

bool log_enabled(LogLevel lvl) {
  return static_cast<int>(lvl) <= static_cast<int>(log_level());
}

void log_vprintf(LogLevel lvl, const char* fmt, ...) {
  if (!log_enabled(lvl)) return;
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  std::fputc('\n', stderr);
  va_end(args);
}

}  // namespace motionsel
