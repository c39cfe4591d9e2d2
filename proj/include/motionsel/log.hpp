#pragma once

#include <cstdio>

namespace motionsel {

// Verbosity levels selected through MOTIONSEL_LOG=quiet|warn|info|debug.
enum class LogLevel { kQuiet = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level();

bool log_enabled(LogLevel lvl);

void log_vprintf(LogLevel lvl, const char* fmt, ...);

#define MSEL_WARN(...) ::motionsel::log_vprintf(::motionsel::LogLevel::kWarn, __VA_ARGS__)
#define MSEL_INFO(...) ::motionsel::log_vprintf(::motionsel::LogLevel::kInfo, __VA_ARGS__)
#define MSEL_DEBUG(...) ::motionsel::log_vprintf(::motionsel::LogLevel::kDebug, __VA_ARGS__)

}  // namespace motionsel
