#include "steinscan/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace steinscan {

static LogLevel parse_level() {
  const char* env = std::getenv("STEIN_SCANMATCH_LOG");
  if (env == nullptr) return LogLevel::warn;
  if (std::strcmp(env, "error") == 0) return LogLevel::error;
  if (std::strcmp(env, "warn") == 0) return LogLevel::warn;
  if (std::strcmp(env, "info") == 0) return LogLevel::info;
  if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
  return LogLevel::warn;
}

LogLevel log_level() {
  static const LogLevel level = parse_level();
  return level;
}

void log_message(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[steinscan:%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

}  // namespace steinscan
