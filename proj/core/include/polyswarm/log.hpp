#pragma once

#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace polyswarm {

enum class LogLevel { debug, info, warn, error };

std::string_view to_string(LogLevel level);

// Process-wide log fan-out. stderr is always a sink above the threshold;
// extra sinks (the dashboard's live log feed) can be attached.
class Log {
 public:
  using Sink = std::function<void(LogLevel, const std::string&)>;

  static void set_threshold(LogLevel level);
  static int add_sink(Sink sink);
  static void remove_sink(int id);
  static void write(LogLevel level, const std::string& message);

  static void debug(const std::string& m) { write(LogLevel::debug, m); }
  static void info(const std::string& m) { write(LogLevel::info, m); }
  static void warn(const std::string& m) { write(LogLevel::warn, m); }
  static void error(const std::string& m) { write(LogLevel::error, m); }
};

}  // namespace polyswarm
