#include "polyswarm/log.hpp"

#include <atomic>
#include <iostream>
#include <map>

namespace polyswarm {

namespace {

struct LogState {
  std::mutex mu;
  std::map<int, Log::Sink> sinks;
  int next_id = 1;
  std::atomic<LogLevel> threshold{LogLevel::info};
};

LogState& state() {
  static LogState s;
  return s;
}

}  // namespace

std::string_view to_string(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
  }
  return "info";
}

void Log::set_threshold(LogLevel level) { state().threshold.store(level); }

int Log::add_sink(Sink sink) {
  auto& s = state();
  std::lock_guard lock(s.mu);
  const int id = s.next_id++;
  s.sinks.emplace(id, std::move(sink));
  return id;
}

void Log::remove_sink(int id) {
  auto& s = state();
  std::lock_guard lock(s.mu);
  s.sinks.erase(id);
}

void Log::write(LogLevel level, const std::string& message) {
  auto& s = state();
  if (level < s.threshold.load()) return;
  std::lock_guard lock(s.mu);
  std::cerr << "[" << to_string(level) << "] " << message << '\n';
  for (const auto& [id, sink] : s.sinks) sink(level, message);
}

}  // namespace polyswarm
