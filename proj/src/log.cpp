#include "c2pc/log.hpp"

#include <iostream>
#include <mutex>

namespace c2pc {
namespace {

std::mutex g_mutex;

LogSink& sink() {
  static LogSink s = [](std::string_view level, std::string_view message) {
    std::cerr << level << ": " << message << '\n';
  };
  return s;
}

void emit(std::string_view level, std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (sink()) sink()(level, message);
}

}  // namespace

LogSink set_log_sink(LogSink s) {
  std::lock_guard lock(g_mutex);
  LogSink previous = std::move(sink());
  sink() = std::move(s);
  return previous;
}

void log_warning(std::string_view message) { emit("warning", message); }
void log_info(std::string_view message) { emit("info", message); }

}  // namespace c2pc
