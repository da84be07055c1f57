#pragma once

#include <functional>
#include <string_view>

namespace c2pc {

using LogSink = std::function<void(std::string_view level, std::string_view message)>;

// Replaces the sink (default: "level: message" on stderr). Returns the previous one.
LogSink set_log_sink(LogSink sink);

void log_warning(std::string_view message);
void log_info(std::string_view message);

}  // namespace c2pc
