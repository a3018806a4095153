#pragma once

#include <string>

namespace tfnet {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

// Taken from TFNET_LOG (quiet | info | debug) on first use; defaults to info.
LogLevel log_level();
void set_log_level(LogLevel level);

// Writes one line to standard error when `level` is enabled.
void log(LogLevel level, const std::string& message);

}  // namespace tfnet
