#pragma once

#include <string_view>

namespace dafm {

enum class LogLevel { quiet, warning, info };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_warning(std::string_view message);
void log_info(std::string_view message);

}  // namespace dafm
