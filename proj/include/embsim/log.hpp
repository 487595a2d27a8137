#pragma once

#include <spdlog/logger.h>

namespace embsim {

/// Process-wide logger writing to standard error.
spdlog::logger& log();

}  // namespace embsim
