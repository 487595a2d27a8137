#include "embsim/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

#include <memory>

namespace embsim {

spdlog::logger& log() {
  static const std::shared_ptr<spdlog::logger> logger = [] {
    auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
    auto l = std::make_shared<spdlog::logger>("embsim", sink);
    l->set_pattern("%Y-%m-%dT%H:%M:%S.%e level=%l %v");
    l->set_level(spdlog::level::info);
    return l;
  }();
  return *logger;
}

}  // namespace embsim
