#include "vpure/common/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

namespace vpure {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_color_mt("vpure");
    l->set_pattern("[%H:%M:%S.%e] [%l] %v");
    return l;
  }();
  return instance;
}

}  // namespace vpure
