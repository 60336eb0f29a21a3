#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace vpure {

std::shared_ptr<spdlog::logger> logger();

}  // namespace vpure
