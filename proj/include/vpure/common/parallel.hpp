#pragma once

#include <cstddef>
#include <functional>

namespace vpure {

/// Runs fn(i) for i in [0, n) on at most `workers` threads. Exceptions are
/// collected and the one from the lowest index is rethrown after all workers
/// join, so failures are reported deterministically.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace vpure
