#pragma once

#include <cstddef>
#include <functional>

namespace leafwood {

/// Worker count: hardware concurrency, capped by LEAFWOOD_THREADS when set.
std::size_t worker_count();

/// Runs `body(begin, end)` over contiguous slices of [0, n) on up to
/// worker_count() threads. Slices never overlap, so bodies that write only
/// their own slice produce schedule-independent results.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace leafwood
