#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace dlpo {

// Worker count: DLPO_LAB_THREADS if set to a positive integer, otherwise the
// number of hardware threads.
std::size_t worker_count();

// Runs fn(index, worker) for index in [0, count). `worker` is in
// [0, worker_count()) and identifies a slot for per-thread scratch objects.
// The first exception thrown by any call is rethrown on the caller's thread.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& fn);

// Deterministic parallel reduction of per-element vector contributions.
// Elements are grouped into fixed blocks of kReduceBlock consecutive indices;
// each block accumulates its elements in index order, then block partials are
// added to `out` in block order. The result does not depend on thread count.
inline constexpr std::size_t kReduceBlock = 4;

void reduce_blocks(
    std::size_t count, std::span<double> out,
    const std::function<void(std::size_t index, std::size_t worker,
                             std::span<double> acc)>& add_element);

}  // namespace dlpo
