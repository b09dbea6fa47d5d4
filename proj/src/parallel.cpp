#include "dlpo/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace dlpo {

std::size_t worker_count() {
  if (const char* env = std::getenv("DLPO_LAB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  const std::size_t workers = std::min(worker_count(), count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i, 0);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&](std::size_t worker) {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i, worker);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(run, w);
  run(0);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

void reduce_blocks(
    std::size_t count, std::span<double> out,
    const std::function<void(std::size_t, std::size_t, std::span<double>)>&
        add_element) {
  if (count == 0) return;
  const std::size_t dim = out.size();
  const std::size_t blocks = (count + kReduceBlock - 1) / kReduceBlock;

  // Reused between calls; partial buffers are large and allocating them for
  // every minibatch dominates small training steps.
  thread_local std::vector<double> partials;
  if (partials.size() < blocks * dim) partials.resize(blocks * dim);
  std::fill(partials.begin(), partials.begin() + blocks * dim, 0.0);
  double* base = partials.data();

  parallel_for(blocks, [&](std::size_t block, std::size_t worker) {
    std::span<double> acc(base + block * dim, dim);
    const std::size_t end = std::min(count, (block + 1) * kReduceBlock);
    for (std::size_t i = block * kReduceBlock; i < end; ++i) {
      add_element(i, worker, acc);
    }
  });

  for (std::size_t b = 0; b < blocks; ++b) {
    const double* p = base + b * dim;
    for (std::size_t j = 0; j < dim; ++j) out[j] += p[j];
  }
}

}  // namespace dlpo
