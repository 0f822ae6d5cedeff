#pragma once

#include <cstddef>
#include <functional>

namespace liquiform {

// Worker-thread cap from LIQUIFORM_THREADS (0 or unset = hardware concurrency).
std::size_t worker_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous index blocks, so
// results are schedule-independent as long as fn(i) only writes its own output.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Flushes denormal floats to zero on the calling thread while alive (no-op
// off x86). Workers started by parallel_for copy the caller's mode. Training
// runs under this guard: late in training, gradients underflow into the
// denormal range and would otherwise run several times slower.
class FlushDenormals {
 public:
  FlushDenormals();
  ~FlushDenormals();
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace liquiform
