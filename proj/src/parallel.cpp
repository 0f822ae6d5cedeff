#include "liquiform/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#if defined(__SSE__)
#include <xmmintrin.h>
#define LIQUIFORM_HAS_MXCSR 1
#endif

namespace liquiform {

namespace {

unsigned fp_mode() {
#ifdef LIQUIFORM_HAS_MXCSR
  return _mm_getcsr();
#else
  return 0;
#endif
}

void set_fp_mode([[maybe_unused]] unsigned mode) {
#ifdef LIQUIFORM_HAS_MXCSR
  _mm_setcsr(mode);
#endif
}

constexpr unsigned kFlushBits = 0x8040;  // FTZ | DAZ

}  // namespace

FlushDenormals::FlushDenormals() : saved_(fp_mode()) { set_fp_mode(saved_ | kFlushBits); }

FlushDenormals::~FlushDenormals() { set_fp_mode(saved_); }

std::size_t worker_threads() {
  std::size_t cap = 0;
  if (const char* env = std::getenv("LIQUIFORM_THREADS")) {
    try {
      cap = static_cast<std::size_t>(std::stoul(env));
    } catch (const std::exception&) {
      cap = 0;
    }
  }
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return cap == 0 ? hw : cap;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min(worker_threads(), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t block = (n + threads - 1) / threads;
  const unsigned mode = fp_mode();
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      set_fp_mode(mode);
      try {
        const std::size_t end = std::min(n, (t + 1) * block);
        for (std::size_t i = t * block; i < end; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace liquiform
