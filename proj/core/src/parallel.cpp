#include "coherence/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace coherence {
namespace {

std::atomic<unsigned> g_threads{0};

unsigned env_threads() {
  const char* value = std::getenv("COHERENCE_THREADS");
  if (value == nullptr) return 0;
  try {
    const long parsed = std::stol(value);
    return parsed > 0 ? static_cast<unsigned>(parsed) : 0;
  } catch (...) {
    return 0;
  }
}

}  // namespace

void set_num_threads(unsigned threads) { g_threads.store(threads); }

unsigned num_threads() {
  if (unsigned t = g_threads.load(); t > 0) return t;
  if (unsigned t = env_threads(); t > 0) return t;
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t begin, std::size_t end, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (end <= begin) return;
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t chunks = (end - begin + grain - 1) / grain;
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(num_threads(), chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      body(begin + c * grain, std::min(end, begin + (c + 1) * grain));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        body(begin + c * grain, std::min(end, begin + (c + 1) * grain));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(chunks);
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace coherence
