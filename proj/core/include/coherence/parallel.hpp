#pragma once

#include <cstddef>
#include <functional>

namespace coherence {

/// Worker cap for all parallel loops. 0 means "use COHERENCE_THREADS, else
/// the hardware concurrency".
void set_num_threads(unsigned threads);
unsigned num_threads();

/// Splits [begin, end) into contiguous chunks whose boundaries are multiples
/// of `grain` (relative to `begin`) and runs body(chunk_begin, chunk_end) on
/// each. Chunk boundaries never depend on the worker count.
void parallel_for(std::size_t begin, std::size_t end, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace coherence
