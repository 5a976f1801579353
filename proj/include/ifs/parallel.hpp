#pragma once

#include <cstddef>
#include <functional>

namespace ifs {

// Execution settings shared by the stages that can fan out.
// In deterministic mode every reduction uses a fixed chunking that does not
// depend on the thread count, so results are bit-stable across thread counts.
struct Exec {
  unsigned threads = 1;
  bool deterministic = true;
};

// Thread count from IFS_THREADS, or 1 when unset/invalid.
unsigned default_thread_count();

// Calls fn(begin, end) over [0, n) split into contiguous chunks of at most
// `chunk` items, spread over exec.threads workers. Chunk boundaries depend
// only on n and chunk. The first exception thrown by any chunk is rethrown.
void parallel_for(std::size_t n, std::size_t chunk, const Exec& exec,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace ifs
