#pragma once

#include <cstddef>
#include <functional>

namespace vtsmp {

/// Worker count used when a call does not pass one. Defaults to 1.
int default_workers();
void set_default_workers(int workers);

/// Paths per reduction chunk. Fixed so that partial sums never depend on the
/// number of workers.
inline constexpr std::size_t kChunk = 1024;

inline std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

/// Calls fn(chunk, begin, end) for every chunk of [0, n). Chunks are claimed
/// dynamically by up to `workers` threads; fn must only write chunk-local state.
void for_each_chunk(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                    int workers = 0);

/// Same, over an arbitrary number of independent tasks.
void for_each_task(std::size_t n, const std::function<void(std::size_t)>& fn, int workers = 0);

}  // namespace vtsmp
