#include "vtsmp/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace vtsmp {

namespace {
std::atomic<int> g_workers{1};
}

int default_workers() { return g_workers.load(); }

void set_default_workers(int workers) { g_workers.store(std::max(1, workers)); }

void for_each_task(std::size_t n, const std::function<void(std::size_t)>& fn, int workers) {
    if (workers <= 0) workers = default_workers();
    const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nthreads - 1);
    for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

void for_each_chunk(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                    int workers) {
    for_each_task(
        chunk_count(n),
        [&](std::size_t c) { fn(c, c * kChunk, std::min(n, (c + 1) * kChunk)); }, workers);
}

}  // namespace vtsmp
