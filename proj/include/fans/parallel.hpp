#pragma once
// Index-parallel loops with a deterministic result layout.
//
// Work items write into their own slot; callers reduce in index order, so
// results do not depend on the number of workers. FANS_THREADS caps the
// worker count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fans {

/// Hardware concurrency, or FANS_THREADS when set to a positive integer.
inline unsigned worker_count() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FANS_THREADS")) {
        try {
            const long cap = std::stol(env);
            if (cap >= 1) n = static_cast<unsigned>(std::min(cap, 256L));
        } catch (const std::exception&) {
            // unparsable value: keep the hardware default
        }
    }
    return n;
}

/// Calls fn(i) for every i in [0, n). The first exception thrown by any
/// item is rethrown on the calling thread after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n);
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace fans
