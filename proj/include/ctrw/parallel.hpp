#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ctrw {

// Worker count from CTRW_WORKERS, else hardware concurrency (at least 1).
std::size_t default_workers();

// Runs body(i) for i in [0, n) on up to `workers` threads. Items are handed
// out dynamically; callers write results into per-item slots and reduce in
// index order afterwards, which keeps outputs independent of scheduling.
template <class Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next.store(n);
                    return;
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace ctrw
