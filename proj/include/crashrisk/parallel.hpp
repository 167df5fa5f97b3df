#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace crashrisk {

// requested <= 0 means "use the hardware count".
inline int resolve_thread_count(int requested, std::size_t n_tasks) {
    unsigned hw = std::thread::hardware_concurrency();
    int n = requested > 0 ? requested : static_cast<int>(hw ? hw : 1);
    if (static_cast<std::size_t>(n) > n_tasks) n = static_cast<int>(n_tasks);
    return n < 1 ? 1 : n;
}

// Runs fn(0..n-1) across `threads` workers pulling from a shared counter.
// Tasks must be independent; anything seeded must derive its seed from the
// task index so results do not depend on the schedule. The first exception
// thrown by any task is rethrown on the caller thread.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    threads = resolve_thread_count(threads, n);
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace crashrisk
