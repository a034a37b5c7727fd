#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace steerdet::detail {

inline int default_thread_count() {
    if (const char* env = std::getenv("STEERDET_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Run body(i) for i in [0, count) on up to `threads` workers, contiguous
// blocks per worker. Each index is handled exactly once, so results are
// deterministic whenever distinct indices write distinct outputs.
template <typename F>
void parallel_for(long count, int threads, F&& body) {
    if (threads <= 0) threads = default_thread_count();
    threads = static_cast<int>(std::min<long>(threads, std::max(1L, count)));
    if (threads == 1) {
        for (long i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    const long chunk = (count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const long lo = t * chunk;
        const long hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (long i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace steerdet::detail
