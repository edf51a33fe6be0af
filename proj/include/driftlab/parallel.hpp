// Tiny fork-join helper. Work items write into caller-owned slots indexed by
// item, so the result is identical whatever the worker count. DRIFTLAB_THREADS
// caps the pool (default: hardware concurrency).
#pragma once

#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace driftlab {

inline int worker_count() {
    if (const char* env = std::getenv("DRIFTLAB_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

template <typename Fn>
inline void parallel_for(size_t n, Fn&& fn) {
    const int workers = std::min<size_t>(static_cast<size_t>(worker_count()), n);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&fn, n, w, workers] {
            for (size_t i = static_cast<size_t>(w); i < n; i += static_cast<size_t>(workers)) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace driftlab
