#ifndef NTUMATCH_PARALLEL_HPP
#define NTUMATCH_PARALLEL_HPP

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ntumatch {

/// Worker count: NTUMATCH_THREADS overrides hardware concurrency.
inline int threadCount() {
    if (const char* env = std::getenv("NTUMATCH_THREADS")) {
        const int k = std::atoi(env);
        if (k >= 1) return k;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace detail {
inline thread_local bool insideParallelFor = false;
}

/// Index-parallel loop; `fn(i)` must be safe to run concurrently for distinct
/// i. Falls back to serial for small ranges, single-thread configs, and when
/// already running inside another parallel_for.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
    const int workers = std::min(threadCount(), n);
    if (workers <= 1 || n < 4 || detail::insideParallelFor) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            detail::insideParallelFor = true;
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace ntumatch

#endif
