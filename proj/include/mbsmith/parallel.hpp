#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace mbsmith {

// 0 means one worker per hardware thread.
inline unsigned resolve_threads(unsigned threads) {
    return threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
}

// Calls task(state, i) for i in [0, count) on up to `threads` workers, each
// owning one state built by make(). Indices are handed out dynamically, so
// callers must write results by index to stay deterministic.
template <typename Make, typename Task>
void parallel_for_with_state(std::size_t count, unsigned threads, Make&& make, Task&& task) {
    const auto n = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), count));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        auto state = make();
        for (std::size_t i; (i = next.fetch_add(1)) < count;) task(state, i);
    };
    if (n <= 1) {
        worker();
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

template <typename Task>
void parallel_for(std::size_t count, unsigned threads, Task&& task) {
    parallel_for_with_state(
        count, threads, [] { return 0; }, [&](int&, std::size_t i) { task(i); });
}

}  // namespace mbsmith
