#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace avru {

// Worker-thread cap: AVRU_THREADS env var, 0 or unset = hardware concurrency.
inline unsigned thread_count() {
    static const unsigned count = [] {
        unsigned hw = std::thread::hardware_concurrency();
        if (hw == 0)
            hw = 1;
        if (const char* env = std::getenv("AVRU_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v > 0)
                return std::min<unsigned>(static_cast<unsigned>(v), 256u);
        }
        return hw;
    }();
    return count;
}

// Static-partition parallel for. Chunk boundaries depend only on (n, workers),
// so any reduction done in worker order is reproducible for a fixed
// AVRU_THREADS setting.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    const unsigned workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        if (n > 0)
            body(0, n);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned t = 0; t < workers; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi)
            break;
        threads.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : threads)
        th.join();
}

} // namespace avru
