#include "normalnorm/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace normalnorm {

int max_threads() {
    static const int cap = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        if (const char* env = std::getenv("NORMALNORM_THREADS")) {
            const int want = std::atoi(env);
            if (want >= 1) hw = std::min(hw, want);
        }
        return hw;
    }();
    return cap;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    const int threads = std::min<std::int64_t>(max_threads(), n);
    if (threads <= 1 || n < 4) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::int64_t i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace normalnorm
