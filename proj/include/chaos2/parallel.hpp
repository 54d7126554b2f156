#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace chaos2 {

/// Worker count: CHAOS2_THREADS if set to a positive integer, otherwise the
/// hardware concurrency.
[[nodiscard]] inline unsigned thread_count() {
    if (const char* env = std::getenv("CHAOS2_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(begin, end) over [0, n) in fixed-size blocks. Results must only
/// depend on the index, never on which worker ran the block.
template <class Fn>
void parallel_for(std::size_t n, std::size_t block, Fn&& fn) {
    if (n == 0) return;
    block = std::max<std::size_t>(block, 1);
    const std::size_t blocks = (n + block - 1) / block;
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), blocks));
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) fn(b * block, std::min(n, (b + 1) * block));
        return;
    }
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            std::size_t b;
            {
                std::lock_guard lock(mu);
                if (next >= blocks || failure) return;
                b = next++;
            }
            try {
                fn(b * block, std::min(n, (b + 1) * block));
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace chaos2
