#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dyrep {

/// 0 means one worker per hardware thread.
inline int resolve_threads(int threads)
{
    if (threads > 0) return threads;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Runs f(i) for i in [0, n) over contiguous chunks. Each index is written by
/// exactly one worker, so results do not depend on the thread count.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f, std::size_t min_chunk = 256)
{
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)),
                                               std::max<std::size_t>(1, n / min_chunk));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                const std::size_t end = std::min(n, (w + 1) * chunk);
                for (std::size_t i = w * chunk; i < end; ++i) f(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace dyrep
