#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace fdl {

/// Runs fn(i) for i in [0, count) across up to `threads` workers. Work is
/// striped by index; callers that need deterministic results must write into
/// index-addressed slots and reduce in index order afterwards.
inline void parallel_for(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < count; i += workers) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace fdl
