#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "cbct/types.hpp"

namespace cbct {

/// Number of CPU lanes a single kernel launch may use (defaults to hardware concurrency).
unsigned worker_lanes();
void set_worker_lanes(unsigned lanes);

/// Runs fn(task) for task in [0, count). Tasks must write disjoint outputs.
template <typename Fn>
void parallel_for(Index count, Fn&& fn)
{
    const Index lanes = std::min<Index>(worker_lanes(), count);
    if (lanes <= 1) {
        for (Index task = 0; task < count; ++task)
            fn(task);
        return;
    }
    std::atomic<Index> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto body = [&] {
        for (Index task = next++; task < count; task = next++) {
            try {
                fn(task);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next = count;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(lanes - 1);
        for (Index l = 1; l < lanes; ++l)
            pool.emplace_back(body);
        body();
    }
    if (failure)
        std::rethrow_exception(failure);
}

}  // namespace cbct
