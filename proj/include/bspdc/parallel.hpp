#pragma once

#include <algorithm>
#include <cstddef>
#include <future>
#include <thread>
#include <vector>

namespace bspdc {

/// Evaluates fn(0..count-1) on a small thread pool. Results land at their
/// index, so output order never depends on scheduling.
template <class Fn>
auto parallel_indexed(std::size_t count, Fn fn) -> std::vector<decltype(fn(std::size_t{}))>
{
    using T = decltype(fn(std::size_t{}));
    std::vector<T> out(count);
    const std::size_t workers =
        std::max<std::size_t>(1, std::min<std::size_t>(count, std::thread::hardware_concurrency()));
    if (workers <= 1 || count < 8) {
        for (std::size_t i = 0; i < count; ++i) {
            out[i] = fn(i);
        }
        return out;
    }
    std::vector<std::future<void>> jobs;
    jobs.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        jobs.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < count; i += workers) {
                out[i] = fn(i);
            }
        }));
    }
    for (auto& j : jobs) {
        j.get();
    }
    return out;
}

}  // namespace bspdc
