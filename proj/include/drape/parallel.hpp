#pragma once

// Deterministic data-parallel loop. Work items write into their own slots;
// reductions stay sequential at the call site, so results are identical for
// any thread count.

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace drape {

inline int& thread_count_ref() {
    static int count = 1;
    return count;
}

inline void set_thread_count(int n) { thread_count_ref() = std::max(1, n); }

inline int thread_count() { return thread_count_ref(); }

/// Reads DRAPE_THREADS; returns fallback when unset or unparsable.
inline int env_thread_override(int fallback) {
    const char* env = std::getenv("DRAPE_THREADS");
    if (!env) return fallback;
    try {
        return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
        return fallback;
    }
}

template <typename Fn>
void parallel_for(int n, Fn&& fn) {
    const int workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int begin = w * chunk;
        const int end = std::min(n, begin + chunk);
        pool.emplace_back([&, w, begin, end] {
            try {
                for (int i = begin; i < end; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace drape
