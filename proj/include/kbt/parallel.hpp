#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace kbt {

// Run fn(begin, end) over contiguous blocks covering [0, n). With threads <= 1
// the call degenerates to fn(0, n) on the calling thread. Blocks are fixed by
// (n, threads) alone, so any per-index output is independent of scheduling.
// If several blocks throw, the exception from the lowest block is rethrown.
template <typename Fn>
void parallel_for_blocks(std::size_t n, unsigned threads, Fn&& fn) {
    if (n == 0) return;
    const std::size_t nthreads = std::min<std::size_t>(std::max(1u, threads), n);
    if (nthreads == 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::exception_ptr> errors(nthreads);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    const std::size_t base = n / nthreads, extra = n % nthreads;
    std::size_t begin = 0;
    for (std::size_t t = 0; t < nthreads; ++t) {
        const std::size_t len = base + (t < extra ? 1 : 0);
        const std::size_t end = begin + len;
        pool.emplace_back([&fn, &errors, t, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
        begin = end;
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace kbt
