#include "hsml/common.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

namespace hsml {

int worker_count() {
    if (const char* env = std::getenv("HSML_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) return static_cast<int>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t blocks = std::min(kParallelBlockCount, n);
    const int workers = std::min<int>(worker_count(), static_cast<int>(blocks));

    auto run_block = [&](std::size_t b) {
        std::size_t lo = n * b / blocks;
        std::size_t hi = n * (b + 1) / blocks;
        fn(lo, hi, b);
    };

    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) run_block(b);
        return;
    }

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t b = next.fetch_add(1); b < blocks; b = next.fetch_add(1)) run_block(b);
        });
    for (auto& t : pool) t.join();
}

}  // namespace hsml
