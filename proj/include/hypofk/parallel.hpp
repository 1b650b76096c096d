#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hypofk {

/// Fixed work partition used by every estimator. Results never depend on the
/// thread count because blocks are formed and reduced in a fixed order.
inline constexpr std::size_t kBlockSize = 1024;

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Runs fn(begin, end) over [0, count) in blocks of kBlockSize on `threads`
/// workers and returns the per-block results in block order.
template <class Result, class Fn>
std::vector<Result> run_blocks(std::size_t count, unsigned threads, Fn&& fn) {
    const std::size_t blocks = (count + kBlockSize - 1) / kBlockSize;
    std::vector<Result> out(blocks);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= blocks) return;
            try {
                out[b] = fn(b * kBlockSize, std::min(count, (b + 1) * kBlockSize));
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(blocks);
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(std::max<std::size_t>(blocks, 1))));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n);
        for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);
    return out;
}

/// Pairwise tree reduction in index order.
template <class T, class Merge>
T tree_reduce(std::vector<T> items, Merge&& merge) {
    if (items.empty()) return T{};
    while (items.size() > 1) {
        std::vector<T> next;
        next.reserve((items.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < items.size(); i += 2) next.push_back(merge(items[i], items[i + 1]));
        if (items.size() % 2) next.push_back(items.back());
        items = std::move(next);
    }
    return items.front();
}

/// Count, mean and centred second moment; merged with Chan's update.
struct RunningStats {
    double n = 0.0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double v) {
        n += 1.0;
        const double delta = v - mean;
        mean += delta / n;
        m2 += delta * (v - mean);
    }

    static RunningStats merge(const RunningStats& a, const RunningStats& b) {
        if (a.n == 0.0) return b;
        if (b.n == 0.0) return a;
        RunningStats r;
        r.n = a.n + b.n;
        const double delta = b.mean - a.mean;
        r.mean = a.mean + delta * (b.n / r.n);
        r.m2 = a.m2 + b.m2 + delta * delta * (a.n * b.n / r.n);
        return r;
    }

    double variance() const { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
    double std_error() const { return n > 0.0 ? std::sqrt(variance() / n) : 0.0; }
};

}  // namespace hypofk
