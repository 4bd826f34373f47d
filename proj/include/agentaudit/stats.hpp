#pragma once

// Non-parametric bootstrap over audit records with percentile intervals.
//
// Reproducibility contract (portable to other languages):
//   mix(z)            = SplitMix64 finalizer:
//                         z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//                         z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//                         z ^ (z >> 31)
//   derive_seed(s, i) = mix(s + 0x9E3779B97F4A7C15 * (i + 1))   (mod 2^64)
//   stream            = SplitMix64 with initial state derive_seed(s, i):
//                         state += 0x9E3779B97F4A7C15; output mix(state)
//   uniform_index(n)  = Lemire multiply-shift with rejection on 64-bit outputs
// Resample i draws only from stream i, so the result does not depend on how
// resamples are scheduled across workers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <thread>
#include <vector>

#include "agentaudit/core.hpp"

namespace agentaudit {

inline constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(seed + golden_gamma * (index + 1));
}

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator.
class RandomStream {
public:
    using result_type = std::uint64_t;

    explicit RandomStream(std::uint64_t state) : state_(state) {}
    RandomStream(std::uint64_t seed, std::uint64_t index) : state_(derive_seed(seed, index)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += golden_gamma;
        return mix64(state_);
    }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: empty range");
        unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<unsigned __int128>((*this)()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform01() < p; }

private:
    std::uint64_t state_;
};

/// Records drawn with replacement, same size as `audit`.
inline AuditSet resample(const AuditSet& audit, RandomStream& stream) {
    const auto& src = audit.rows();
    std::vector<std::uint32_t> rows(src.size());
    for (auto& r : rows) r = src[stream.uniform_index(src.size())];
    return audit.with_rows(std::move(rows));
}

/// Resamples each group independently, preserving group sizes. Groups are
/// visited in label order.
inline AuditSet stratified_resample(const AuditSet& audit, RandomStream& stream) {
    std::vector<std::uint32_t> rows;
    rows.reserve(audit.size());
    for (std::size_t g = 0; g < audit.group_count(); ++g) {
        auto members = audit.rows_in_group(g);
        for (std::size_t k = 0; k < members.size(); ++k) rows.push_back(members[stream.uniform_index(members.size())]);
    }
    return audit.with_rows(std::move(rows));
}

/// Linear interpolation between order statistics (h = (n - 1) q).
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
    double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    auto lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct BootstrapOptions {
    int n_resamples = 1000;
    std::uint64_t seed = 42;
    double ci_level = 0.95;
    bool stratified = false;
    unsigned workers = 1;
    /// Redraws allowed per resample index when the metric is undefined on it.
    int max_redraws = 100;
};

struct BootstrapDistribution {
    std::vector<double> values;  // one per resample index
    int n_redraws = 0;
};

template <typename Metric>
BootstrapDistribution bootstrap_distribution(const Metric& metric, const AuditSet& audit,
                                             const BootstrapOptions& options) {
    if (options.n_resamples < 1) throw InputError("bootstrap needs at least one resample");
    const auto n = static_cast<std::size_t>(options.n_resamples);
    std::vector<double> values(n, 0.0);
    std::vector<int> redraws(n, 0);
    std::vector<std::exception_ptr> errors(n);

    auto run_index = [&](std::size_t i) {
        RandomStream stream(options.seed, i);
        for (int attempt = 0;; ++attempt) {
            AuditSet sample = options.stratified ? stratified_resample(audit, stream) : resample(audit, stream);
            try {
                values[i] = metric(sample);
                return;
            } catch (const EmptySelectionError&) {
                if (attempt >= options.max_redraws) {
                    throw InfeasibleError("groups too small to bootstrap (resample " + std::to_string(i) + " redrawn " +
                                          std::to_string(options.max_redraws) + " times)");
                }
                ++redraws[i];
            }
        }
    };
    auto run_range = [&](std::size_t worker, std::size_t stride) {
        for (std::size_t i = worker; i < n; i += stride) {
            try {
                run_index(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, n);
    if (workers == 1) {
        run_range(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run_range, w, workers);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    BootstrapDistribution out;
    out.values = std::move(values);
    for (int r : redraws) out.n_redraws += r;
    return out;
}

/// point = metric(audit); boot_mean and the percentile interval come from
/// `n_resamples` resamples.
template <typename Metric>
MetricResult bootstrap(const Metric& metric, const AuditSet& audit, const BootstrapOptions& options = {}) {
    if (!(options.ci_level > 0.0 && options.ci_level < 1.0)) throw InputError("ci_level must be in (0, 1)");
    MetricResult res;
    res.point = metric(audit);
    res.n_resamples = options.n_resamples;
    res.seed = options.seed;
    res.n_records = audit.size();

    auto dist = bootstrap_distribution(metric, audit, options);
    double sum = 0.0;
    for (double v : dist.values) sum += v;
    res.boot_mean = sum / static_cast<double>(dist.values.size());

    std::vector<double> sorted = dist.values;
    std::sort(sorted.begin(), sorted.end());
    const double tail = (1.0 - options.ci_level) / 2.0;
    res.ci_low = percentile_sorted(sorted, tail);
    res.ci_high = percentile_sorted(sorted, 1.0 - tail);
    res.n_redraws = dist.n_redraws;
    return res;
}

}  // namespace agentaudit
