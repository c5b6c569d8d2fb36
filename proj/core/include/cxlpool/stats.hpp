#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cxlpool/types.hpp"

namespace cxlpool {

/// Nearest-rank percentile; q in [0, 100]. Copies and sorts.
template <typename T>
T percentile(std::vector<T> samples, double q) {
    if (samples.empty()) throw DomainError("percentile of empty sample set");
    std::sort(samples.begin(), samples.end());
    if (q <= 0) return samples.front();
    if (q >= 100) return samples.back();
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(q / 100.0 * static_cast<double>(samples.size())));
    if (rank == 0) rank = 1;
    return samples[rank - 1];
}

template <typename T>
double mean(const std::vector<T>& v) {
    if (v.empty()) throw DomainError("mean of empty sample set");
    double s = 0;
    for (const auto& x : v) s += static_cast<double>(x);
    return s / static_cast<double>(v.size());
}

template <typename T>
double stddev(const std::vector<T>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean(v);
    double s = 0;
    for (const auto& x : v) {
        double d = static_cast<double>(x) - m;
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace cxlpool
