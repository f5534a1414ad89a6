#pragma once
// Independent reference computations used by the unit and acceptance
// suites. Nothing here calls the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "dprune/model.hpp"
#include "dprune/rng.hpp"

namespace dprune::oracle {

// Central finite differences of the mean cross-entropy, using only the
// forward pass and a softmax computed here.
inline std::vector<double> finite_difference_gradient(const ModelSpec& spec, const ParameterVector& params,
                                                      const SparsityMask& mask, const Tensor& batch,
                                                      const std::vector<int>& labels, double step = 1e-5) {
    auto loss = [&](const ParameterVector& p) {
        const Tensor logits = forward(spec, p, mask, batch);
        const std::size_t n = logits.dim(0), k = logits.dim(1);
        long double total = 0.0L;
        for (std::size_t r = 0; r < n; ++r) {
            long double mx = -std::numeric_limits<long double>::infinity();
            for (std::size_t c = 0; c < k; ++c) mx = std::max<long double>(mx, logits.data[r * k + c]);
            long double s = 0.0L;
            for (std::size_t c = 0; c < k; ++c) s += std::exp(static_cast<long double>(logits.data[r * k + c]) - mx);
            total += std::log(s) + mx - logits.data[r * k + static_cast<std::size_t>(labels[r])];
        }
        return static_cast<double>(total / static_cast<long double>(n));
    };
    std::vector<double> g(params.size(), 0.0);
    ParameterVector p = params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!mask.bits[i]) continue;
        const double orig = p.values[i];
        p.values[i] = orig + step;
        const double up = loss(p);
        p.values[i] = orig - step;
        const double down = loss(p);
        p.values[i] = orig;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

// max_i |a - b| / max(|a|, |b|, floor)
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

// Full sort of every surviving prunable position by (|v|, index); the
// first floor(amount * survivors) are removed.
inline std::vector<std::uint8_t> brute_force_global_prune(const std::vector<double>& values,
                                                          const std::vector<std::uint8_t>& bits,
                                                          const std::vector<std::uint8_t>& prunable, double amount) {
    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (prunable[i] && bits[i]) alive.push_back(i);
    std::sort(alive.begin(), alive.end(), [&](std::size_t a, std::size_t b) {
        if (std::abs(values[a]) != std::abs(values[b])) return std::abs(values[a]) < std::abs(values[b]);
        return a < b;
    });
    const auto k = static_cast<std::size_t>(std::floor(amount * static_cast<double>(alive.size())));
    auto out = bits;
    for (std::size_t j = 0; j < k; ++j) out[alive[j]] = 0;
    return out;
}

// Best 2-partition of 1-D points by exhaustive enumeration; returns the
// two cluster means in ascending order.
inline std::pair<double, double> best_two_means_1d(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    double bestCost = std::numeric_limits<double>::infinity();
    std::pair<double, double> best{0, 0};
    for (std::uint32_t m = 1; m + 1 < (1u << n); ++m) {
        double s0 = 0, s1 = 0;
        int c0 = 0, c1 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (m >> i & 1u) {
                s1 += xs[i];
                ++c1;
            } else {
                s0 += xs[i];
                ++c0;
            }
        }
        const double m0 = s0 / c0, m1 = s1 / c1;
        double cost = 0;
        for (std::size_t i = 0; i < n; ++i) cost += (m >> i & 1u) ? (xs[i] - m1) * (xs[i] - m1) : (xs[i] - m0) * (xs[i] - m0);
        if (cost < bestCost) {
            bestCost = cost;
            best = {std::min(m0, m1), std::max(m0, m1)};
        }
    }
    return best;
}

}  // namespace dprune::oracle
