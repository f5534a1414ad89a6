#include "dprune/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dprune/rng.hpp"

namespace dprune {

const char* to_string(ScopeMode m) { return m == ScopeMode::global ? "global" : "layerwise"; }

ScopeMode scope_mode_from_string(const std::string& s) {
    if (s == "global") return ScopeMode::global;
    if (s == "layerwise") return ScopeMode::layerwise;
    throw std::invalid_argument("unknown prune scope '" + s + "'");
}

bool is_prunable(const LayerSlice& slice, const KindSet& kinds) { return kinds.contains(slice.kind); }

std::size_t prunable_count(const SparsityMask& mask, const KindSet& kinds) {
    std::size_t n = 0;
    for (const auto& s : mask.layers)
        if (is_prunable(s, kinds)) n += s.length;
    return n;
}

std::size_t surviving_count(const SparsityMask& mask, const KindSet& kinds) {
    std::size_t n = 0;
    for (const auto& s : mask.layers)
        if (is_prunable(s, kinds))
            for (std::size_t i = s.offset; i < s.offset + s.length; ++i) n += mask.bits[i];
    return n;
}

double sparsity(const SparsityMask& mask, const KindSet& kinds) {
    const auto total = prunable_count(mask, kinds);
    if (total == 0) return 0.0;
    return static_cast<double>(total - surviving_count(mask, kinds)) / static_cast<double>(total);
}

double whole_vector_sparsity(const SparsityMask& mask) {
    if (mask.bits.empty()) return 0.0;
    std::size_t zeros = 0;
    for (auto b : mask.bits) zeros += b == 0;
    return static_cast<double>(zeros) / static_cast<double>(mask.bits.size());
}

namespace {

void check_amount(double amount) {
    if (!(amount > 0.0 && amount < 1.0)) throw std::invalid_argument("amount must be in (0,1)");
}

void check_scope(const PruneScope& scope) {
    if (scope.prunableKinds.empty()) throw std::invalid_argument("prune scope has no prunable kinds");
}

// Groups of candidate positions: one pooled group (global) or one per layer.
std::vector<std::vector<std::size_t>> survivor_groups(const SparsityMask& mask, const PruneScope& scope) {
    std::vector<std::vector<std::size_t>> groups;
    if (scope.mode == ScopeMode::global) groups.emplace_back();
    for (const auto& s : mask.layers) {
        if (!is_prunable(s, scope.prunableKinds)) continue;
        if (scope.mode == ScopeMode::layerwise) groups.emplace_back();
        for (std::size_t i = s.offset; i < s.offset + s.length; ++i)
            if (mask.bits[i]) groups.back().push_back(i);
    }
    return groups;
}

std::size_t floor_count(double amount, std::size_t survivors) {
    return static_cast<std::size_t>(std::floor(amount * static_cast<double>(survivors)));
}

}  // namespace

std::size_t prune_count(const SparsityMask& mask, double amount, const PruneScope& scope) {
    check_amount(amount);
    check_scope(scope);
    std::size_t n = 0;
    for (const auto& g : survivor_groups(mask, scope)) n += floor_count(amount, g.size());
    return n;
}

SparsityMask magnitude_prune(const ParameterVector& params, const SparsityMask& mask, double amount,
                             const PruneScope& scope) {
    check_amount(amount);
    check_scope(scope);
    check_aligned(params, mask);
    SparsityMask out = mask;
    for (auto& group : survivor_groups(mask, scope)) {
        const std::size_t k = floor_count(amount, group.size());
        if (k == 0) continue;
        auto less = [&](std::size_t a, std::size_t b) {
            const double ma = std::abs(params.values[a]), mb = std::abs(params.values[b]);
            return ma < mb || (ma == mb && a < b);
        };
        std::nth_element(group.begin(), group.begin() + static_cast<std::ptrdiff_t>(k - 1), group.end(), less);
        for (std::size_t j = 0; j < k; ++j) out.bits[group[j]] = 0;
    }
    return out;
}

SparsityMask random_prune(const SparsityMask& mask, double amount, std::uint64_t seed, const PruneScope& scope) {
    check_amount(amount);
    check_scope(scope);
    SparsityMask out = mask;
    std::uint64_t groupIndex = 0;
    for (auto& group : survivor_groups(mask, scope)) {
        const std::size_t k = floor_count(amount, group.size());
        Rng rng{seed, groupIndex++};
        // Partial Fisher-Yates: first k slots become a uniform k-subset.
        for (std::size_t j = 0; j < k; ++j) {
            const auto pick = j + rng.below(group.size() - j);
            std::swap(group[j], group[pick]);
            out.bits[group[j]] = 0;
        }
    }
    return out;
}

ParameterVector apply_mask(const ParameterVector& params, const SparsityMask& mask) {
    check_aligned(params, mask);
    ParameterVector out = params;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!mask.bits[i]) out.values[i] = 0.0;
    return out;
}

std::vector<LayerSparsity> mask_layer_stats(const SparsityMask& mask, const KindSet& kinds) {
    std::vector<LayerSparsity> stats;
    for (const auto& s : mask.layers) {
        if (!is_prunable(s, kinds) || s.length == 0) continue;
        std::size_t alive = 0;
        for (std::size_t i = s.offset; i < s.offset + s.length; ++i) alive += mask.bits[i];
        stats.push_back({s.name, static_cast<double>(s.length - alive) / static_cast<double>(s.length), alive,
                         s.length});
    }
    return stats;
}

}  // namespace dprune
