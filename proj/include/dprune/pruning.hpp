#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dprune/mask.hpp"
#include "dprune/tensor.hpp"

namespace dprune {

enum class ScopeMode { global, layerwise };

const char* to_string(ScopeMode m);
ScopeMode scope_mode_from_string(const std::string& s);

struct PruneScope {
    ScopeMode mode = ScopeMode::global;
    KindSet prunableKinds = default_prunable_kinds();
};

bool is_prunable(const LayerSlice& slice, const KindSet& kinds);

std::size_t prunable_count(const SparsityMask& mask, const KindSet& kinds = default_prunable_kinds());
std::size_t surviving_count(const SparsityMask& mask, const KindSet& kinds = default_prunable_kinds());

// Fraction of prunable positions that are zero.
double sparsity(const SparsityMask& mask, const KindSet& kinds = default_prunable_kinds());

// Fraction of all positions (prunable or not) that are zero.
double whole_vector_sparsity(const SparsityMask& mask);

// Number of positions a pruning step removes: floor(amount * survivors)
// pooled (global) or summed per layer (layerwise).
std::size_t prune_count(const SparsityMask& mask, double amount, const PruneScope& scope);

// Removes floor(amount * survivors) further positions with the smallest
// |params|; ties go to the lower flat index.
SparsityMask magnitude_prune(const ParameterVector& params, const SparsityMask& mask, double amount,
                             const PruneScope& scope = {});

// Same count as magnitude_prune, positions drawn uniformly without
// replacement from the survivors.
SparsityMask random_prune(const SparsityMask& mask, double amount, std::uint64_t seed, const PruneScope& scope = {});

// Elementwise params (.) mask.
ParameterVector apply_mask(const ParameterVector& params, const SparsityMask& mask);

struct LayerSparsity {
    std::string layerName;
    double sparsity = 0.0;
    std::size_t surviving = 0;
    std::size_t prunable = 0;
};

// One entry per layer that has prunable positions.
std::vector<LayerSparsity> mask_layer_stats(const SparsityMask& mask,
                                            const KindSet& kinds = default_prunable_kinds());

}  // namespace dprune
