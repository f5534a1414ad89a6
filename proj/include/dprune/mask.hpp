#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "dprune/tensor.hpp"

namespace dprune {

// Binary mask m aligned index-for-index with a ParameterVector. A stored
// byte is 0 (pruned) or 1 (kept).
struct SparsityMask {
    std::vector<std::uint8_t> bits;
    LayerMap layers;

    static SparsityMask ones(const LayerMap& layers);
    static SparsityMask zeros(const LayerMap& layers);

    std::size_t size() const { return bits.size(); }
    bool kept(std::size_t i) const { return bits[i] != 0; }

    bool operator==(const SparsityMask&) const = default;
};

using KindSet = std::set<ParamKind>;

inline const KindSet& default_prunable_kinds() {
    static const KindSet kinds{ParamKind::weight};
    return kinds;
}

// Throws std::invalid_argument if the mask is not aligned with `params`
// (length or layer map) or holds a value other than 0/1.
void check_aligned(const ParameterVector& params, const SparsityMask& mask);

}  // namespace dprune
