#include "dprune/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dprune/pruning.hpp"

namespace dprune {

std::pair<ParameterVector, ParameterVector> train_twin(const ModelSpec& spec, const ParameterVector& rewind,
                                                       const SparsityMask& mask, const LabeledDataset& real,
                                                       const TrainConfig& cfg, std::uint64_t noiseSeedA,
                                                       std::uint64_t noiseSeedB) {
    TrainConfig a = cfg, b = cfg;
    a.shuffleSeed = noiseSeedA;
    b.shuffleSeed = noiseSeedB;
    return {train(spec, rewind, mask, real, a), train(spec, rewind, mask, real, b)};
}

ParameterVector interpolate(const ParameterVector& a, const ParameterVector& b, const SparsityMask& mask,
                            double alpha) {
    check_aligned(a, mask);
    check_aligned(b, mask);
    ParameterVector out = a;
    // Endpoints copy exactly instead of relying on 1*x + 0*y.
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!mask.bits[i])
            out.values[i] = 0.0;
        else if (alpha == 0.0)
            out.values[i] = a.values[i];
        else if (alpha == 1.0)
            out.values[i] = b.values[i];
        else
            out.values[i] = (1.0 - alpha) * a.values[i] + alpha * b.values[i];
    }
    return out;
}

InterpolationCurve interpolate_curve(const ModelSpec& spec, const ParameterVector& a, const ParameterVector& b,
                                     const SparsityMask& mask, const LabeledDataset& testData,
                                     std::size_t numPoints) {
    if (numPoints < 2) throw std::invalid_argument("interpolation needs at least 2 points");
    InterpolationCurve curve;
    for (std::size_t i = 0; i < numPoints; ++i) {
        const double alpha = i + 1 == numPoints ? 1.0 : static_cast<double>(i) / static_cast<double>(numPoints - 1);
        const auto ev = evaluate(spec, interpolate(a, b, mask, alpha), mask, testData);
        curve.alphas.push_back(alpha);
        curve.accuracies.push_back(ev.accuracy);
        curve.losses.push_back(ev.meanLoss);
    }
    return curve;
}

InstabilityReport instability(const InterpolationCurve& curve, double threshold) {
    if (curve.size() < 2 || curve.accuracies.size() != curve.size())
        throw std::invalid_argument("interpolation curve is malformed");
    double worst = 0.0;
    for (double acc : curve.accuracies) worst = std::max(worst, 1.0 - acc);
    const double endpoints = 0.5 * ((1.0 - curve.accuracies.front()) + (1.0 - curve.accuracies.back()));
    InstabilityReport r;
    r.errorBarrier = worst - endpoints;
    r.threshold = threshold;
    r.stable = r.errorBarrier <= threshold;
    return r;
}

WeightHistogram weight_histogram(const ParameterVector& init, const SparsityMask& mask, const std::string& layerName,
                                 std::size_t numBins) {
    check_aligned(init, mask);
    if (numBins == 0) throw std::invalid_argument("histogram needs at least one bin");
    const auto& layer = find_layer(init.layers, layerName);
    WeightHistogram h;
    h.layerName = layerName;
    h.counts.assign(numBins, 0);

    double range = 0.0;
    std::size_t alive = 0;
    for (std::size_t i = layer.offset; i < layer.offset + layer.length; ++i) {
        range = std::max(range, std::abs(init.values[i]));
        alive += mask.bits[i];
    }
    if (range == 0.0) range = 1.0;
    h.sparsity = static_cast<double>(layer.length - alive) / static_cast<double>(layer.length);
    for (std::size_t b = 0; b <= numBins; ++b)
        h.binEdges.push_back(-range + 2.0 * range * static_cast<double>(b) / static_cast<double>(numBins));
    h.binEdges.back() = range;
    h.empty = alive == 0;

    for (std::size_t i = layer.offset; i < layer.offset + layer.length; ++i) {
        if (!mask.bits[i]) continue;
        const double v = init.values[i];
        auto bin = static_cast<std::size_t>(std::floor((v + range) / (2.0 * range) * static_cast<double>(numBins)));
        ++h.counts[std::min(bin, numBins - 1)];
    }
    return h;
}

double survivor_magnitude_ratio(const ParameterVector& init, const SparsityMask& mask, const KindSet& kinds) {
    check_aligned(init, mask);
    double keptSum = 0.0, prunedSum = 0.0;
    std::size_t kept = 0, pruned = 0;
    for (const auto& s : init.layers) {
        if (!is_prunable(s, kinds)) continue;
        for (std::size_t i = s.offset; i < s.offset + s.length; ++i) {
            if (mask.bits[i]) {
                keptSum += std::abs(init.values[i]);
                ++kept;
            } else {
                prunedSum += std::abs(init.values[i]);
                ++pruned;
            }
        }
    }
    if (kept == 0 || pruned == 0) throw std::invalid_argument("mask has no survivors or nothing pruned");
    if (prunedSum == 0.0) throw std::invalid_argument("pruned positions all have zero magnitude");
    return (keptSum / static_cast<double>(kept)) / (prunedSum / static_cast<double>(pruned));
}

}  // namespace dprune
