#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dprune/dataset.hpp"
#include "dprune/mask.hpp"
#include "dprune/model.hpp"
#include "dprune/train.hpp"

namespace dprune {

// Accuracy/loss along theta(alpha) = (1 - alpha) theta_A + alpha theta_B.
struct InterpolationCurve {
    std::vector<double> alphas;
    std::vector<double> accuracies;
    std::vector<double> losses;
    std::string maskId;
    std::pair<std::uint64_t, std::uint64_t> seedPair{0, 0};

    std::size_t size() const { return alphas.size(); }
};

struct InstabilityReport {
    double errorBarrier = 0.0;  // signed; interior may beat the endpoints
    bool stable = true;
    double threshold = 0.0;
};

struct WeightHistogram {
    std::string layerName;
    std::vector<double> binEdges;  // numBins + 1
    std::vector<std::size_t> counts;
    double sparsity = 0.0;
    bool empty = false;  // every position of the layer is pruned
};

constexpr double kDefaultStabilityThreshold = 0.02;
constexpr std::size_t kDefaultInterpolationPoints = 21;

// Two runs from the same (rewind point, mask) that differ only in data order.
std::pair<ParameterVector, ParameterVector> train_twin(const ModelSpec& spec, const ParameterVector& rewind,
                                                       const SparsityMask& mask, const LabeledDataset& real,
                                                       const TrainConfig& cfg, std::uint64_t noiseSeedA,
                                                       std::uint64_t noiseSeedB);

// Masked convex combination of two parameter vectors.
ParameterVector interpolate(const ParameterVector& a, const ParameterVector& b, const SparsityMask& mask,
                            double alpha);

InterpolationCurve interpolate_curve(const ModelSpec& spec, const ParameterVector& a, const ParameterVector& b,
                                     const SparsityMask& mask, const LabeledDataset& testData,
                                     std::size_t numPoints = kDefaultInterpolationPoints);

// max_alpha (1 - acc(alpha)) minus the mean endpoint error.
InstabilityReport instability(const InterpolationCurve& curve, double threshold = kDefaultStabilityThreshold);

// Histogram of init values at the surviving positions of one layer. Bin
// edges span [-r, r] with r the layer's largest |init|.
WeightHistogram weight_histogram(const ParameterVector& init, const SparsityMask& mask, const std::string& layerName,
                                 std::size_t numBins);

// Mean |init| over surviving prunable positions divided by the mean over
// pruned ones.
double survivor_magnitude_ratio(const ParameterVector& init, const SparsityMask& mask,
                                const KindSet& kinds = default_prunable_kinds());

}  // namespace dprune
