#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dprune/dataset.hpp"
#include "dprune/mask.hpp"
#include "dprune/model.hpp"

namespace dprune {

// SGD with momentum and step decay at milestone epochs.
struct TrainConfig {
    std::size_t epochs = 10;
    double learningRate = 0.05;
    double momentum = 0.9;
    double weightDecay = 0.0;
    std::size_t batchSize = 32;
    std::vector<std::size_t> milestones;
    double gamma = 0.1;
    std::uint64_t shuffleSeed = 0;
};

// Empty when valid.
std::vector<std::string> validate(const TrainConfig& cfg, const std::string& prefix = "");

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch);

struct DivergenceError : std::runtime_error {
    DivergenceError(std::size_t epoch, std::size_t batch, double loss);
    std::size_t epoch;
    std::size_t batch;
};

// Called after each completed epoch with the 1-based epoch count and the
// current (masked) parameters.
using EpochHook = std::function<void(std::size_t epochsDone, const ParameterVector& params)>;

// Trains params (.) mask. Masked positions are exactly zero in the result.
ParameterVector train(const ModelSpec& spec, const ParameterVector& params, const SparsityMask& mask,
                      const LabeledDataset& data, const TrainConfig& cfg, const EpochHook& onEpoch = {});

struct Evaluation {
    double accuracy = 0.0;
    double meanLoss = 0.0;
};

Evaluation evaluate(const ModelSpec& spec, const ParameterVector& params, const SparsityMask& mask,
                    const LabeledDataset& data);

}  // namespace dprune
