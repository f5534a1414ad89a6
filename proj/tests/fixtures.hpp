#pragma once

#include <filesystem>
#include <string>

#include "dprune/dataset.hpp"
#include "dprune/engine.hpp"
#include "dprune/model.hpp"
#include "dprune/train.hpp"

#ifndef DPRUNE_TEST_DATA_DIR
#define DPRUNE_TEST_DATA_DIR "tests/data"
#endif

namespace dprune::fixtures {

inline std::filesystem::path data_dir() { return DPRUNE_TEST_DATA_DIR; }

inline LabeledDataset digits_train() {
    return load_idx(data_dir() / "digits-train-images.idx", data_dir() / "digits-train-labels.idx");
}

inline LabeledDataset digits_test() {
    return load_idx(data_dir() / "digits-test-images.idx", data_dir() / "digits-test-labels.idx");
}

inline ModelSpec small_mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes) {
    return ModelSpec{Architecture::mlp, {in}, std::move(hidden), classes};
}

inline TrainConfig quick_train(std::size_t epochs, std::uint64_t seed = 0) {
    TrainConfig c;
    c.epochs = epochs;
    c.learningRate = 0.05;
    c.momentum = 0.9;
    c.weightDecay = 5e-4;
    c.batchSize = 16;
    c.gamma = 0.15;
    c.shuffleSeed = seed;
    return c;
}

// Small blobs problem for engine tests: 4 classes, 2-D inputs.
inline LabeledDataset blobs(std::size_t perClass = 50, std::uint64_t seed = 0, double noise = 1.0) {
    return synth_dataset(SynthKind::gaussianBlobs, 4, perClass, noise, seed);
}

inline PruneRunConfig quick_prune(double desired, std::size_t epochs = 5) {
    PruneRunConfig c;
    c.amount = 0.2;
    c.desiredSparsity = desired;
    c.maskTrainEpochs = epochs;
    c.finetuneEpochs = epochs;
    c.maskTrain = quick_train(epochs);
    c.finetune = quick_train(epochs);
    return c;
}

// The desk-scale ConvNet and schedule used by the sparsity sweep.
inline ModelSpec desk_convnet() { return ModelSpec{Architecture::convnet, {1, 8, 8}, {16, 32}, 10}; }

inline PruneRunConfig desk_prune_config(double desired) {
    PruneRunConfig c;
    c.amount = 0.2;
    c.desiredSparsity = desired;
    c.finetuneEpochs = 15;
    c.maskTrainEpochs = 30;
    c.finetune = TrainConfig{0, 0.05, 0.9, 5e-4, 32, {10}, 0.15, 0};
    c.maskTrain = TrainConfig{0, 0.05, 0.9, 5e-4, 10, {20}, 0.15, 0};
    c.finetuneEachIteration = true;
    return c;
}

}  // namespace dprune::fixtures
