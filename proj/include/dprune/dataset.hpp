#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dprune/tensor.hpp"

namespace dprune {

// Examples shaped (N, inputDims...) with integer labels in [0, numClasses).
struct LabeledDataset {
    Tensor examples;
    std::vector<int> labels;
    std::size_t numClasses = 0;

    std::size_t size() const { return labels.size(); }
    std::vector<std::size_t> example_shape() const {
        return {examples.shape.begin() + 1, examples.shape.end()};
    }
    std::vector<std::size_t> class_counts() const;

    // Throws std::invalid_argument on an empty set, a label out of range or
    // a tensor/label count mismatch.
    void validate() const;

    // Gathers rows in the given order.
    Tensor gather(std::span<const std::size_t> indices) const;
    LabeledDataset subset(std::span<const std::size_t> indices) const;
    LabeledDataset head(std::size_t n) const;
};

enum class Provenance : std::uint8_t { random = 0, classMean = 1, kmeansHerding = 2, external = 3 };

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// Synthetic summary D_syn. Built-in distillers emit ipc examples per class in
// class-major order.
struct DistilledDataset : LabeledDataset {
    Provenance provenance = Provenance::external;
    std::size_t ipc = 0;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- IDX -----------------------------------------------------------------

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Images are (N, rows, cols) with values in [0,1]; bytes = round(v * 255).
void write_idx(const LabeledDataset& data, const std::filesystem::path& images, const std::filesystem::path& labels);

// ---- synthetic fixtures --------------------------------------------------

enum class SynthKind { gaussianBlobs, spirals };

SynthKind synth_kind_from_string(const std::string& s);

// gaussianBlobs: class c centred at 3*(cos 2pi c/K, sin 2pi c/K) with
// isotropic Gaussian noise of std `noise`. spirals: K interleaved arms.
// Examples are 2-D, class-major.
LabeledDataset synth_dataset(SynthKind kind, std::size_t numClasses, std::size_t perClass, double noise,
                             std::uint64_t seed);

// ---- distillers ----------------------------------------------------------

DistilledDataset distill_random(const LabeledDataset& data, std::size_t ipc, std::uint64_t seed);
DistilledDataset distill_class_mean(const LabeledDataset& data);

struct KMeansTrace {
    // Within-class total squared distance after each iteration, per class.
    std::vector<std::vector<double>> objective;
};

DistilledDataset distill_kmeans_herding(const LabeledDataset& data, std::size_t ipc, std::size_t iterations,
                                        std::uint64_t seed, KMeansTrace* trace = nullptr);

// ---- DSTL distilled-data file --------------------------------------------

void save_distilled(const DistilledDataset& data, const std::filesystem::path& path);
DistilledDataset load_distilled(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace dprune
