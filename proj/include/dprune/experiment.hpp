#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprune/dataset.hpp"
#include "dprune/engine.hpp"
#include "dprune/model.hpp"

namespace dprune {

struct DatasetSource {
    enum class Kind { idx, synth } kind = Kind::synth;
    // idx
    std::filesystem::path trainImages, trainLabels, testImages, testLabels;
    std::size_t trainLimit = 0;  // 0 keeps everything
    // synth
    SynthKind generator = SynthKind::gaussianBlobs;
    std::size_t numClasses = 2;
    std::size_t perClass = 100;
    std::size_t testPerClass = 50;
    double noise = 0.5;
    std::uint64_t seed = 0;
};

struct DistillerChoice {
    Provenance kind = Provenance::kmeansHerding;
    std::size_t ipc = 10;
    std::size_t iterations = 50;
    std::uint64_t seed = 0;
    std::filesystem::path path;  // external
};

struct ReportOptions {
    bool finetuneEachIteration = true;
    bool denseBaseline = true;
    bool timings = true;
    bool lmc = false;
    std::size_t lmcPoints = 21;
    std::pair<std::uint64_t, std::uint64_t> lmcSeeds{1000, 2000};
    double stabilityThreshold = 0.02;
    bool histograms = false;
    std::size_t histogramBins = 30;
};

struct ExperimentConfig {
    DatasetSource dataset;
    Architecture architecture = Architecture::mlp;
    std::vector<std::size_t> hidden{32};
    std::vector<Method> methods{Method::imp};
    PruneRunConfig prune;
    DistillerChoice distiller;
    std::filesystem::path outputDir = "out";
    ReportOptions report;
    std::size_t jobs = 1;
};

// Diagnostics collected from a config document; empty means valid.
// Relative paths resolve against `baseDir`.
std::vector<std::string> validate_config_json(const nlohmann::json& doc, const std::filesystem::path& baseDir);

// Reads and validates a config file. Throws std::runtime_error if the file
// cannot be read or parsed as JSON.
std::vector<std::string> validate_config(const std::filesystem::path& path);

struct ConfigError : std::runtime_error {
    explicit ConfigError(std::vector<std::string> diags);
    std::vector<std::string> diagnostics;
};

ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& baseDir);
ExperimentConfig load_config(const std::filesystem::path& path);

struct LoadedData {
    LabeledDataset train;
    LabeledDataset test;
    ModelSpec spec;
};

LoadedData load_data(const ExperimentConfig& cfg);

DistilledDataset make_distilled(const ExperimentConfig& cfg, const LabeledDataset& train);

// Files produced by one invocation, keyed by path relative to the output
// directory, plus the JSON summary.
struct ReportBundle {
    nlohmann::json summary;
    std::map<std::string, std::string> tables;
    std::vector<std::string> writtenFiles;
};

enum class Stage { prune, lmc, weights };

// Runs every selected method over every seed and writes the reports
// atomically under cfg.outputDir. `stages` picks the analyses in addition
// to the pruning runs (report options also switch lmc/histograms on).
ReportBundle run_experiment(const ExperimentConfig& cfg, Stage stage = Stage::prune);

// Rebuilds summary.json from an existing iterations.csv.
nlohmann::json rebuild_summary(const std::filesystem::path& outputDir);

}  // namespace dprune
