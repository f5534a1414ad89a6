#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dprune/dataset.hpp"
#include "dprune/model.hpp"
#include "dprune/pruning.hpp"
#include "dprune/train.hpp"

namespace dprune {

enum class Method { imp, distilled, random };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

// Settings for one iterative pruning run. The `epochs` field of the two
// TrainConfigs is ignored: maskTrainEpochs (t) and finetuneEpochs (n) are
// authoritative.
//   imp:       loop trains n epochs on D_real with `finetune`
//   distilled: loop trains t epochs on D_syn with `maskTrain`
//   all:       finetuning trains n epochs on D_real with `finetune`
struct PruneRunConfig {
    double amount = 0.2;
    double desiredSparsity = 0.5;
    std::size_t maskTrainEpochs = 10;
    std::size_t finetuneEpochs = 10;
    std::size_t rewindEpoch = 0;  // k; 0 rewinds to initialization
    PruneScope scope;
    TrainConfig maskTrain;
    TrainConfig finetune;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::size_t maxIterations = 40;
    bool finetuneEachIteration = false;

    TrainConfig mask_config() const;
    TrainConfig finetune_config() const;
};

std::vector<std::string> validate(const PruneRunConfig& cfg);

struct UnreachableSparsity : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Snapshots of the first training pass keyed by completed epochs; epoch 0 is
// theta_init.
struct RewindStore {
    std::map<std::size_t, ParameterVector> snapshots;

    const ParameterVector& at(std::size_t epoch) const;
    bool contains(std::size_t epoch) const { return snapshots.contains(epoch); }
};

struct IterationRecord {
    std::size_t iteration = 0;  // 1-based
    SparsityMask mask;
    double sparsity = 0.0;
    double maskPhaseSeconds = 0.0;
    std::optional<double> finetuneAccuracy;
    std::optional<double> finetuneLoss;
    std::optional<double> finetuneSeconds;
};

struct RunRecord {
    Method method = Method::imp;
    PruneRunConfig config;
    std::uint64_t seed = 0;
    std::vector<IterationRecord> perIteration;

    const IterationRecord& last() const { return perIteration.back(); }
    // First iteration whose sparsity reaches `target`, if any.
    const IterationRecord* first_at_or_above(double target) const;
};

using RewindObserver =
    std::function<void(std::size_t iteration, const ParameterVector& rewound, const SparsityMask& mask)>;

struct RunOptions {
    std::uint64_t seed = 0;
    // Finetuned accuracy is measured here; the real training set if null.
    const LabeledDataset* evalData = nullptr;
    RewindObserver onRewind;
};

// Iterative magnitude pruning with rewinding to epoch k of the first pass.
RunRecord imp_run(const ModelSpec& spec, const ParameterVector& init, const LabeledDataset& real,
                  const PruneRunConfig& cfg, const RunOptions& opts = {});

struct DistilledRunResult {
    ParameterVector finetuned;
    SparsityMask mask;
    RunRecord record;
};

// Mask search trains on D_syn only and always rewinds to theta_init; one
// finetune on D_real at the end.
DistilledRunResult distilled_prune_run(const ModelSpec& spec, const ParameterVector& init,
                                       const LabeledDataset& synthetic, const LabeledDataset& real,
                                       const PruneRunConfig& cfg, const RunOptions& opts = {});

// Random-mask baseline with the IMP count schedule.
RunRecord random_prune_run(const ModelSpec& spec, const ParameterVector& init, const LabeledDataset& real,
                           const PruneRunConfig& cfg, const RunOptions& opts = {});

// Seconds spent producing the mask through `throughIteration` (all
// iterations if unset); optionally plus that iteration's finetune.
// Distillation time is never part of a RunRecord.
double time_to_mask(const RunRecord& record, bool includeFinalRetrain,
                    std::optional<std::size_t> throughIteration = std::nullopt);

// Dense model trained with the finetune settings, evaluated on `eval`.
Evaluation dense_baseline(const ModelSpec& spec, const ParameterVector& init, const LabeledDataset& real,
                          const LabeledDataset& eval, const PruneRunConfig& cfg);

}  // namespace dprune
