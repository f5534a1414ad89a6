#include "dprune/engine.hpp"

#include <chrono>

#include "dprune/rng.hpp"

namespace dprune {

const char* to_string(Method m) {
    switch (m) {
    case Method::imp: return "imp";
    case Method::distilled: return "distilled";
    case Method::random: return "random";
    }
    return "unknown";
}

Method method_from_string(const std::string& s) {
    for (auto m : {Method::imp, Method::distilled, Method::random})
        if (s == to_string(m)) return m;
    throw std::invalid_argument("unknown method '" + s + "'");
}

TrainConfig PruneRunConfig::mask_config() const {
    TrainConfig c = maskTrain;
    c.epochs = maskTrainEpochs;
    return c;
}

TrainConfig PruneRunConfig::finetune_config() const {
    TrainConfig c = finetune;
    c.epochs = finetuneEpochs;
    return c;
}

std::vector<std::string> validate(const PruneRunConfig& cfg) {
    std::vector<std::string> out;
    if (!(cfg.amount > 0.0 && cfg.amount < 1.0)) out.emplace_back("amount must be in (0,1)");
    if (!(cfg.desiredSparsity > 0.0 && cfg.desiredSparsity < 1.0))
        out.emplace_back("desired_sparsity must be in (0,1)");
    if (cfg.maskTrainEpochs == 0) out.emplace_back("mask_train_epochs must be positive");
    if (cfg.finetuneEpochs == 0) out.emplace_back("finetune_epochs must be positive");
    if (cfg.rewindEpoch > 0 && cfg.rewindEpoch >= cfg.maskTrainEpochs)
        out.emplace_back("rewind_epoch must be < mask_train_epochs when positive");
    if (cfg.rewindEpoch > 0 && cfg.rewindEpoch >= cfg.finetuneEpochs)
        out.emplace_back("rewind_epoch must be < finetune_epochs when positive");
    if (cfg.scope.prunableKinds.empty()) out.emplace_back("prunable_kinds must not be empty");
    if (cfg.maxIterations == 0) out.emplace_back("max_iterations must be positive");
    if (cfg.seeds.empty()) out.emplace_back("seeds must not be empty");
    for (auto& d : validate(cfg.mask_config(), "train_mask.")) out.push_back(std::move(d));
    for (auto& d : validate(cfg.finetune_config(), "train_finetune.")) out.push_back(std::move(d));
    return out;
}

const ParameterVector& RewindStore::at(std::size_t epoch) const {
    auto it = snapshots.find(epoch);
    if (it == snapshots.end()) throw std::out_of_range("no rewind snapshot for epoch " + std::to_string(epoch));
    return it->second;
}

const IterationRecord* RunRecord::first_at_or_above(double target) const {
    for (const auto& it : perIteration)
        if (it.sparsity >= target) return &it;
    return nullptr;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_run(const PruneRunConfig& cfg, const ParameterVector& init, const ModelSpec& spec) {
    auto diags = validate(cfg);
    if (!diags.empty()) throw std::invalid_argument("invalid prune config: " + diags.front());
    if (init.layers != layer_map(spec)) throw std::invalid_argument("initial parameters do not match model");
}

const LabeledDataset& eval_set(const RunOptions& opts, const LabeledDataset& real) {
    return opts.evalData ? *opts.evalData : real;
}

// Trains `start` (.) mask on D_real for n epochs and scores it.
ParameterVector finetune_into(IterationRecord& rec, const ModelSpec& spec, const ParameterVector& start,
                              const LabeledDataset& real, const PruneRunConfig& cfg, const RunOptions& opts) {
    const auto t0 = Clock::now();
    auto tuned = train(spec, start, rec.mask, real, cfg.finetune_config());
    rec.finetuneSeconds = seconds_since(t0);
    const auto ev = evaluate(spec, tuned, rec.mask, eval_set(opts, real));
    rec.finetuneAccuracy = ev.accuracy;
    rec.finetuneLoss = ev.meanLoss;
    return tuned;
}

void check_progress(const SparsityMask& before, const SparsityMask& after, std::size_t iteration) {
    if (before == after)
        throw UnreachableSparsity("pruning stalled at iteration " + std::to_string(iteration) +
                                  ": floor(amount x survivors) is zero");
}

// Shared train -> prune -> rewind loop. `maskData`/`maskCfg` select what the
// loop trains on; `rewindEpoch` selects the RewindStore entry.
struct LoopResult {
    RunRecord record;
    RewindStore store;
    ParameterVector lastFinetuned;
};

LoopResult magnitude_loop(Method method, const ModelSpec& spec, const ParameterVector& init,
                          const LabeledDataset& maskData, const TrainConfig& maskCfg, std::size_t rewindEpoch,
                          const LabeledDataset& real, const PruneRunConfig& cfg, const RunOptions& opts) {
    LoopResult res;
    res.record.method = method;
    res.record.config = cfg;
    res.record.seed = opts.seed;
    res.store.snapshots.emplace(0, init);

    ParameterVector theta = init;
    SparsityMask mask = SparsityMask::ones(init.layers);
    const auto& kinds = cfg.scope.prunableKinds;
    while (sparsity(mask, kinds) < cfg.desiredSparsity) {
        const std::size_t iteration = res.record.perIteration.size() + 1;
        if (iteration > cfg.maxIterations)
            throw UnreachableSparsity("desired sparsity not reached within " + std::to_string(cfg.maxIterations) +
                                      " iterations");
        const auto t0 = Clock::now();
        EpochHook hook;
        if (iteration == 1 && rewindEpoch > 0)
            hook = [&](std::size_t done, const ParameterVector& p) {
                if (done == rewindEpoch) res.store.snapshots.emplace(done, p);
            };
        const auto trained = train(spec, theta, mask, maskData, maskCfg, hook);
        auto next = magnitude_prune(trained, mask, cfg.amount, cfg.scope);
        check_progress(mask, next, iteration);
        mask = std::move(next);
        theta = apply_mask(res.store.at(rewindEpoch), mask);
        IterationRecord rec;
        rec.maskPhaseSeconds = seconds_since(t0);
        rec.iteration = iteration;
        rec.mask = mask;
        rec.sparsity = sparsity(mask, kinds);
        if (opts.onRewind) opts.onRewind(iteration, theta, mask);

        const bool done = rec.sparsity >= cfg.desiredSparsity;
        if (cfg.finetuneEachIteration || done) res.lastFinetuned = finetune_into(rec, spec, theta, real, cfg, opts);
        res.record.perIteration.push_back(std::move(rec));
    }
    return res;
}

}  // namespace

RunRecord imp_run(const ModelSpec& spec, const ParameterVector& init, const LabeledDataset& real,
                  const PruneRunConfig& cfg, const RunOptions& opts) {
    check_run(cfg, init, spec);
    real.validate();
    return magnitude_loop(Method::imp, spec, init, real, cfg.finetune_config(), cfg.rewindEpoch, real, cfg, opts)
        .record;
}

DistilledRunResult distilled_prune_run(const ModelSpec& spec, const ParameterVector& init,
                                       const LabeledDataset& synthetic, const LabeledDataset& real,
                                       const PruneRunConfig& cfg, const RunOptions& opts) {
    check_run(cfg, init, spec);
    synthetic.validate();
    real.validate();
    auto res = magnitude_loop(Method::distilled, spec, init, synthetic, cfg.mask_config(), 0, real, cfg, opts);
    DistilledRunResult out{std::move(res.lastFinetuned), res.record.last().mask, std::move(res.record)};
    return out;
}

RunRecord random_prune_run(const ModelSpec& spec, const ParameterVector& init, const LabeledDataset& real,
                           const PruneRunConfig& cfg, const RunOptions& opts) {
    check_run(cfg, init, spec);
    real.validate();
    RunRecord record;
    record.method = Method::random;
    record.config = cfg;
    record.seed = opts.seed;

    SparsityMask mask = SparsityMask::ones(init.layers);
    const auto& kinds = cfg.scope.prunableKinds;
    while (sparsity(mask, kinds) < cfg.desiredSparsity) {
        const std::size_t iteration = record.perIteration.size() + 1;
        if (iteration > cfg.maxIterations)
            throw UnreachableSparsity("desired sparsity not reached within " + std::to_string(cfg.maxIterations) +
                                      " iterations");
        const auto t0 = Clock::now();
        auto next = random_prune(mask, cfg.amount, derive_seed(opts.seed, iteration), cfg.scope);
        check_progress(mask, next, iteration);
        mask = std::move(next);
        const auto theta = apply_mask(init, mask);
        IterationRecord rec;
        rec.maskPhaseSeconds = seconds_since(t0);
        rec.iteration = iteration;
        rec.mask = mask;
        rec.sparsity = sparsity(mask, kinds);
        if (opts.onRewind) opts.onRewind(iteration, theta, mask);
        const bool done = rec.sparsity >= cfg.desiredSparsity;
        if (cfg.finetuneEachIteration || done) finetune_into(rec, spec, theta, real, cfg, opts);
        record.perIteration.push_back(std::move(rec));
    }
    return record;
}

double time_to_mask(const RunRecord& record, bool includeFinalRetrain, std::optional<std::size_t> throughIteration) {
    double total = 0.0;
    const IterationRecord* lastSeen = nullptr;
    for (const auto& it : record.perIteration) {
        if (throughIteration && it.iteration > *throughIteration) break;
        total += it.maskPhaseSeconds;
        lastSeen = &it;
    }
    if (includeFinalRetrain && lastSeen && lastSeen->finetuneSeconds) total += *lastSeen->finetuneSeconds;
    return total;
}

Evaluation dense_baseline(const ModelSpec& spec, const ParameterVector& init, const LabeledDataset& real,
                          const LabeledDataset& eval, const PruneRunConfig& cfg) {
    const auto ones = SparsityMask::ones(init.layers);
    const auto trained = train(spec, init, ones, real, cfg.finetune_config());
    return evaluate(spec, trained, ones, eval);
}

}  // namespace dprune
