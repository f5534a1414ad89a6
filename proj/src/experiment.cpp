#include "dprune/experiment.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include "dprune/analysis.hpp"
#include "dprune/pruning.hpp"
#include "dprune/report.hpp"
#include "dprune/rng.hpp"

namespace dprune {

using nlohmann::json;
namespace fs = std::filesystem;

ConfigError::ConfigError(std::vector<std::string> diags)
    : std::runtime_error(diags.empty() ? "invalid config" : "invalid config: " + diags.front()),
      diagnostics(std::move(diags)) {}

namespace {

// Reads typed fields from a JSON object, collecting one diagnostic per
// problem instead of stopping at the first.
class FieldReader {
public:
    explicit FieldReader(std::vector<std::string>& diags) : diags_(diags) {}

    const json* object(const json& parent, const std::string& key, const std::string& path, bool required) {
        if (!parent.contains(key)) {
            if (required) diags_.push_back(path + key + " is required");
            return nullptr;
        }
        const auto& v = parent.at(key);
        if (!v.is_object()) {
            diags_.push_back(path + key + " must be an object");
            return nullptr;
        }
        return &v;
    }

    void known_keys(const json& obj, const std::set<std::string>& keys, const std::string& path) {
        for (const auto& [k, _] : obj.items())
            if (!keys.contains(k) && !k.starts_with('_')) diags_.push_back(path + k + " is not a recognised key");
    }

    void number(const json& obj, const std::string& key, double& out, const std::string& path) {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_number()) {
            diags_.push_back(path + key + " must be a number");
            return;
        }
        out = obj.at(key).get<double>();
    }

    template <class Int>
    void unsigned_int(const json& obj, const std::string& key, Int& out, const std::string& path) {
        if (!obj.contains(key)) return;
        const auto& v = obj.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0 && !v.is_number_unsigned())) {
            diags_.push_back(path + key + " must be a non-negative integer");
            return;
        }
        out = v.get<Int>();
    }

    void boolean(const json& obj, const std::string& key, bool& out, const std::string& path) {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_boolean()) {
            diags_.push_back(path + key + " must be true or false");
            return;
        }
        out = obj.at(key).get<bool>();
    }

    bool string(const json& obj, const std::string& key, std::string& out, const std::string& path,
                bool required = false) {
        if (!obj.contains(key)) {
            if (required) diags_.push_back(path + key + " is required");
            return false;
        }
        if (!obj.at(key).is_string()) {
            diags_.push_back(path + key + " must be a string");
            return false;
        }
        out = obj.at(key).get<std::string>();
        return true;
    }

    template <class Int>
    void uint_list(const json& obj, const std::string& key, std::vector<Int>& out, const std::string& path) {
        if (!obj.contains(key)) return;
        const auto& v = obj.at(key);
        bool ok = v.is_array();
        if (ok)
            for (const auto& e : v) ok = ok && e.is_number_integer() && e.get<std::int64_t>() >= 0;
        if (!ok) {
            diags_.push_back(path + key + " must be a list of non-negative integers");
            return;
        }
        out = v.get<std::vector<Int>>();
    }

    template <class Fn>
    void parse_enum(const std::string& text, const std::string& what, Fn&& fn) {
        try {
            fn(text);
        } catch (const std::invalid_argument&) {
            diags_.push_back(what + " has unknown value '" + text + "'");
        }
    }

    void add(std::string d) { diags_.push_back(std::move(d)); }

private:
    std::vector<std::string>& diags_;
};

void read_train_config(FieldReader& r, const json& doc, const std::string& key, TrainConfig& cfg) {
    const auto* obj = r.object(doc, key, "", false);
    if (!obj) return;
    const auto path = key + ".";
    r.known_keys(*obj,
                 {"learning_rate", "momentum", "weight_decay", "batch_size", "milestones", "gamma", "shuffle_seed"},
                 path);
    r.number(*obj, "learning_rate", cfg.learningRate, path);
    r.number(*obj, "momentum", cfg.momentum, path);
    r.number(*obj, "weight_decay", cfg.weightDecay, path);
    r.unsigned_int(*obj, "batch_size", cfg.batchSize, path);
    r.uint_list(*obj, "milestones", cfg.milestones, path);
    r.number(*obj, "gamma", cfg.gamma, path);
    r.unsigned_int(*obj, "shuffle_seed", cfg.shuffleSeed, path);
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

ExperimentConfig interpret(const json& doc, const fs::path& baseDir, std::vector<std::string>& diags) {
    ExperimentConfig cfg;
    FieldReader r(diags);
    if (!doc.is_object()) {
        diags.emplace_back("config must be a JSON object");
        return cfg;
    }
    r.known_keys(doc,
                 {"schema_version", "dataset", "model", "method", "prune", "train_mask", "train_finetune", "seeds",
                  "distiller", "output_dir", "report", "jobs"},
                 "");
    if (doc.contains("schema_version")) {
        const auto& v = doc.at("schema_version");
        if (!v.is_number_integer() || v.get<int>() != kReportSchemaVersion)
            diags.push_back("schema_version must be " + std::to_string(kReportSchemaVersion));
    }

    // dataset
    if (const auto* ds = r.object(doc, "dataset", "", true)) {
        std::string source;
        r.string(*ds, "source", source, "dataset.", true);
        if (source == "idx") {
            cfg.dataset.kind = DatasetSource::Kind::idx;
            r.known_keys(*ds, {"source", "train_images", "train_labels", "test_images", "test_labels", "train_limit"},
                         "dataset.");
            auto file = [&](const char* key, fs::path& out) {
                std::string s;
                if (r.string(*ds, key, s, "dataset.", true)) {
                    out = resolve(baseDir, s);
                    if (!fs::exists(out)) r.add(std::string("dataset.") + key + " file not found: " + out.string());
                }
            };
            file("train_images", cfg.dataset.trainImages);
            file("train_labels", cfg.dataset.trainLabels);
            file("test_images", cfg.dataset.testImages);
            file("test_labels", cfg.dataset.testLabels);
            r.unsigned_int(*ds, "train_limit", cfg.dataset.trainLimit, "dataset.");
        } else if (source == "synth") {
            cfg.dataset.kind = DatasetSource::Kind::synth;
            r.known_keys(*ds, {"source", "generator", "num_classes", "per_class", "test_per_class", "noise", "seed"},
                         "dataset.");
            std::string gen = "gaussianBlobs";
            r.string(*ds, "generator", gen, "dataset.");
            r.parse_enum(gen, "dataset.generator", [&](const std::string& s) { cfg.dataset.generator = synth_kind_from_string(s); });
            r.unsigned_int(*ds, "num_classes", cfg.dataset.numClasses, "dataset.");
            r.unsigned_int(*ds, "per_class", cfg.dataset.perClass, "dataset.");
            r.unsigned_int(*ds, "test_per_class", cfg.dataset.testPerClass, "dataset.");
            r.number(*ds, "noise", cfg.dataset.noise, "dataset.");
            r.unsigned_int(*ds, "seed", cfg.dataset.seed, "dataset.");
            if (cfg.dataset.numClasses < 2) r.add("dataset.num_classes must be at least 2");
            if (cfg.dataset.perClass < 1) r.add("dataset.per_class must be at least 1");
            if (cfg.dataset.testPerClass < 1) r.add("dataset.test_per_class must be at least 1");
            if (!(cfg.dataset.noise >= 0.0)) r.add("dataset.noise must be non-negative");
        } else if (!source.empty()) {
            r.add("dataset.source must be \"idx\" or \"synth\"");
        }
    }

    // model
    if (const auto* m = r.object(doc, "model", "", true)) {
        r.known_keys(*m, {"architecture", "hidden"}, "model.");
        std::string arch;
        if (r.string(*m, "architecture", arch, "model.", true))
            r.parse_enum(arch, "model.architecture", [&](const std::string& s) { cfg.architecture = architecture_from_string(s); });
        r.uint_list(*m, "hidden", cfg.hidden, "model.");
        for (auto h : cfg.hidden)
            if (h == 0) r.add("model.hidden entries must be positive");
        if (cfg.architecture == Architecture::convnet && cfg.hidden.empty())
            r.add("model.hidden must list at least one conv block for convnet");
        if (cfg.architecture == Architecture::convnet && cfg.dataset.kind == DatasetSource::Kind::synth)
            r.add("model.architecture convnet needs image data (dataset.source \"idx\")");
    }

    // method
    if (doc.contains("method")) {
        const auto& v = doc.at("method");
        std::vector<std::string> names;
        if (v.is_string())
            names.push_back(v.get<std::string>());
        else if (v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); }))
            names = v.get<std::vector<std::string>>();
        else
            r.add("method must be a string or list of strings");
        if (!names.empty()) cfg.methods.clear();
        for (const auto& n : names)
            r.parse_enum(n, "method", [&](const std::string& s) {
                const auto m = method_from_string(s);
                if (std::find(cfg.methods.begin(), cfg.methods.end(), m) == cfg.methods.end())
                    cfg.methods.push_back(m);
            });
    }

    // prune
    if (const auto* p = r.object(doc, "prune", "", false)) {
        r.known_keys(*p,
                     {"amount", "desired_sparsity", "mask_train_epochs", "finetune_epochs", "rewind_epoch", "scope",
                      "prunable_kinds", "max_iterations"},
                     "prune.");
        r.number(*p, "amount", cfg.prune.amount, "prune.");
        r.number(*p, "desired_sparsity", cfg.prune.desiredSparsity, "prune.");
        r.unsigned_int(*p, "mask_train_epochs", cfg.prune.maskTrainEpochs, "prune.");
        r.unsigned_int(*p, "finetune_epochs", cfg.prune.finetuneEpochs, "prune.");
        r.unsigned_int(*p, "rewind_epoch", cfg.prune.rewindEpoch, "prune.");
        r.unsigned_int(*p, "max_iterations", cfg.prune.maxIterations, "prune.");
        std::string scope;
        if (r.string(*p, "scope", scope, "prune."))
            r.parse_enum(scope, "prune.scope", [&](const std::string& s) { cfg.prune.scope.mode = scope_mode_from_string(s); });
        if (p->contains("prunable_kinds")) {
            const auto& v = p->at("prunable_kinds");
            if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); })) {
                r.add("prune.prunable_kinds must be a list of strings");
            } else {
                cfg.prune.scope.prunableKinds.clear();
                for (const auto& e : v)
                    r.parse_enum(e.get<std::string>(), "prune.prunable_kinds",
                                 [&](const std::string& s) { cfg.prune.scope.prunableKinds.insert(param_kind_from_string(s)); });
            }
        }
    }
    read_train_config(r, doc, "train_mask", cfg.prune.maskTrain);
    read_train_config(r, doc, "train_finetune", cfg.prune.finetune);
    r.uint_list(doc, "seeds", cfg.prune.seeds, "");

    // distiller
    if (const auto* d = r.object(doc, "distiller", "", false)) {
        r.known_keys(*d, {"kind", "ipc", "iterations", "seed", "path"}, "distiller.");
        std::string kind;
        if (r.string(*d, "kind", kind, "distiller."))
            r.parse_enum(kind, "distiller.kind", [&](const std::string& s) { cfg.distiller.kind = provenance_from_string(s); });
        r.unsigned_int(*d, "ipc", cfg.distiller.ipc, "distiller.");
        r.unsigned_int(*d, "iterations", cfg.distiller.iterations, "distiller.");
        r.unsigned_int(*d, "seed", cfg.distiller.seed, "distiller.");
        std::string path;
        if (r.string(*d, "path", path, "distiller.")) cfg.distiller.path = resolve(baseDir, path);
        if (cfg.distiller.kind == Provenance::external) {
            if (cfg.distiller.path.empty())
                r.add("distiller.path is required for kind \"external\"");
            else if (!fs::exists(cfg.distiller.path))
                r.add("distiller.path file not found: " + cfg.distiller.path.string());
        } else {
            if (cfg.distiller.ipc == 0) r.add("distiller.ipc must be positive");
            if (cfg.distiller.kind == Provenance::kmeansHerding && cfg.distiller.iterations == 0)
                r.add("distiller.iterations must be positive");
        }
    }

    std::string out;
    if (r.string(doc, "output_dir", out, "")) cfg.outputDir = resolve(baseDir, out);

    if (const auto* rep = r.object(doc, "report", "", false)) {
        r.known_keys(*rep,
                     {"finetune_each_iteration", "dense_baseline", "timings", "lmc", "lmc_points", "lmc_seeds",
                      "stability_threshold", "histograms", "histogram_bins"},
                     "report.");
        r.boolean(*rep, "finetune_each_iteration", cfg.report.finetuneEachIteration, "report.");
        r.boolean(*rep, "dense_baseline", cfg.report.denseBaseline, "report.");
        r.boolean(*rep, "timings", cfg.report.timings, "report.");
        r.boolean(*rep, "lmc", cfg.report.lmc, "report.");
        r.unsigned_int(*rep, "lmc_points", cfg.report.lmcPoints, "report.");
        std::vector<std::uint64_t> seeds;
        r.uint_list(*rep, "lmc_seeds", seeds, "report.");
        if (rep->contains("lmc_seeds")) {
            if (seeds.size() != 2)
                r.add("report.lmc_seeds must hold exactly two seeds");
            else
                cfg.report.lmcSeeds = {seeds[0], seeds[1]};
        }
        r.number(*rep, "stability_threshold", cfg.report.stabilityThreshold, "report.");
        r.boolean(*rep, "histograms", cfg.report.histograms, "report.");
        r.unsigned_int(*rep, "histogram_bins", cfg.report.histogramBins, "report.");
        if (cfg.report.lmcPoints < 2) r.add("report.lmc_points must be at least 2");
        if (cfg.report.histogramBins < 1) r.add("report.histogram_bins must be positive");
    }
    r.unsigned_int(doc, "jobs", cfg.jobs, "");
    if (cfg.jobs == 0) r.add("jobs must be positive");

    cfg.prune.finetuneEachIteration = cfg.report.finetuneEachIteration;
    for (auto& d : validate(cfg.prune)) diags.push_back(d.starts_with("train_") ? d : "prune." + d);
    return cfg;
}

}  // namespace

std::vector<std::string> validate_config_json(const json& doc, const fs::path& baseDir) {
    std::vector<std::string> diags;
    interpret(doc, baseDir, diags);
    return diags;
}

namespace {
json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config " + path.string() + " is not valid JSON: " + e.what());
    }
}
}  // namespace

std::vector<std::string> validate_config(const fs::path& path) {
    const auto doc = read_json_file(path);
    return validate_config_json(doc, path.parent_path());
}

ExperimentConfig parse_config(const json& doc, const fs::path& baseDir) {
    std::vector<std::string> diags;
    auto cfg = interpret(doc, baseDir, diags);
    if (!diags.empty()) throw ConfigError(std::move(diags));
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) { return parse_config(read_json_file(path), path.parent_path()); }

LoadedData load_data(const ExperimentConfig& cfg) {
    LoadedData d;
    if (cfg.dataset.kind == DatasetSource::Kind::idx) {
        d.train = load_idx(cfg.dataset.trainImages, cfg.dataset.trainLabels);
        d.test = load_idx(cfg.dataset.testImages, cfg.dataset.testLabels);
        if (cfg.dataset.trainLimit > 0) d.train = d.train.head(cfg.dataset.trainLimit);
        const auto classes = std::max(d.train.numClasses, d.test.numClasses);
        d.train.numClasses = d.test.numClasses = classes;
        if (d.train.example_shape() != d.test.example_shape())
            throw std::invalid_argument("train and test images have different shapes");
    } else {
        const auto& s = cfg.dataset;
        d.train = synth_dataset(s.generator, s.numClasses, s.perClass, s.noise, s.seed);
        d.test = synth_dataset(s.generator, s.numClasses, s.testPerClass, s.noise, s.seed + 1);
    }
    d.spec.architecture = cfg.architecture;
    d.spec.hidden = cfg.hidden;
    d.spec.numClasses = d.train.numClasses;
    d.spec.inputShape = d.train.example_shape();
    return d;
}

DistilledDataset make_distilled(const ExperimentConfig& cfg, const LabeledDataset& train) {
    const auto& d = cfg.distiller;
    switch (d.kind) {
    case Provenance::random: return distill_random(train, d.ipc, d.seed);
    case Provenance::classMean: return distill_class_mean(train);
    case Provenance::kmeansHerding: return distill_kmeans_herding(train, d.ipc, d.iterations, d.seed);
    case Provenance::external: {
        auto syn = load_distilled(d.path);
        if (syn.example_shape() != train.example_shape())
            throw std::invalid_argument("external distilled data shape " + shape_string(syn.example_shape()) +
                                        " does not match " + shape_string(train.example_shape()));
        if (syn.numClasses != train.numClasses)
            throw std::invalid_argument("external distilled data has a different class count");
        return syn;
    }
    }
    throw std::logic_error("unhandled distiller");
}

namespace {

using Clock = std::chrono::steady_clock;

struct MethodOutcome {
    RunRecord record;
    ParameterVector rewind;  // weights the final mask is retrained from
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    ParameterVector init;
    std::optional<DenseRow> dense;
    std::vector<MethodOutcome> methods;  // cfg.methods order
};

SeedOutcome run_seed(const ExperimentConfig& cfg, const LoadedData& data, const DistilledDataset* syn,
                     std::uint64_t seed) {
    SeedOutcome out;
    out.seed = seed;
    out.init = init_params(data.spec, seed);
    PruneRunConfig prune = cfg.prune;
    prune.finetuneEachIteration = cfg.report.finetuneEachIteration;
    prune.maskTrain.shuffleSeed = derive_seed(cfg.prune.maskTrain.shuffleSeed, seed);
    prune.finetune.shuffleSeed = derive_seed(cfg.prune.finetune.shuffleSeed, seed);

    if (cfg.report.denseBaseline && cfg.report.finetuneEachIteration) {
        const auto t0 = Clock::now();
        const auto ev = dense_baseline(data.spec, out.init, data.train, data.test, prune);
        out.dense = DenseRow{ev.accuracy, std::chrono::duration<double>(Clock::now() - t0).count()};
    }
    for (auto method : cfg.methods) {
        RunOptions opts{seed, &data.test, {}};
        MethodOutcome mo;
        mo.rewind = out.init;
        std::size_t rewindEpoch = 0;
        switch (method) {
        case Method::imp:
            rewindEpoch = prune.rewindEpoch;
            opts.onRewind = [&](std::size_t it, const ParameterVector& p, const SparsityMask&) {
                if (it == 1 && rewindEpoch > 0) mo.rewind = p;
            };
            mo.record = imp_run(data.spec, out.init, data.train, prune, opts);
            break;
        case Method::distilled:
            mo.record = distilled_prune_run(data.spec, out.init, *syn, data.train, prune, opts).record;
            break;
        case Method::random: mo.record = random_prune_run(data.spec, out.init, data.train, prune, opts); break;
        }
        const auto& last = mo.record.last();
        std::cerr << "[" << to_string(method) << " seed " << seed << "] " << mo.record.perIteration.size()
                  << " iterations, sparsity " << format_number(last.sparsity) << ", accuracy "
                  << format_number(last.finetuneAccuracy.value_or(0.0)) << "\n";
        out.methods.push_back(std::move(mo));
    }
    return out;
}

std::vector<SeedOutcome> run_all_seeds(const ExperimentConfig& cfg, const LoadedData& data,
                                       const DistilledDataset* syn) {
    const auto& seeds = cfg.prune.seeds;
    std::vector<std::optional<SeedOutcome>> results(seeds.size());
    std::vector<std::exception_ptr> errors(seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
            try {
                results[i] = run_seed(cfg, data, syn, seeds[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min(cfg.jobs, seeds.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<SeedOutcome> out;
    for (auto& r : results) out.push_back(std::move(*r));
    return out;
}

std::string table_name(const std::string& stem, Method m, bool multi, const std::string& suffix = "") {
    return stem + (multi ? std::string("_") + to_string(m) : "") + suffix + ".csv";
}

}  // namespace

ReportBundle run_experiment(const ExperimentConfig& cfg, Stage stage) {
    const auto data = load_data(cfg);
    std::optional<DistilledDataset> syn;
    if (std::find(cfg.methods.begin(), cfg.methods.end(), Method::distilled) != cfg.methods.end())
        syn = make_distilled(cfg, data.train);

    const auto outcomes = run_all_seeds(cfg, data, syn ? &*syn : nullptr);
    const bool multi = cfg.methods.size() > 1;
    ReportBundle bundle;

    CsvTable iterations;
    iterations.header = iterations_header();
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
        for (const auto& so : outcomes) append_iteration_rows(iterations, so.methods[mi].record, so.dense, cfg.report.timings);
    bundle.tables["iterations.csv"] = iterations.to_string();

    bundle.summary = summarize_iterations(CsvTable::parse(bundle.tables["iterations.csv"]));
    bundle.summary["model"] = {{"architecture", to_string(data.spec.architecture)},
                               {"hidden", data.spec.hidden},
                               {"input_shape", data.spec.inputShape},
                               {"num_classes", data.spec.numClasses},
                               {"parameters", parameter_count(data.spec)}};
    bundle.summary["data"] = {{"train", data.train.size()}, {"test", data.test.size()}};
    if (syn)
        bundle.summary["distilled"] = {{"provenance", to_string(syn->provenance)},
                                       {"ipc", syn->ipc},
                                       {"examples", syn->size()}};
    bundle.summary["timings_recorded"] = cfg.report.timings;

    // Final masks.
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
        for (const auto& so : outcomes) {
            const auto name = std::string("masks/") + to_string(cfg.methods[mi]) + "_seed" + std::to_string(so.seed) + ".mask";
            save_mask(so.methods[mi].record.last().mask, cfg.outputDir / name,
                      {to_string(cfg.methods[mi]), so.seed});
            bundle.writtenFiles.push_back(name);
            bundle.writtenFiles.push_back(name + ".json");
        }

    if (stage == Stage::lmc || cfg.report.lmc) {
        json lmc = json::array();
        for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
            std::vector<std::pair<InterpolationCurve, double>> curves;
            for (const auto& so : outcomes) {
                const auto& mo = so.methods[mi];
                const auto& mask = mo.record.last().mask;
                const std::uint64_t sa = cfg.report.lmcSeeds.first + so.seed, sb = cfg.report.lmcSeeds.second + so.seed;
                auto [a, b] = train_twin(data.spec, mo.rewind, mask, data.train, cfg.prune.finetune_config(), sa, sb);
                auto curve = interpolate_curve(data.spec, a, b, mask, data.test, cfg.report.lmcPoints);
                curve.seedPair = {sa, sb};
                curve.maskId = std::string(to_string(cfg.methods[mi])) + "_seed" + std::to_string(so.seed);
                const auto rep = instability(curve, cfg.report.stabilityThreshold);
                lmc.push_back({{"method", to_string(cfg.methods[mi])},
                               {"seed", so.seed},
                               {"seed_a", sa},
                               {"seed_b", sb},
                               {"mask_sparsity", mo.record.last().sparsity},
                               {"error_barrier", rep.errorBarrier},
                               {"stable", rep.stable},
                               {"threshold", rep.threshold}});
                curves.emplace_back(std::move(curve), mo.record.last().sparsity);
            }
            bundle.tables[table_name("lmc", cfg.methods[mi], multi)] = lmc_table(curves).to_string();
        }
        bundle.summary["lmc"] = std::move(lmc);
    }

    if (stage == Stage::weights || cfg.report.histograms) {
        json weights = json::object();
        for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
            json ratios = json::object();
            for (const auto& so : outcomes) {
                const auto& mask = so.methods[mi].record.last().mask;
                try {
                    ratios[std::to_string(so.seed)] = survivor_magnitude_ratio(so.init, mask);
                } catch (const std::invalid_argument&) {
                    ratios[std::to_string(so.seed)] = nullptr;
                }
            }
            // Histograms use the first seed's mask and initialization.
            const auto& first = outcomes.front();
            const auto& mask = first.methods[mi].record.last().mask;
            json layers = json::array();
            for (const auto& layer : first.init.layers) {
                if (!is_prunable(layer, cfg.prune.scope.prunableKinds)) continue;
                const auto h = weight_histogram(first.init, mask, layer.name, cfg.report.histogramBins);
                const auto name = "hist" + std::string(multi ? std::string("_") + to_string(cfg.methods[mi]) : "") +
                                  "_" + layer.name + ".csv";
                bundle.tables[name] = histogram_table(h).to_string();
                layers.push_back({{"layer", layer.name}, {"sparsity", h.sparsity}, {"empty", h.empty}, {"file", name}});
            }
            weights[to_string(cfg.methods[mi])] = {{"survivor_magnitude_ratio", std::move(ratios)},
                                                    {"histogram_seed", first.seed},
                                                    {"layers", std::move(layers)}};
        }
        bundle.summary["weights"] = std::move(weights);
    }

    for (const auto& [name, text] : bundle.tables) {
        write_file_atomic(cfg.outputDir / name, text);
        bundle.writtenFiles.push_back(name);
    }
    std::sort(bundle.writtenFiles.begin(), bundle.writtenFiles.end());
    bundle.summary["files"] = bundle.writtenFiles;
    write_file_atomic(cfg.outputDir / "summary.json", bundle.summary.dump(2) + "\n");
    return bundle;
}

json rebuild_summary(const fs::path& outputDir) {
    const auto bytes = read_file(outputDir / "iterations.csv");
    auto summary = summarize_iterations(CsvTable::parse(std::string(bytes.begin(), bytes.end())));
    // Sections not derived from iterations.csv are carried over.
    const auto previous = outputDir / "summary.json";
    if (fs::exists(previous)) {
        const auto old = read_file(previous);
        auto doc = json::parse(old.begin(), old.end(), nullptr, false);
        if (doc.is_object())
            for (auto& [key, value] : doc.items())
                if (!summary.contains(key)) summary[key] = value;
    }
    write_file_atomic(outputDir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

}  // namespace dprune
