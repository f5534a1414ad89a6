// dprune: command-line front end for the pruning engines and analyses.
//
// Exit codes: 0 ok, 2 invalid configuration or arguments, 3 training
// diverged or the target sparsity is unreachable, 4 I/O or file-format
// failure. Diagnostics go to stderr; stdout carries one JSON line.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dprune/experiment.hpp"
#include "dprune/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dprune;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kRuntime = 3, kIo = 4 };

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string method;
    std::size_t jobs = 0;
};

ExperimentConfig configure(const Overrides& o) {
    auto cfg = load_config(o.config);
    if (o.seed) cfg.prune.seeds = {*o.seed};
    if (!o.out.empty()) cfg.outputDir = o.out;
    if (o.jobs > 0) cfg.jobs = o.jobs;
    if (!o.method.empty()) {
        cfg.methods.clear();
        std::size_t start = 0;
        while (start <= o.method.size()) {
            const auto comma = o.method.find(',', start);
            const auto name = o.method.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            try {
                cfg.methods.push_back(method_from_string(name));
            } catch (const std::invalid_argument& e) {
                throw ConfigError({std::string("--method: ") + e.what()});
            }
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    return cfg;
}

int emit(const json& summary) {
    std::cout << summary.dump() << std::endl;
    return kOk;
}

int run_validate(const Overrides& o) {
    const auto diags = validate_config(o.config);
    for (const auto& d : diags) std::cerr << "config: " << d << "\n";
    std::cout << json{{"command", "validate"}, {"valid", diags.empty()}, {"diagnostics", diags}}.dump() << std::endl;
    return diags.empty() ? kOk : kConfig;
}

int run_distill(const Overrides& o) {
    const auto cfg = configure(o);
    const auto data = load_data(cfg);
    const auto syn = make_distilled(cfg, data.train);
    const auto path = cfg.outputDir / "distilled.dstl";
    save_distilled(syn, path);
    return emit({{"command", "distill"},
                 {"file", path.string()},
                 {"provenance", to_string(syn.provenance)},
                 {"ipc", syn.ipc},
                 {"num_classes", syn.numClasses},
                 {"examples", syn.size()}});
}

int run_stage(const Overrides& o, Stage stage, const char* name) {
    const auto cfg = configure(o);
    auto bundle = run_experiment(cfg, stage);
    bundle.summary["command"] = name;
    bundle.summary["output_dir"] = cfg.outputDir.string();
    return emit(bundle.summary);
}

int run_report(const Overrides& o) {
    fs::path dir = o.out;
    if (dir.empty()) {
        if (o.config.empty()) throw ConfigError({"report needs --out DIR or --config PATH"});
        dir = load_config(o.config).outputDir;
    }
    auto summary = rebuild_summary(dir);
    summary["command"] = "report";
    summary["output_dir"] = dir.string();
    return emit(summary);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lottery-ticket search with iterative magnitude pruning and distilled-data pruning"};
    app.require_subcommand(1);
    Overrides o;

    auto add_common = [&](CLI::App* sub, bool needConfig) {
        auto* c = sub->add_option("--config", o.config, "experiment config (JSON)");
        if (needConfig) c->required();
        sub->add_option("--seed", o.seed, "run a single seed instead of the config's list");
        sub->add_option("--out", o.out, "output directory (overrides output_dir)");
        sub->add_option("--jobs", o.jobs, "worker threads for independent seeds");
    };
    auto* distill = app.add_subcommand("distill", "build the distilled dataset and write distilled.dstl");
    add_common(distill, true);
    auto* prune = app.add_subcommand("prune", "run pruning engines and write iterations.csv, masks and summary");
    add_common(prune, true);
    prune->add_option("--method", o.method, "imp, distilled, random or a comma-separated list");
    auto* lmc = app.add_subcommand("lmc", "linear-interpolation instability analysis of the final masks");
    add_common(lmc, true);
    lmc->add_option("--method", o.method, "imp, distilled, random or a comma-separated list");
    auto* weights = app.add_subcommand("weights", "initialization-weight histograms of the final masks");
    add_common(weights, true);
    weights->add_option("--method", o.method, "imp, distilled, random or a comma-separated list");
    auto* report = app.add_subcommand("report", "rebuild summary.json from an existing iterations.csv");
    add_common(report, false);
    auto* validate = app.add_subcommand("validate", "check a config file and list every problem");
    validate->add_option("--config", o.config, "experiment config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*validate) return run_validate(o);
        if (*distill) return run_distill(o);
        if (*prune) return run_stage(o, Stage::prune, "prune");
        if (*lmc) return run_stage(o, Stage::lmc, "lmc");
        if (*weights) return run_stage(o, Stage::weights, "weights");
        if (*report) return run_report(o);
    } catch (const ConfigError& e) {
        for (const auto& d : e.diagnostics) std::cerr << "config: " << d << "\n";
        return kConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    } catch (const UnreachableSparsity& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        // Remaining runtime errors come from file access (open/read/write).
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    }
    return kOk;
}
