#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dprune/experiment.hpp"
#include "dprune/report.hpp"

using namespace dprune;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(DPRUNE_SOURCE_DIR) / "configs";

json smoke_doc() {
    std::ifstream f(kConfigs / "smoke.json");
    return json::parse(f);
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "dprune_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

bool any_contains(const std::vector<std::string>& diags, const std::string& needle) {
    for (const auto& d : diags)
        if (d.find(needle) != std::string::npos) return true;
    return false;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

// Small, quick variant of the smoke profile.
ExperimentConfig quick_config(const fs::path& out, bool timings) {
    auto doc = smoke_doc();
    doc["seeds"] = {0, 1};
    doc["dataset"]["per_class"] = 40;
    doc["dataset"]["test_per_class"] = 20;
    doc["prune"]["mask_train_epochs"] = 4;
    doc["prune"]["finetune_epochs"] = 4;
    doc["train_mask"]["milestones"] = {3};
    doc["train_finetune"]["milestones"] = {3};
    doc["report"]["timings"] = timings;
    doc["report"]["lmc_points"] = 5;
    doc["output_dir"] = out.string();
    return parse_config(doc, kConfigs);
}

struct Cli {
    int code;
    std::string out;
};

Cli run_cli(const std::string& args) {
    const auto outFile = fs::temp_directory_path() / "dprune_test_cli" / "stdout.txt";
    fs::create_directories(outFile.parent_path());
    const std::string cmd = std::string("\"") + DPRUNE_CLI_PATH + "\" " + args + " > \"" + outFile.string() + "\" 2>/dev/null";
    const int raw = std::system(cmd.c_str());
    const int code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return {code, slurp(outFile)};
}

fs::path write_config(const std::string& name, const json& doc) {
    const auto dir = fs::temp_directory_path() / "dprune_test_cli";
    fs::create_directories(dir);
    const auto p = dir / name;
    std::ofstream(p) << doc.dump(2);
    return p;
}

}  // namespace

TEST_CASE("validation reports every problem") {
    auto doc = smoke_doc();
    CHECK(validate_config_json(doc, kConfigs).empty());

    doc["prune"]["amount"] = 1.5;
    auto diags = validate_config_json(doc, kConfigs);
    CHECK(any_contains(diags, "amount must be in (0,1)"));

    doc["prune"]["rewind_epoch"] = 25;
    doc["prune"]["desired_sparsity"] = 0.0;
    doc["bogus_key"] = 1;
    diags = validate_config_json(doc, kConfigs);
    CHECK(diags.size() >= 4);
    CHECK(any_contains(diags, "rewind_epoch"));
    CHECK(any_contains(diags, "desired_sparsity"));
    CHECK(any_contains(diags, "bogus_key"));

    auto missing = smoke_doc();
    missing["dataset"] = {{"source", "idx"}, {"train_images", "nope.idx"}, {"train_labels", "nope.idx"},
                          {"test_images", "nope.idx"}, {"test_labels", "nope.idx"}};
    CHECK_FALSE(validate_config_json(missing, kConfigs).empty());
}

TEST_CASE("shipped profiles are valid") {
    for (const auto* name : {"smoke.json", "digits_convnet.json", "long_schedule.json"}) {
        CAPTURE(name);
        CHECK(validate_config(kConfigs / name).empty());
        CHECK_NOTHROW(load_config(kConfigs / name));
    }
    CHECK_THROWS(validate_config(kConfigs / "does-not-exist.json"));
    CHECK_THROWS_AS(parse_config(json{{"prune", {{"amount", 2.0}}}}, kConfigs), ConfigError);
}

TEST_CASE("tables are byte-identical across runs and worker counts") {
    auto a = quick_config(scratch_dir("det_a"), false);
    auto b = quick_config(scratch_dir("det_b"), false);
    b.jobs = 3;
    const auto ra = run_experiment(a);
    run_experiment(b);
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(a.outputDir)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), a.outputDir);
        if (rel == "summary.json") continue;
        CAPTURE(rel.string());
        CHECK(slurp(entry.path()) == slurp(b.outputDir / rel));
        ++compared;
    }
    CHECK(compared >= 10);
    CHECK(fs::exists(a.outputDir / "lmc_imp.csv"));
    CHECK(fs::exists(a.outputDir / "hist_imp_fc1.weight.csv"));
    CHECK(ra.summary["timings_recorded"] == false);
}

TEST_CASE("summary is recomputable from iterations.csv") {
    const auto cfg = quick_config(scratch_dir("summary"), true);
    const auto bundle = run_experiment(cfg);
    const auto rebuilt = rebuild_summary(cfg.outputDir);
    CHECK(rebuilt["methods"] == bundle.summary["methods"]);
    CHECK(rebuilt.contains("lmc"));

    const auto& methods = bundle.summary["methods"];
    for (const auto* m : {"imp", "distilled", "random"}) {
        REQUIRE(methods.contains(m));
        const auto& levels = methods[m]["levels"];
        CHECK(levels[0]["iteration"] == 0);
        CHECK(levels[0]["sparsity"] == 0.0);
        CHECK(levels.back()["sparsity"].get<double>() >= 0.5);
    }
    // No training happens while a random mask is drawn.
    for (const auto* seed : {"0", "1"}) {
        const double rnd = methods["random"]["time_to_mask_seconds"][seed]["excluding_final_retrain"].get<double>();
        const double imp = methods["imp"]["time_to_mask_seconds"][seed]["excluding_final_retrain"].get<double>();
        CHECK(rnd < imp);
    }
}

TEST_CASE("smoke profile finishes within a minute") {
    auto cfg = load_config(kConfigs / "smoke.json");
    cfg.outputDir = scratch_dir("smoke");
    const auto t0 = std::chrono::steady_clock::now();
    run_experiment(cfg);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(seconds < 60.0);
}

TEST_CASE("mask files") {
    LayerMap layers{{"w", 0, 9, ParamKind::weight, {3, 3}}, {"b", 9, 2, ParamKind::bias, {2}}};
    SparsityMask m{{1, 0, 1, 1, 0, 0, 0, 0, 1, 1, 1}, layers};
    const auto encoded = encode_mask_bits(m);
    REQUIRE(encoded.size() == 18);
    CHECK(std::vector<std::uint8_t>(encoded.begin() + 16, encoded.end()) == std::vector<std::uint8_t>{0x0D, 0x07});
    CHECK(decode_mask_bits(encoded) == m.bits);
    const auto dir = scratch_dir("mask");
    const auto path = dir / "m.mask";
    save_mask(m, path, {"imp", 3});
    CHECK(load_mask(path) == m);
    const auto bytes = read_file(path);
    CHECK(bytes == encoded);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MASK");

    const auto side = json::parse(slurp(dir / "m.mask.json"));
    CHECK(side["method"] == "imp");
    CHECK(side["seed"] == 3);
    CHECK(side["sparsity"].get<double>() == doctest::Approx(5.0 / 9.0));
    CHECK(layer_map_from_json(side["layers"]) == layers);

    save_mask(load_mask(path), dir / "again.mask", {"imp", 3});
    CHECK(read_file(dir / "again.mask") == bytes);

    auto bad = bytes;
    bad[0] = 'X';
    write_file_atomic(path, bad);
    CHECK_THROWS_AS(load_mask(path), FormatError);
    bad = bytes;
    bad.back() |= 0x80;  // padding bits must be zero
    write_file_atomic(path, bad);
    CHECK_THROWS_AS(load_mask(path), FormatError);
}

TEST_CASE("number formatting and csv") {
    CHECK(format_number(0.0) == "0");
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(1.0 / 3.0) == "0.3333333333");
    CHECK(format_number(-2.0) == "-2");
    CsvTable t{{"a", "b"}, {{"1", "x"}, {"2.5", ""}}};
    CHECK(t.to_string() == "a,b\n1,x\n2.5,\n");
    const auto back = CsvTable::parse(t.to_string());
    CHECK(back.header == t.header);
    CHECK(back.rows == t.rows);
    CHECK(back.column("b") == 1);
}

TEST_CASE("command-line exit codes") {
    CHECK(run_cli("validate --config \"" + (kConfigs / "smoke.json").string() + "\"").code == 0);

    auto bad = smoke_doc();
    bad["prune"]["amount"] = 1.5;
    const auto badPath = write_config("bad.json", bad);
    const auto v = run_cli("validate --config \"" + badPath.string() + "\"");
    CHECK(v.code == 2);
    CHECK(json::parse(v.out)["valid"] == false);
    CHECK(run_cli("prune --config \"" + badPath.string() + "\"").code == 2);
    CHECK(run_cli("prune --config \"" + (kConfigs / "smoke.json").string() + "\" --method bogus").code == 2);
    CHECK(run_cli("prune --config /nonexistent/config.json").code == 4);

    auto capped = smoke_doc();
    capped["prune"]["max_iterations"] = 1;
    capped["report"]["lmc"] = false;
    capped["output_dir"] = scratch_dir("capped").string();
    CHECK(run_cli("prune --config \"" + write_config("capped.json", capped).string() + "\" --method imp").code == 3);

    auto ok = smoke_doc();
    ok["prune"]["mask_train_epochs"] = 2;
    ok["prune"]["finetune_epochs"] = 2;
    ok["train_mask"]["milestones"] = json::array();
    ok["train_finetune"]["milestones"] = json::array();
    ok["report"]["lmc"] = false;
    ok["output_dir"] = scratch_dir("ok").string();
    const auto okPath = write_config("ok.json", ok).string();
    const auto run = run_cli("prune --config \"" + okPath + "\" --method random --seed 4");
    CHECK(run.code == 0);
    CHECK(std::count(run.out.begin(), run.out.end(), '\n') == 1);
    CHECK(json::parse(run.out)["command"] == "prune");
    CHECK(fs::exists(fs::path(ok["output_dir"].get<std::string>()) / "masks" / "random_seed4.mask"));
    CHECK(run_cli("report --out \"" + ok["output_dir"].get<std::string>() + "\"").code == 0);
    CHECK(run_cli("distill --config \"" + okPath + "\"").code == 0);
    CHECK(fs::exists(fs::path(ok["output_dir"].get<std::string>()) / "distilled.dstl"));
}
