#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprune/analysis.hpp"
#include "dprune/engine.hpp"
#include "dprune/mask.hpp"

namespace dprune {

constexpr int kReportSchemaVersion = 1;

// Locale-independent shortest-roundtrip-ish formatting, 10 significant
// digits, '.' separator.
std::string format_number(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string to_string() const;  // LF line endings
    static CsvTable parse(const std::string& text);
    std::size_t column(const std::string& name) const;
};

// ---- MASK files ----------------------------------------------------------
// Binary: "MASK", u32 version=1, u64 length, ceil(length/8) bytes of bits
// packed LSB-first, all little-endian. Sidecar `<path>.json` carries the
// layer map, sparsity, method and seed.

struct MaskMetadata {
    std::string method;
    std::uint64_t seed = 0;
};

void save_mask(const SparsityMask& mask, const std::filesystem::path& path, const MaskMetadata& meta);
SparsityMask load_mask(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_mask_bits(const SparsityMask& mask);
std::vector<std::uint8_t> decode_mask_bits(std::span<const std::uint8_t> bytes);

nlohmann::json layer_map_to_json(const LayerMap& layers);
LayerMap layer_map_from_json(const nlohmann::json& j);

// ---- tables --------------------------------------------------------------

inline const std::vector<std::string>& iterations_header() {
    static const std::vector<std::string> h{"method",           "seed",           "iteration", "sparsity", "test_accuracy",
                                            "mask_phase_seconds", "finetune_seconds"};
    return h;
}

struct DenseRow {
    double accuracy = 0.0;
    double seconds = 0.0;
};

// Rows for one run. A dense baseline becomes iteration 0 at sparsity 0.
// Iterations that were not finetuned leave test_accuracy and
// finetune_seconds empty. With `timings` false every *_seconds cell is 0.
void append_iteration_rows(CsvTable& table, const RunRecord& record, const std::optional<DenseRow>& dense,
                           bool timings);

CsvTable lmc_table(const std::vector<std::pair<InterpolationCurve, double>>& curvesWithSparsity);

CsvTable histogram_table(const WeightHistogram& h);

// Per-method accuracy statistics by iteration plus per-seed time-to-mask,
// computed only from an iterations.csv table.
nlohmann::json summarize_iterations(const CsvTable& iterations);

}  // namespace dprune
