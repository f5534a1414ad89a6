#include "dprune/report.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "dprune/pruning.hpp"

namespace dprune {

using nlohmann::json;

std::string format_number(double v) {
    if (!std::isfinite(v)) throw std::domain_error("refusing to format a non-finite number");
    if (v == 0.0) return "0";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 10);
    return std::string(buf, res.ptr);
}

std::string CsvTable::to_string() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
}

CsvTable CsvTable::parse(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string lineText;
    bool first = true;
    while (std::getline(in, lineText)) {
        if (lineText.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = lineText.find(',', start);
            cells.push_back(lineText.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != t.header.size()) throw FormatError("csv row has wrong number of cells");
            t.rows.push_back(std::move(cells));
        }
    }
    if (first) throw FormatError("csv has no header");
    return t;
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw FormatError("csv has no column '" + name + "'");
}

// ---- masks ---------------------------------------------------------------

namespace {
constexpr std::uint32_t kMaskVersion = 1;
}

std::vector<std::uint8_t> encode_mask_bits(const SparsityMask& mask) {
    std::vector<std::uint8_t> out{'M', 'A', 'S', 'K'};
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(kMaskVersion >> s));
    const std::uint64_t n = mask.size();
    for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>(n >> s));
    std::vector<std::uint8_t> packed((n + 7) / 8, 0);
    for (std::size_t i = 0; i < n; ++i)
        if (mask.bits[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    out.insert(out.end(), packed.begin(), packed.end());
    return out;
}

std::vector<std::uint8_t> decode_mask_bits(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16) throw FormatError("mask file truncated");
    if (!std::equal(bytes.begin(), bytes.begin() + 4, "MASK")) throw FormatError("mask file has bad magic");
    std::uint32_t version = 0;
    for (int i = 0; i < 4; ++i) version |= std::uint32_t{bytes[4 + i]} << (8 * i);
    if (version != kMaskVersion) throw FormatError("unsupported mask version " + std::to_string(version));
    std::uint64_t n = 0;
    for (int i = 0; i < 8; ++i) n |= std::uint64_t{bytes[8 + i]} << (8 * i);
    if (n > (bytes.size() - 16) * 8 || bytes.size() - 16 != (n + 7) / 8)
        throw FormatError("mask payload length does not match header");
    std::vector<std::uint8_t> bits(n);
    for (std::size_t i = 0; i < n; ++i) bits[i] = (bytes[16 + i / 8] >> (i % 8)) & 1u;
    for (std::size_t i = n; i < ((n + 7) / 8) * 8; ++i)
        if ((bytes[16 + i / 8] >> (i % 8)) & 1u) throw FormatError("mask padding bits must be zero");
    return bits;
}

json layer_map_to_json(const LayerMap& layers) {
    json arr = json::array();
    for (const auto& s : layers)
        arr.push_back({{"name", s.name},
                       {"offset", s.offset},
                       {"length", s.length},
                       {"kind", to_string(s.kind)},
                       {"shape", s.shape}});
    return arr;
}

LayerMap layer_map_from_json(const json& j) {
    LayerMap layers;
    for (const auto& e : j)
        layers.push_back(LayerSlice{e.at("name").get<std::string>(), e.at("offset").get<std::size_t>(),
                                    e.at("length").get<std::size_t>(),
                                    param_kind_from_string(e.at("kind").get<std::string>()),
                                    e.value("shape", std::vector<std::size_t>{})});
    validate_layer_map(layers, layer_map_size(layers));
    return layers;
}

void save_mask(const SparsityMask& mask, const std::filesystem::path& path, const MaskMetadata& meta) {
    write_file_atomic(path, encode_mask_bits(mask));
    json side{{"schema_version", kReportSchemaVersion},
              {"length", mask.size()},
              {"layers", layer_map_to_json(mask.layers)},
              {"sparsity", sparsity(mask)},
              {"whole_vector_sparsity", whole_vector_sparsity(mask)},
              {"method", meta.method},
              {"seed", meta.seed}};
    auto sidecar = path;
    sidecar += ".json";
    write_file_atomic(sidecar, side.dump(2) + "\n");
}

SparsityMask load_mask(const std::filesystem::path& path) {
    SparsityMask m;
    m.bits = decode_mask_bits(read_file(path));
    auto sidecar = path;
    sidecar += ".json";
    const auto text = read_file(sidecar);
    json side;
    try {
        side = json::parse(text.begin(), text.end());
        m.layers = layer_map_from_json(side.at("layers"));
    } catch (const json::exception& e) {
        throw FormatError(sidecar.string() + ": " + e.what());
    }
    validate_layer_map(m.layers, m.size());
    return m;
}

// ---- tables --------------------------------------------------------------

void append_iteration_rows(CsvTable& table, const RunRecord& record, const std::optional<DenseRow>& dense,
                           bool timings) {
    if (table.header.empty()) table.header = iterations_header();
    const std::string method = to_string(record.method);
    const std::string seed = std::to_string(record.seed);
    auto secs = [&](double s) { return timings ? format_number(s) : std::string("0"); };
    if (dense)
        table.rows.push_back({method, seed, "0", "0", format_number(dense->accuracy), "0", secs(dense->seconds)});
    for (const auto& it : record.perIteration)
        table.rows.push_back({method, seed, std::to_string(it.iteration), format_number(it.sparsity),
                              it.finetuneAccuracy ? format_number(*it.finetuneAccuracy) : "",
                              secs(it.maskPhaseSeconds), it.finetuneSeconds ? secs(*it.finetuneSeconds) : ""});
}

CsvTable lmc_table(const std::vector<std::pair<InterpolationCurve, double>>& curves) {
    CsvTable t;
    t.header = {"alpha", "accuracy", "loss", "mask_sparsity", "seed_a", "seed_b"};
    for (const auto& [c, sp] : curves)
        for (std::size_t i = 0; i < c.size(); ++i)
            t.rows.push_back({format_number(c.alphas[i]), format_number(c.accuracies[i]), format_number(c.losses[i]),
                              format_number(sp), std::to_string(c.seedPair.first),
                              std::to_string(c.seedPair.second)});
    return t;
}

CsvTable histogram_table(const WeightHistogram& h) {
    CsvTable t;
    t.header = {"bin_left", "bin_right", "count", "sparsity"};
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        t.rows.push_back({format_number(h.binEdges[b]), format_number(h.binEdges[b + 1]), std::to_string(h.counts[b]),
                          format_number(h.sparsity)});
    return t;
}

namespace {
double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("not a number: '" + s + "'");
    return v;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Sample standard deviation; 0 for a single value.
double std_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}
}  // namespace

json summarize_iterations(const CsvTable& t) {
    const auto cMethod = t.column("method"), cSeed = t.column("seed"), cIter = t.column("iteration"),
               cSp = t.column("sparsity"), cAcc = t.column("test_accuracy"), cMask = t.column("mask_phase_seconds"),
               cFt = t.column("finetune_seconds");

    struct Level {
        std::vector<double> sparsity;
        std::vector<std::pair<std::uint64_t, double>> acc;  // (seed, accuracy)
    };
    struct SeedTiming {
        double mask = 0.0;
        std::size_t lastIter = 0;
        double lastFinetune = 0.0;
        bool lastHasFinetune = false;
    };
    std::map<std::string, std::map<std::size_t, Level>> levels;
    std::map<std::string, std::map<std::uint64_t, SeedTiming>> timing;
    std::vector<std::string> methodOrder;

    for (const auto& r : t.rows) {
        const auto& method = r[cMethod];
        if (!levels.contains(method)) methodOrder.push_back(method);
        const auto seed = static_cast<std::uint64_t>(std::stoull(r[cSeed]));
        const auto iter = static_cast<std::size_t>(std::stoull(r[cIter]));
        auto& lvl = levels[method][iter];
        lvl.sparsity.push_back(parse_double(r[cSp]));
        if (!r[cAcc].empty()) lvl.acc.emplace_back(seed, parse_double(r[cAcc]));
        if (iter == 0) continue;
        auto& st = timing[method][seed];
        st.mask += parse_double(r[cMask]);
        if (iter >= st.lastIter) {
            st.lastIter = iter;
            st.lastHasFinetune = !r[cFt].empty();
            st.lastFinetune = st.lastHasFinetune ? parse_double(r[cFt]) : 0.0;
        }
    }

    json methods = json::object();
    for (const auto& method : methodOrder) {
        json lv = json::array();
        for (const auto& [iter, l] : levels[method]) {
            json e{{"iteration", iter}, {"sparsity", mean_of(l.sparsity)}, {"seeds", l.acc.size()}};
            if (!l.acc.empty()) {
                std::vector<double> accs;
                auto best = l.acc.front();
                for (const auto& p : l.acc) {
                    accs.push_back(p.second);
                    if (p.second > best.second || (p.second == best.second && p.first < best.first)) best = p;
                }
                e["mean_accuracy"] = mean_of(accs);
                e["std_accuracy"] = std_of(accs);
                e["best_seed"] = best.first;
                e["best_accuracy"] = best.second;
            }
            lv.push_back(std::move(e));
        }
        json ttm = json::object();
        for (const auto& [seed, st] : timing[method])
            ttm[std::to_string(seed)] = {{"excluding_final_retrain", st.mask},
                                         {"including_final_retrain", st.mask + st.lastFinetune}};
        methods[method] = {{"levels", std::move(lv)}, {"time_to_mask_seconds", std::move(ttm)}};
    }
    return json{{"schema_version", kReportSchemaVersion}, {"methods", std::move(methods)}};
}

}  // namespace dprune
