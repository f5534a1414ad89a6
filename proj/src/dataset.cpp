#include "dprune/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include <unistd.h>

#include "dprune/rng.hpp"

namespace dprune {

// ---- LabeledDataset ------------------------------------------------------

std::vector<std::size_t> LabeledDataset::class_counts() const {
    std::vector<std::size_t> counts(numClasses, 0);
    for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
    return counts;
}

void LabeledDataset::validate() const {
    if (labels.empty()) throw std::invalid_argument("dataset is empty");
    if (examples.rank() < 2 || examples.dim(0) != labels.size())
        throw std::invalid_argument("dataset example count does not match label count");
    if (numClasses < 1) throw std::invalid_argument("dataset needs at least one class");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= numClasses)
            throw std::invalid_argument("label " + std::to_string(l) + " outside [0," + std::to_string(numClasses) +
                                        ")");
}

Tensor LabeledDataset::gather(std::span<const std::size_t> indices) const {
    const std::size_t row = examples.row_size();
    std::vector<std::size_t> shape = examples.shape;
    shape[0] = indices.size();
    std::vector<double> out(indices.size() * row);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto src = examples.row(indices[i]);
        std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(i * row));
    }
    return Tensor(std::move(shape), std::move(out));
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.examples = gather(indices);
    out.numClasses = numClasses;
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(labels.at(i));
    return out;
}

LabeledDataset LabeledDataset::head(std::size_t n) const {
    std::vector<std::size_t> idx(std::min(n, size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return subset(idx);
}

const char* to_string(Provenance p) {
    switch (p) {
    case Provenance::random: return "random";
    case Provenance::classMean: return "classMean";
    case Provenance::kmeansHerding: return "kmeansHerding";
    case Provenance::external: return "external";
    }
    return "unknown";
}

Provenance provenance_from_string(const std::string& s) {
    for (auto p : {Provenance::random, Provenance::classMean, Provenance::kmeansHerding, Provenance::external})
        if (s == to_string(p)) return p;
    throw std::invalid_argument("unknown provenance '" + s + "'");
}

// ---- byte helpers --------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    std::span<const std::uint8_t> take(std::size_t n) {
        if (bytes_.size() - pos_ < n) throw FormatError(what_ + ": truncated file");
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint32_t u32_be() {
        auto s = take(4);
        return (std::uint32_t{s[0]} << 24) | (std::uint32_t{s[1]} << 16) | (std::uint32_t{s[2]} << 8) | s[3];
    }
    std::uint32_t u32_le() {
        auto s = take(4);
        return (std::uint32_t{s[3]} << 24) | (std::uint32_t{s[2]} << 16) | (std::uint32_t{s[1]} << 8) | s[0];
    }
    std::uint16_t u16_le() {
        auto s = take(2);
        return static_cast<std::uint16_t>(s[0] | (s[1] << 8));
    }
    std::uint8_t u8() { return take(1)[0]; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string what_;
};

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}
void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument(std::string(what) + " too large");
    return static_cast<std::uint32_t>(v);
}

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

}  // namespace

// ---- IDX -----------------------------------------------------------------

LabeledDataset load_idx(const std::filesystem::path& imagesPath, const std::filesystem::path& labelsPath) {
    const auto imageBytes = read_file(imagesPath);
    const auto labelBytes = read_file(labelsPath);

    Reader img(imageBytes, imagesPath.string());
    if (img.u32_be() != kIdxImages) throw FormatError(imagesPath.string() + ": bad magic for IDX images");
    const std::size_t n = img.u32_be(), rows = img.u32_be(), cols = img.u32_be();
    if (n == 0 || rows == 0 || cols == 0) throw FormatError(imagesPath.string() + ": zero dimension");
    auto pixels = img.take(n * rows * cols);
    if (!img.done()) throw FormatError(imagesPath.string() + ": trailing bytes");

    Reader lab(labelBytes, labelsPath.string());
    if (lab.u32_be() != kIdxLabels) throw FormatError(labelsPath.string() + ": bad magic for IDX labels");
    const std::size_t nl = lab.u32_be();
    if (nl != n)
        throw FormatError("count mismatch: " + std::to_string(n) + " images vs " + std::to_string(nl) + " labels");
    auto labelRaw = lab.take(nl);
    if (!lab.done()) throw FormatError(labelsPath.string() + ": trailing bytes");

    LabeledDataset d;
    std::vector<double> values(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) values[i] = pixels[i] / 255.0;
    d.examples = Tensor({n, 1, rows, cols}, std::move(values));
    d.labels.assign(labelRaw.begin(), labelRaw.end());
    d.numClasses = static_cast<std::size_t>(*std::max_element(d.labels.begin(), d.labels.end())) + 1;
    return d;
}

void write_idx(const LabeledDataset& data, const std::filesystem::path& imagesPath,
               const std::filesystem::path& labelsPath) {
    data.validate();
    const auto& shape = data.examples.shape;
    std::size_t rows, cols;
    if (shape.size() == 3) {
        rows = shape[1];
        cols = shape[2];
    } else if (shape.size() == 4 && shape[1] == 1) {
        rows = shape[2];
        cols = shape[3];
    } else {
        throw std::invalid_argument("write_idx needs (N,rows,cols) or (N,1,rows,cols) examples");
    }
    std::vector<std::uint8_t> img;
    img.reserve(16 + data.examples.size());
    put_u32_be(img, kIdxImages);
    put_u32_be(img, checked_u32(data.size(), "count"));
    put_u32_be(img, checked_u32(rows, "rows"));
    put_u32_be(img, checked_u32(cols, "cols"));
    for (double v : data.examples.data) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("IDX pixel values must lie in [0,1]");
        img.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
    std::vector<std::uint8_t> lab;
    put_u32_be(lab, kIdxLabels);
    put_u32_be(lab, checked_u32(data.size(), "count"));
    for (int l : data.labels) {
        if (l > 255) throw std::invalid_argument("IDX labels must fit in a byte");
        lab.push_back(static_cast<std::uint8_t>(l));
    }
    write_file_atomic(imagesPath, img);
    write_file_atomic(labelsPath, lab);
}

// ---- synthetic -----------------------------------------------------------

SynthKind synth_kind_from_string(const std::string& s) {
    if (s == "gaussianBlobs") return SynthKind::gaussianBlobs;
    if (s == "spirals") return SynthKind::spirals;
    throw std::invalid_argument("unknown synthetic dataset '" + s + "'");
}

LabeledDataset synth_dataset(SynthKind kind, std::size_t numClasses, std::size_t perClass, double noise,
                             std::uint64_t seed) {
    if (perClass < 1) throw std::invalid_argument("perClass must be at least 1");
    if (numClasses < 1) throw std::invalid_argument("numClasses must be at least 1");
    Rng rng(seed);
    const std::size_t n = numClasses * perClass;
    std::vector<double> xs;
    xs.reserve(2 * n);
    LabeledDataset d;
    d.numClasses = numClasses;
    constexpr double radius = 3.0;
    for (std::size_t c = 0; c < numClasses; ++c) {
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(numClasses);
        for (std::size_t i = 0; i < perClass; ++i) {
            double x, y;
            if (kind == SynthKind::gaussianBlobs) {
                x = radius * std::cos(phase);
                y = radius * std::sin(phase);
            } else {
                const double t = static_cast<double>(i + 1) / static_cast<double>(perClass);
                const double angle = phase + 1.75 * std::numbers::pi * t;
                x = radius * t * std::cos(angle);
                y = radius * t * std::sin(angle);
            }
            if (noise > 0.0) {
                x += noise * rng.normal();
                y += noise * rng.normal();
            }
            xs.push_back(x);
            xs.push_back(y);
            d.labels.push_back(static_cast<int>(c));
        }
    }
    d.examples = Tensor({n, 2}, std::move(xs));
    return d;
}

// ---- distillers ----------------------------------------------------------

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& data) {
    std::vector<std::vector<std::size_t>> byClass(data.numClasses);
    for (std::size_t i = 0; i < data.size(); ++i) byClass[static_cast<std::size_t>(data.labels[i])].push_back(i);
    return byClass;
}

DistilledDataset make_distilled(const LabeledDataset& src, std::vector<double> values, std::size_t ipc,
                                Provenance provenance) {
    DistilledDataset d;
    auto shape = src.examples.shape;
    shape[0] = ipc * src.numClasses;
    d.examples = Tensor(std::move(shape), std::move(values));
    d.numClasses = src.numClasses;
    for (std::size_t c = 0; c < src.numClasses; ++c)
        for (std::size_t k = 0; k < ipc; ++k) d.labels.push_back(static_cast<int>(c));
    d.ipc = ipc;
    d.provenance = provenance;
    return d;
}

// Mean of rows in index order; shared by the class-mean and k-means paths so
// k=1 reproduces the class mean bit-for-bit.
void mean_of_rows(const LabeledDataset& data, std::span<const std::size_t> rows, std::span<double> out) {
    // Running mean: identical rows come back exactly.
    std::fill(out.begin(), out.end(), 0.0);
    std::size_t k = 0;
    for (auto r : rows) {
        auto x = data.examples.row(r);
        const auto w = static_cast<double>(++k);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += (x[j] - out[j]) / w;
    }
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

}  // namespace

DistilledDataset distill_random(const LabeledDataset& data, std::size_t ipc, std::uint64_t seed) {
    data.validate();
    if (ipc == 0) throw std::invalid_argument("ipc must be positive");
    auto byClass = indices_by_class(data);
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < byClass.size(); ++c) {
        auto& idx = byClass[c];
        if (ipc > idx.size())
            throw std::invalid_argument("ipc " + std::to_string(ipc) + " exceeds size " + std::to_string(idx.size()) +
                                        " of class " + std::to_string(c));
        Rng rng{seed, c};
        rng.shuffle(idx.begin(), idx.end());
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(ipc));
    }
    const auto picked = data.gather(chosen);
    return make_distilled(data, picked.data, ipc, Provenance::random);
}

DistilledDataset distill_class_mean(const LabeledDataset& data) {
    data.validate();
    const auto byClass = indices_by_class(data);
    const std::size_t d = data.examples.row_size();
    std::vector<double> values(byClass.size() * d);
    for (std::size_t c = 0; c < byClass.size(); ++c) {
        if (byClass[c].empty()) throw std::invalid_argument("class " + std::to_string(c) + " has no examples");
        mean_of_rows(data, byClass[c], std::span<double>(values).subspan(c * d, d));
    }
    return make_distilled(data, std::move(values), 1, Provenance::classMean);
}

DistilledDataset distill_kmeans_herding(const LabeledDataset& data, std::size_t ipc, std::size_t iterations,
                                        std::uint64_t seed, KMeansTrace* trace) {
    data.validate();
    if (ipc == 0) throw std::invalid_argument("ipc must be positive");
    if (iterations == 0) throw std::invalid_argument("k-means needs at least one iteration");
    const auto byClass = indices_by_class(data);
    const std::size_t d = data.examples.row_size();
    std::vector<double> values(byClass.size() * ipc * d);
    if (trace) trace->objective.assign(byClass.size(), {});

    for (std::size_t c = 0; c < byClass.size(); ++c) {
        const auto& pts = byClass[c];
        if (ipc > pts.size())
            throw std::invalid_argument("ipc " + std::to_string(ipc) + " exceeds size " + std::to_string(pts.size()) +
                                        " of class " + std::to_string(c));
        std::span<double> cents(values.data() + c * ipc * d, ipc * d);
        auto centroid = [&](std::size_t k) { return cents.subspan(k * d, d); };
        auto point = [&](std::size_t i) { return data.examples.row(pts[i]); };

        // k-means++ seeding.
        Rng rng{seed, c};
        std::vector<double> nearest(pts.size(), std::numeric_limits<double>::infinity());
        std::size_t first = rng.below(pts.size());
        std::copy_n(point(first).begin(), d, centroid(0).begin());
        for (std::size_t k = 1; k < ipc; ++k) {
            double total = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                nearest[i] = std::min(nearest[i], sq_dist(point(i), centroid(k - 1)));
                total += nearest[i];
            }
            std::size_t pick = 0;
            if (total > 0.0) {
                const double target = rng.uniform01() * total;
                double acc = 0.0;
                pick = pts.size() - 1;
                for (std::size_t i = 0; i < pts.size(); ++i) {
                    acc += nearest[i];
                    if (nearest[i] > 0.0 && acc > target) {
                        pick = i;
                        break;
                    }
                }
                while (nearest[pick] == 0.0) --pick;  // never re-pick a seeded point
            }
            std::copy_n(point(pick).begin(), d, centroid(k).begin());
        }

        // Lloyd iterations with a fixed budget.
        std::vector<std::size_t> assign(pts.size());
        std::vector<double> dist(pts.size());
        std::vector<std::vector<std::size_t>> members(ipc);
        for (std::size_t it = 0; it < iterations; ++it) {
            for (auto& m : members) m.clear();
            for (std::size_t i = 0; i < pts.size(); ++i) {
                std::size_t best = 0;
                double bestD = sq_dist(point(i), centroid(0));
                for (std::size_t k = 1; k < ipc; ++k) {
                    const double dk = sq_dist(point(i), centroid(k));
                    if (dk < bestD) {
                        bestD = dk;
                        best = k;
                    }
                }
                assign[i] = best;
                members[best].push_back(pts[i]);
            }
            for (std::size_t k = 0; k < ipc; ++k)
                if (!members[k].empty()) mean_of_rows(data, members[k], centroid(k));
            for (std::size_t i = 0; i < pts.size(); ++i) dist[i] = sq_dist(point(i), centroid(assign[i]));
            // Empty cluster: move it onto the point farthest from its centroid.
            for (std::size_t k = 0; k < ipc; ++k) {
                if (!members[k].empty()) continue;
                std::size_t far = 0;
                for (std::size_t i = 1; i < pts.size(); ++i)
                    if (dist[i] > dist[far]) far = i;
                std::copy_n(point(far).begin(), d, centroid(k).begin());
                assign[far] = k;
                dist[far] = 0.0;
                members[k].push_back(pts[far]);
            }
            if (trace) trace->objective[c].push_back(std::accumulate(dist.begin(), dist.end(), 0.0));
        }
    }
    return make_distilled(data, std::move(values), ipc, Provenance::kmeansHerding);
}

// ---- DSTL ----------------------------------------------------------------

namespace {
constexpr std::uint32_t kDstlVersion = 1;

void check_class_major(const LabeledDataset& d, std::size_t ipc, const std::string& what) {
    if (d.size() != ipc * d.numClasses) throw FormatError(what + ": example count is not ipc x numClasses");
    for (std::size_t i = 0; i < d.size(); ++i)
        if (static_cast<std::size_t>(d.labels[i]) != i / ipc)
            throw FormatError(what + ": labels must be class-major ascending");
}
}  // namespace

void save_distilled(const DistilledDataset& data, const std::filesystem::path& path) {
    data.validate();
    if (data.ipc == 0) throw std::invalid_argument("distilled dataset has ipc 0");
    check_class_major(data, data.ipc, path.string());
    if (data.numClasses > 65536) throw std::invalid_argument("too many classes for u16 labels");

    std::vector<std::uint8_t> out{'D', 'S', 'T', 'L'};
    put_u32_le(out, kDstlVersion);
    put_u32_le(out, checked_u32(data.numClasses, "numClasses"));
    put_u32_le(out, checked_u32(data.ipc, "ipc"));
    const auto dims = data.example_shape();
    put_u32_le(out, checked_u32(dims.size(), "rank"));
    for (auto dim : dims) put_u32_le(out, checked_u32(dim, "dimension"));
    out.push_back(static_cast<std::uint8_t>(data.provenance));
    for (double v : data.examples.data) put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    for (int l : data.labels) {
        out.push_back(static_cast<std::uint8_t>(l & 0xff));
        out.push_back(static_cast<std::uint8_t>((l >> 8) & 0xff));
    }
    write_file_atomic(path, out);
}

DistilledDataset load_distilled(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    const std::string what = path.string();
    Reader r(bytes, what);
    auto magic = r.take(4);
    if (!std::equal(magic.begin(), magic.end(), "DSTL")) throw FormatError(what + ": bad magic");
    const auto version = r.u32_le();
    if (version != kDstlVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
    DistilledDataset d;
    d.numClasses = r.u32_le();
    d.ipc = r.u32_le();
    const std::size_t rank = r.u32_le();
    if (d.numClasses == 0 || d.ipc == 0 || rank == 0 || rank > 8) throw FormatError(what + ": invalid header");
    std::vector<std::size_t> shape{d.ipc * d.numClasses};
    for (std::size_t i = 0; i < rank; ++i) {
        shape.push_back(r.u32_le());
        if (shape.back() == 0) throw FormatError(what + ": zero dimension");
    }
    const auto code = r.u8();
    if (code > static_cast<std::uint8_t>(Provenance::external))
        throw FormatError(what + ": unknown provenance code " + std::to_string(code));
    d.provenance = static_cast<Provenance>(code);
    const std::size_t count = shape_product(shape);
    std::vector<double> values(count);
    for (auto& v : values) {
        v = static_cast<double>(std::bit_cast<float>(r.u32_le()));
        if (!std::isfinite(v)) throw FormatError(what + ": non-finite payload value");
    }
    d.examples = Tensor(std::move(shape), std::move(values));
    d.labels.resize(d.ipc * d.numClasses);
    for (auto& l : d.labels) l = r.u16_le();
    if (!r.done()) throw FormatError(what + ": trailing bytes");
    check_class_major(d, d.ipc, what);
    return d;
}

}  // namespace dprune
