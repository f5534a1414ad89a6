#include "dprune/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace dprune {

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(shape_product(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_product(shape))
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_string(shape));
}

std::size_t Tensor::row_size() const {
    if (shape.empty()) return 1;
    return shape_product(std::span<const std::size_t>(shape).subspan(1));
}

std::size_t shape_product(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        if (d == 0) throw std::invalid_argument("tensor extents must be positive");
        n *= d;
    }
    return n;
}

std::string shape_string(std::span<const std::size_t> shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

void check_finite(std::span<const double> values, const std::string& what) {
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            throw std::domain_error(what + ": non-finite value at index " + std::to_string(i));
}

const char* to_string(ParamKind kind) { return kind == ParamKind::weight ? "weight" : "bias"; }

ParamKind param_kind_from_string(const std::string& s) {
    if (s == "weight") return ParamKind::weight;
    if (s == "bias") return ParamKind::bias;
    throw std::invalid_argument("unknown parameter kind '" + s + "'");
}

std::size_t layer_map_size(const LayerMap& layers) {
    std::size_t n = 0;
    for (const auto& s : layers) n += s.length;
    return n;
}

void validate_layer_map(const LayerMap& layers, std::size_t total) {
    std::size_t expected = 0;
    for (const auto& s : layers) {
        if (s.offset != expected)
            throw std::invalid_argument("layer '" + s.name + "' is not contiguous with its predecessor");
        if (!s.shape.empty() && shape_product(s.shape) != s.length)
            throw std::invalid_argument("layer '" + s.name + "' shape does not match its length");
        expected += s.length;
    }
    if (expected != total)
        throw std::invalid_argument("layer map covers " + std::to_string(expected) + " entries, vector has " +
                                    std::to_string(total));
}

const LayerSlice& find_layer(const LayerMap& layers, const std::string& name) {
    for (const auto& s : layers)
        if (s.name == name) return s;
    throw std::out_of_range("no layer named '" + name + "'");
}

std::vector<Tensor> unflatten(const ParameterVector& params) {
    validate_layer_map(params.layers, params.size());
    std::vector<Tensor> out;
    out.reserve(params.layers.size());
    for (const auto& s : params.layers) {
        auto span = params.slice(s);
        auto shape = s.shape.empty() ? std::vector<std::size_t>{s.length} : s.shape;
        out.emplace_back(std::move(shape), std::vector<double>(span.begin(), span.end()));
    }
    return out;
}

ParameterVector flatten(const std::vector<Tensor>& tensors, const LayerMap& layers) {
    if (tensors.size() != layers.size()) throw std::invalid_argument("flatten: tensor count does not match layer map");
    ParameterVector p;
    p.layers = layers;
    p.values.reserve(layer_map_size(layers));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].size() != layers[i].length)
            throw std::invalid_argument("flatten: tensor for '" + layers[i].name + "' has wrong length");
        p.values.insert(p.values.end(), tensors[i].data.begin(), tensors[i].data.end());
    }
    validate_layer_map(p.layers, p.size());
    return p;
}

std::uint64_t content_hash(std::span<const double> values) {
    std::uint64_t h = 1469598103934665603ULL;
    for (double v : values) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof v);
        for (auto b : bytes) {
            h ^= b;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

}  // namespace dprune
