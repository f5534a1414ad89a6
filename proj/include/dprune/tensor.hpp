#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dprune {

// Dense row-major tensor of doubles.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);
    Tensor(std::vector<std::size_t> s, std::vector<double> values);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    // Elements per leading-axis row (product of shape[1..]).
    std::size_t row_size() const;

    std::span<double> row(std::size_t i) { return {data.data() + i * row_size(), row_size()}; }
    std::span<const double> row(std::size_t i) const {
        return {data.data() + i * row_size(), row_size()};
    }

    bool operator==(const Tensor&) const = default;
};

std::size_t shape_product(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

// Throws std::domain_error naming `what` if any value is NaN or infinite.
void check_finite(std::span<const double> values, const std::string& what);

enum class ParamKind { weight, bias };

const char* to_string(ParamKind kind);
ParamKind param_kind_from_string(const std::string& s);

struct LayerSlice {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
    ParamKind kind = ParamKind::weight;
    std::vector<std::size_t> shape;  // logical shape of this slice

    bool operator==(const LayerSlice&) const = default;
};

// Canonical flatten order of all model parameters.
using LayerMap = std::vector<LayerSlice>;

std::size_t layer_map_size(const LayerMap& layers);

// Throws std::invalid_argument unless slices are contiguous, non-overlapping,
// start at zero and cover exactly `total` entries.
void validate_layer_map(const LayerMap& layers, std::size_t total);

const LayerSlice& find_layer(const LayerMap& layers, const std::string& name);

// Flat parameter vector theta together with its layer map.
struct ParameterVector {
    std::vector<double> values;
    LayerMap layers;

    std::size_t size() const { return values.size(); }

    std::span<const double> slice(const LayerSlice& s) const {
        return std::span<const double>(values).subspan(s.offset, s.length);
    }
    std::span<double> slice(const LayerSlice& s) { return std::span<double>(values).subspan(s.offset, s.length); }

    bool operator==(const ParameterVector&) const = default;
};

// One tensor per layer slice, shaped by LayerSlice::shape.
std::vector<Tensor> unflatten(const ParameterVector& params);
ParameterVector flatten(const std::vector<Tensor>& tensors, const LayerMap& layers);

// FNV-1a over the raw bytes of the values; used to check purity.
std::uint64_t content_hash(std::span<const double> values);

}  // namespace dprune
