#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dprune/mask.hpp"
#include "dprune/tensor.hpp"

namespace dprune {

enum class Architecture { mlp, convnet };

const char* to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

// mlp: `hidden` holds hidden-layer widths; input is flattened.
// convnet: `hidden` holds the channel count of each conv block
// (3x3 same-padded conv, ReLU, 2x2 average pool), then one linear classifier.
// inputShape for convnet is (channels, height, width).
struct ModelSpec {
    Architecture architecture = Architecture::mlp;
    std::vector<std::size_t> inputShape;
    std::vector<std::size_t> hidden;
    std::size_t numClasses = 2;

    bool operator==(const ModelSpec&) const = default;
};

LayerMap layer_map(const ModelSpec& spec);
std::size_t parameter_count(const ModelSpec& spec);

// Evaluates a model on raw (already effective) weights. Batch layout is
// (batch, inputShape...). All arithmetic is serial, so results are
// bit-reproducible.
class Model {
public:
    explicit Model(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }
    const LayerMap& layers() const { return layers_; }
    std::size_t parameter_count() const { return count_; }

    Tensor forward(std::span<const double> weights, const Tensor& batch) const;

    // Mean cross-entropy over the batch; writes d(loss)/d(weights) to `grad`
    // (overwritten, not accumulated).
    double loss_and_gradient(std::span<const double> weights, const Tensor& batch, std::span<const int> labels,
                             std::span<double> grad) const;

    void check_batch(const Tensor& batch) const;

    struct Op {
        enum Kind { linear, conv3x3, relu, avgpool2 } kind;
        std::size_t inC = 0, inH = 1, inW = 1;  // linear: inC = in features
        std::size_t outC = 0, outH = 1, outW = 1;
        std::size_t weightOffset = 0, biasOffset = 0;
        std::size_t in_size() const { return inC * inH * inW; }
        std::size_t out_size() const { return outC * outH * outW; }
    };

private:
    ModelSpec spec_;
    LayerMap layers_;
    std::size_t count_ = 0;
    std::vector<Op> ops_;
};

// Fan-in scaled uniform init: weights ~ U(-b, b), b = sqrt(6 / fan_in);
// biases zero.
ParameterVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Logits of f(x; params (.) mask).
Tensor forward(const ModelSpec& spec, const ParameterVector& params, const SparsityMask& mask, const Tensor& batch);

// Gradient of mean cross-entropy w.r.t. params; zero wherever mask is 0.
ParameterVector backward(const ModelSpec& spec, const ParameterVector& params, const SparsityMask& mask,
                         const Tensor& batch, std::span<const int> labels);

// Mean softmax cross-entropy of `logits` against `labels`.
double cross_entropy(const Tensor& logits, std::span<const int> labels);

// Argmax per row, ties to the lowest class index.
std::vector<int> predict(const Tensor& logits);

}  // namespace dprune
