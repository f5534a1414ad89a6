#include "dprune/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dprune/rng.hpp"

namespace dprune {

const char* to_string(Architecture a) { return a == Architecture::mlp ? "mlp" : "convnet"; }

Architecture architecture_from_string(const std::string& s) {
    if (s == "mlp") return Architecture::mlp;
    if (s == "convnet") return Architecture::convnet;
    throw std::invalid_argument("unknown architecture '" + s + "'");
}

SparsityMask SparsityMask::ones(const LayerMap& layers) {
    return SparsityMask{std::vector<std::uint8_t>(layer_map_size(layers), 1), layers};
}

SparsityMask SparsityMask::zeros(const LayerMap& layers) {
    return SparsityMask{std::vector<std::uint8_t>(layer_map_size(layers), 0), layers};
}

void check_aligned(const ParameterVector& params, const SparsityMask& mask) {
    if (mask.size() != params.size())
        throw std::invalid_argument("mask length " + std::to_string(mask.size()) + " does not match parameter length " +
                                    std::to_string(params.size()));
    if (mask.layers != params.layers) throw std::invalid_argument("mask layer map does not match parameters");
    for (auto b : mask.bits)
        if (b > 1) throw std::invalid_argument("mask entries must be 0 or 1");
}

namespace {

void add_slice(LayerMap& map, std::string name, ParamKind kind, std::vector<std::size_t> shape) {
    const std::size_t offset = map.empty() ? 0 : map.back().offset + map.back().length;
    const std::size_t length = shape_product(shape);
    map.push_back(LayerSlice{std::move(name), offset, length, kind, std::move(shape)});
}

void check_spec(const ModelSpec& spec) {
    if (spec.numClasses < 2) throw std::invalid_argument("model needs at least 2 classes");
    if (spec.inputShape.empty()) throw std::invalid_argument("model input shape is empty");
    shape_product(spec.inputShape);
    if (spec.architecture == Architecture::convnet) {
        if (spec.inputShape.size() != 3) throw std::invalid_argument("convnet input shape must be (C,H,W)");
        if (spec.hidden.empty()) throw std::invalid_argument("convnet needs at least one conv block");
        std::size_t h = spec.inputShape[1], w = spec.inputShape[2];
        for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
            h /= 2;
            w /= 2;
            if (h == 0 || w == 0) throw std::invalid_argument("convnet input too small for its pooling depth");
        }
    }
    for (auto c : spec.hidden)
        if (c == 0) throw std::invalid_argument("layer widths must be positive");
}

}  // namespace

LayerMap layer_map(const ModelSpec& spec) {
    check_spec(spec);
    LayerMap map;
    if (spec.architecture == Architecture::mlp) {
        std::size_t in = shape_product(spec.inputShape);
        std::size_t idx = 1;
        for (auto width : spec.hidden) {
            const auto name = "fc" + std::to_string(idx++);
            add_slice(map, name + ".weight", ParamKind::weight, {width, in});
            add_slice(map, name + ".bias", ParamKind::bias, {width});
            in = width;
        }
        const auto name = "fc" + std::to_string(idx);
        add_slice(map, name + ".weight", ParamKind::weight, {spec.numClasses, in});
        add_slice(map, name + ".bias", ParamKind::bias, {spec.numClasses});
    } else {
        std::size_t c = spec.inputShape[0], h = spec.inputShape[1], w = spec.inputShape[2];
        std::size_t idx = 1;
        for (auto out : spec.hidden) {
            const auto name = "conv" + std::to_string(idx++);
            add_slice(map, name + ".weight", ParamKind::weight, {out, c, 3, 3});
            add_slice(map, name + ".bias", ParamKind::bias, {out});
            c = out;
            h /= 2;
            w /= 2;
        }
        add_slice(map, "classifier.weight", ParamKind::weight, {spec.numClasses, c * h * w});
        add_slice(map, "classifier.bias", ParamKind::bias, {spec.numClasses});
    }
    return map;
}

std::size_t parameter_count(const ModelSpec& spec) { return layer_map_size(layer_map(spec)); }

Model::Model(ModelSpec spec) : spec_(std::move(spec)), layers_(layer_map(spec_)), count_(layer_map_size(layers_)) {
    std::size_t li = 0;
    auto next_pair = [&](Op& op) {
        op.weightOffset = layers_[li].offset;
        op.biasOffset = layers_[li + 1].offset;
        li += 2;
    };
    if (spec_.architecture == Architecture::mlp) {
        std::size_t in = shape_product(spec_.inputShape);
        for (auto width : spec_.hidden) {
            Op lin{Op::linear, in, 1, 1, width, 1, 1};
            next_pair(lin);
            ops_.push_back(lin);
            ops_.push_back(Op{Op::relu, width, 1, 1, width, 1, 1});
            in = width;
        }
        Op last{Op::linear, in, 1, 1, spec_.numClasses, 1, 1};
        next_pair(last);
        ops_.push_back(last);
    } else {
        std::size_t c = spec_.inputShape[0], h = spec_.inputShape[1], w = spec_.inputShape[2];
        for (auto out : spec_.hidden) {
            Op conv{Op::conv3x3, c, h, w, out, h, w};
            next_pair(conv);
            ops_.push_back(conv);
            ops_.push_back(Op{Op::relu, out, h, w, out, h, w});
            ops_.push_back(Op{Op::avgpool2, out, h, w, out, h / 2, w / 2});
            c = out;
            h /= 2;
            w /= 2;
        }
        Op cls{Op::linear, c * h * w, 1, 1, spec_.numClasses, 1, 1};
        next_pair(cls);
        ops_.push_back(cls);
    }
}

void Model::check_batch(const Tensor& batch) const {
    if (batch.rank() != spec_.inputShape.size() + 1 ||
        !std::equal(spec_.inputShape.begin(), spec_.inputShape.end(), batch.shape.begin() + 1))
        throw std::invalid_argument("batch shape " + shape_string(batch.shape) + " does not match model input " +
                                    shape_string(spec_.inputShape));
    if (batch.data.size() != shape_product(batch.shape)) throw std::invalid_argument("batch data length mismatch");
}

namespace {

using Op = Model::Op;

void forward_op(const Op& op, std::span<const double> w, const double* in, double* out, std::size_t batch) {
    const std::size_t inSize = op.in_size(), outSize = op.out_size();
    switch (op.kind) {
    case Op::linear: {
        const double* W = w.data() + op.weightOffset;
        const double* b = w.data() + op.biasOffset;
        for (std::size_t n = 0; n < batch; ++n) {
            const double* x = in + n * inSize;
            double* y = out + n * outSize;
            for (std::size_t o = 0; o < op.outC; ++o) {
                const double* row = W + o * op.inC;
                double acc = b[o];
                for (std::size_t i = 0; i < op.inC; ++i) acc += row[i] * x[i];
                y[o] = acc;
            }
        }
        break;
    }
    case Op::conv3x3: {
        const double* W = w.data() + op.weightOffset;
        const double* b = w.data() + op.biasOffset;
        const std::size_t H = op.inH, Wd = op.inW, plane = H * Wd;
        for (std::size_t n = 0; n < batch; ++n) {
            const double* x = in + n * inSize;
            double* y = out + n * outSize;
            for (std::size_t o = 0; o < op.outC; ++o) {
                double* yp = y + o * plane;
                std::fill(yp, yp + plane, b[o]);
                for (std::size_t c = 0; c < op.inC; ++c) {
                    const double* xp = x + c * plane;
                    const double* k = W + (o * op.inC + c) * 9;
                    for (std::size_t ky = 0; ky < 3; ++ky)
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const double kv = k[ky * 3 + kx];
                            if (kv == 0.0) continue;
                            const std::size_t y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? H - 1 : H;
                            const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? Wd - 1 : Wd;
                            for (std::size_t yy = y0; yy < y1; ++yy) {
                                double* yr = yp + yy * Wd;
                                const double* xr = xp + (yy + ky - 1) * Wd + kx - 1;
                                for (std::size_t xx = x0; xx < x1; ++xx) yr[xx] += kv * xr[xx];
                            }
                        }
                }
            }
        }
        break;
    }
    case Op::relu:
        for (std::size_t i = 0; i < batch * inSize; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
        break;
    case Op::avgpool2: {
        const std::size_t H = op.inH, Wd = op.inW, oh = op.outH, ow = op.outW;
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t c = 0; c < op.inC; ++c) {
                const double* xp = in + n * inSize + c * H * Wd;
                double* yp = out + n * outSize + c * oh * ow;
                for (std::size_t yy = 0; yy < oh; ++yy)
                    for (std::size_t xx = 0; xx < ow; ++xx) {
                        const double* r0 = xp + 2 * yy * Wd + 2 * xx;
                        yp[yy * ow + xx] = 0.25 * (r0[0] + r0[1] + r0[Wd] + r0[Wd + 1]);
                    }
            }
        break;
    }
    }
}

// `gin` may be null for the first op (input gradient not needed).
void backward_op(const Op& op, std::span<const double> w, const double* in, const double* gout, double* gin,
                 std::span<double> grad, std::size_t batch) {
    const std::size_t inSize = op.in_size(), outSize = op.out_size();
    switch (op.kind) {
    case Op::linear: {
        const double* W = w.data() + op.weightOffset;
        double* dW = grad.data() + op.weightOffset;
        double* db = grad.data() + op.biasOffset;
        if (gin) std::fill(gin, gin + batch * inSize, 0.0);
        for (std::size_t n = 0; n < batch; ++n) {
            const double* x = in + n * inSize;
            const double* g = gout + n * outSize;
            double* gx = gin ? gin + n * inSize : nullptr;
            for (std::size_t o = 0; o < op.outC; ++o) {
                const double go = g[o];
                db[o] += go;
                if (go == 0.0) continue;
                double* dRow = dW + o * op.inC;
                const double* row = W + o * op.inC;
                for (std::size_t i = 0; i < op.inC; ++i) dRow[i] += go * x[i];
                if (gx)
                    for (std::size_t i = 0; i < op.inC; ++i) gx[i] += go * row[i];
            }
        }
        break;
    }
    case Op::conv3x3: {
        const double* W = w.data() + op.weightOffset;
        double* dW = grad.data() + op.weightOffset;
        double* db = grad.data() + op.biasOffset;
        const std::size_t H = op.inH, Wd = op.inW, plane = H * Wd;
        if (gin) std::fill(gin, gin + batch * inSize, 0.0);
        for (std::size_t n = 0; n < batch; ++n) {
            const double* x = in + n * inSize;
            const double* g = gout + n * outSize;
            double* gx = gin ? gin + n * inSize : nullptr;
            for (std::size_t o = 0; o < op.outC; ++o) {
                const double* gp = g + o * plane;
                double bsum = 0.0;
                for (std::size_t i = 0; i < plane; ++i) bsum += gp[i];
                db[o] += bsum;
                for (std::size_t c = 0; c < op.inC; ++c) {
                    const double* xp = x + c * plane;
                    double* gxp = gx ? gx + c * plane : nullptr;
                    const double* k = W + (o * op.inC + c) * 9;
                    double* dk = dW + (o * op.inC + c) * 9;
                    for (std::size_t ky = 0; ky < 3; ++ky)
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const double kv = k[ky * 3 + kx];
                            const std::size_t y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? H - 1 : H;
                            const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? Wd - 1 : Wd;
                            double acc = 0.0;
                            for (std::size_t yy = y0; yy < y1; ++yy) {
                                const double* gr = gp + yy * Wd;
                                const std::size_t off = (yy + ky - 1) * Wd + kx - 1;
                                const double* xr = xp + off;
                                for (std::size_t xx = x0; xx < x1; ++xx) acc += gr[xx] * xr[xx];
                                if (gxp && kv != 0.0) {
                                    double* gr_in = gxp + off;
                                    for (std::size_t xx = x0; xx < x1; ++xx) gr_in[xx] += kv * gr[xx];
                                }
                            }
                            dk[ky * 3 + kx] += acc;
                        }
                }
            }
        }
        break;
    }
    case Op::relu:
        if (gin)
            for (std::size_t i = 0; i < batch * inSize; ++i) gin[i] = in[i] > 0.0 ? gout[i] : 0.0;
        break;
    case Op::avgpool2: {
        if (!gin) break;
        const std::size_t H = op.inH, Wd = op.inW, oh = op.outH, ow = op.outW;
        std::fill(gin, gin + batch * inSize, 0.0);
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t c = 0; c < op.inC; ++c) {
                double* gp = gin + n * inSize + c * H * Wd;
                const double* go = gout + n * outSize + c * oh * ow;
                for (std::size_t yy = 0; yy < oh; ++yy)
                    for (std::size_t xx = 0; xx < ow; ++xx) {
                        const double v = 0.25 * go[yy * ow + xx];
                        double* r0 = gp + 2 * yy * Wd + 2 * xx;
                        r0[0] += v;
                        r0[1] += v;
                        r0[Wd] += v;
                        r0[Wd + 1] += v;
                    }
            }
        break;
    }
    }
}

}  // namespace

Tensor Model::forward(std::span<const double> weights, const Tensor& batch) const {
    check_batch(batch);
    if (weights.size() != count_) throw std::invalid_argument("weight vector length does not match model");
    const std::size_t n = batch.dim(0);
    std::vector<double> cur(batch.data.begin(), batch.data.end()), next;
    for (const auto& op : ops_) {
        next.assign(n * op.out_size(), 0.0);
        forward_op(op, weights, cur.data(), next.data(), n);
        cur.swap(next);
    }
    Tensor logits({n, spec_.numClasses}, std::move(cur));
    check_finite(logits.data, "forward");
    return logits;
}

double Model::loss_and_gradient(std::span<const double> weights, const Tensor& batch, std::span<const int> labels,
                                std::span<double> grad) const {
    check_batch(batch);
    if (weights.size() != count_ || grad.size() != count_)
        throw std::invalid_argument("weight/gradient length does not match model");
    const std::size_t n = batch.dim(0);
    if (labels.size() != n) throw std::invalid_argument("label count does not match batch");

    std::vector<std::vector<double>> acts(ops_.size() + 1);
    acts[0].assign(batch.data.begin(), batch.data.end());
    for (std::size_t i = 0; i < ops_.size(); ++i) {
        acts[i + 1].assign(n * ops_[i].out_size(), 0.0);
        forward_op(ops_[i], weights, acts[i].data(), acts[i + 1].data(), n);
    }
    Tensor logits({n, spec_.numClasses}, acts.back());
    check_finite(logits.data, "forward");

    // Softmax cross-entropy, mean over batch.
    const std::size_t k = spec_.numClasses;
    std::vector<double> g(n * k);
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const int label = labels[r];
        if (label < 0 || static_cast<std::size_t>(label) >= k) throw std::invalid_argument("label out of range");
        const double* z = logits.data.data() + r * k;
        const double mx = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(z[c] - mx);
        const double logSum = std::log(sum) + mx;
        loss += logSum - z[label];
        for (std::size_t c = 0; c < k; ++c) g[r * k + c] = std::exp(z[c] - logSum) / static_cast<double>(n);
        g[r * k + static_cast<std::size_t>(label)] -= 1.0 / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);

    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> gin;
    for (std::size_t i = ops_.size(); i-- > 0;) {
        const bool needInput = i > 0;
        if (needInput) gin.assign(n * ops_[i].in_size(), 0.0);
        backward_op(ops_[i], weights, acts[i].data(), g.data(), needInput ? gin.data() : nullptr, grad, n);
        if (needInput) g.swap(gin);
    }
    return loss;
}

ParameterVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    ParameterVector p;
    p.layers = layer_map(spec);
    p.values.assign(layer_map_size(p.layers), 0.0);
    Rng rng(seed);
    for (const auto& s : p.layers) {
        if (s.kind != ParamKind::weight) continue;
        const std::size_t fanIn = s.length / s.shape[0];
        const double bound = std::sqrt(6.0 / static_cast<double>(fanIn));
        for (auto& v : p.slice(s)) v = rng.uniform(-bound, bound);
    }
    return p;
}

namespace {
std::vector<double> effective(const ParameterVector& params, const SparsityMask& mask) {
    check_aligned(params, mask);
    std::vector<double> w(params.values);
    for (std::size_t i = 0; i < w.size(); ++i)
        if (!mask.bits[i]) w[i] = 0.0;
    return w;
}
}  // namespace

Tensor forward(const ModelSpec& spec, const ParameterVector& params, const SparsityMask& mask, const Tensor& batch) {
    Model model(spec);
    if (params.layers != model.layers()) throw std::invalid_argument("parameters do not belong to this model");
    return model.forward(effective(params, mask), batch);
}

ParameterVector backward(const ModelSpec& spec, const ParameterVector& params, const SparsityMask& mask,
                         const Tensor& batch, std::span<const int> labels) {
    Model model(spec);
    if (params.layers != model.layers()) throw std::invalid_argument("parameters do not belong to this model");
    ParameterVector grad{std::vector<double>(params.size()), params.layers};
    model.loss_and_gradient(effective(params, mask), batch, labels, grad.values);
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!mask.bits[i]) grad.values[i] = 0.0;
    return grad;
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) throw std::invalid_argument("label count does not match logits");
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double* z = logits.data.data() + r * k;
        const double mx = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(z[c] - mx);
        loss += std::log(sum) + mx - z[static_cast<std::size_t>(labels[r])];
    }
    return loss / static_cast<double>(n);
}

std::vector<int> predict(const Tensor& logits) {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* z = logits.data.data() + r * k;
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (z[c] > z[best]) best = c;
        out[r] = static_cast<int>(best);
    }
    return out;
}

}  // namespace dprune
