#include "dprune/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dprune/rng.hpp"

namespace dprune {

std::vector<std::string> validate(const TrainConfig& cfg, const std::string& prefix) {
    std::vector<std::string> out;
    auto bad = [&](const std::string& m) { out.push_back(prefix + m); };
    if (!(cfg.learningRate > 0.0)) bad("learning_rate must be positive");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) bad("momentum must be in [0,1)");
    if (!(cfg.weightDecay >= 0.0)) bad("weight_decay must be non-negative");
    if (cfg.batchSize == 0) bad("batch_size must be positive");
    if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) bad("gamma must be in (0,1]");
    for (std::size_t i = 0; i < cfg.milestones.size(); ++i) {
        if (i > 0 && cfg.milestones[i] <= cfg.milestones[i - 1]) {
            bad("milestones must be strictly increasing");
            break;
        }
    }
    if (!cfg.milestones.empty() && cfg.milestones.back() >= cfg.epochs) bad("milestones must be < epochs");
    return out;
}

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
    double lr = cfg.learningRate;
    for (auto m : cfg.milestones)
        if (epoch >= m) lr *= cfg.gamma;
    return lr;
}

DivergenceError::DivergenceError(std::size_t e, std::size_t b, double loss)
    : std::runtime_error("training diverged at epoch " + std::to_string(e) + ", batch " + std::to_string(b) +
                         " (loss " + std::to_string(loss) + ")"),
      epoch(e),
      batch(b) {}

ParameterVector train(const ModelSpec& spec, const ParameterVector& params, const SparsityMask& mask,
                      const LabeledDataset& data, const TrainConfig& cfg, const EpochHook& onEpoch) {
    check_aligned(params, mask);
    data.validate();
    if (cfg.batchSize == 0) throw std::invalid_argument("batch size must be positive");
    Model model(spec);
    if (params.layers != model.layers()) throw std::invalid_argument("parameters do not belong to this model");

    ParameterVector theta = params;
    for (std::size_t i = 0; i < theta.size(); ++i)
        if (!mask.bits[i]) theta.values[i] = 0.0;

    const std::size_t n = data.size(), p = theta.size();
    std::vector<std::uint8_t> decays(p, 0);
    for (const auto& s : theta.layers)
        if (s.kind == ParamKind::weight)
            for (std::size_t i = s.offset; i < s.offset + s.length; ++i) decays[i] = mask.bits[i];

    std::vector<double> grad(p), velocity(p, 0.0);
    std::vector<std::size_t> order(n);
    std::vector<int> labels;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng{cfg.shuffleSeed, epoch};
        rng.shuffle(order.begin(), order.end());
        const double lr = learning_rate_at(cfg, epoch);

        std::size_t batchIndex = 0;
        for (std::size_t start = 0; start < n; start += cfg.batchSize, ++batchIndex) {
            const std::size_t stop = std::min(n, start + cfg.batchSize);
            std::span<const std::size_t> idx(order.data() + start, stop - start);
            const Tensor batch = data.gather(idx);
            labels.resize(idx.size());
            for (std::size_t j = 0; j < idx.size(); ++j) labels[j] = data.labels[idx[j]];

            double loss;
            try {
                loss = model.loss_and_gradient(theta.values, batch, labels, grad);
            } catch (const std::domain_error&) {
                throw DivergenceError(epoch, batchIndex, std::nan(""));
            }
            if (!std::isfinite(loss)) throw DivergenceError(epoch, batchIndex, loss);

            for (std::size_t i = 0; i < p; ++i) {
                if (!mask.bits[i]) continue;
                double g = grad[i];
                if (decays[i]) g += cfg.weightDecay * theta.values[i];
                velocity[i] = cfg.momentum * velocity[i] + g;
                theta.values[i] -= lr * velocity[i];
            }
        }
        for (std::size_t i = 0; i < p; ++i)
            if (!std::isfinite(theta.values[i])) throw DivergenceError(epoch, batchIndex, std::nan(""));
        if (onEpoch) onEpoch(epoch + 1, theta);
    }
    return theta;
}

Evaluation evaluate(const ModelSpec& spec, const ParameterVector& params, const SparsityMask& mask,
                    const LabeledDataset& data) {
    if (data.size() == 0) throw std::invalid_argument("cannot evaluate on an empty dataset");
    data.validate();
    check_aligned(params, mask);
    Model model(spec);
    std::vector<double> w(params.values);
    for (std::size_t i = 0; i < w.size(); ++i)
        if (!mask.bits[i]) w[i] = 0.0;

    constexpr std::size_t chunk = 256;
    std::size_t correct = 0;
    double lossSum = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        const std::size_t stop = std::min(data.size(), start + chunk);
        idx.resize(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor logits = model.forward(w, data.gather(idx));
        std::span<const int> labels(data.labels.data() + start, stop - start);
        lossSum += cross_entropy(logits, labels) * static_cast<double>(labels.size());
        const auto pred = predict(logits);
        for (std::size_t j = 0; j < pred.size(); ++j) correct += pred[j] == labels[j];
    }
    const auto total = static_cast<double>(data.size());
    return {static_cast<double>(correct) / total, lossSum / total};
}

}  // namespace dprune
