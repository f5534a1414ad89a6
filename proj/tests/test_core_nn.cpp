#include <doctest.h>

#include <cmath>

#include "dprune/model.hpp"
#include "dprune/pruning.hpp"
#include "dprune/rng.hpp"
#include "dprune/train.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dprune;

namespace {

Tensor random_batch(std::vector<std::size_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (auto& v : t.data) v = rng.normal();
    return t;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(classes));
    return y;
}

// Randomizes biases too so gradient checks see every path.
ParameterVector jittered_init(const ModelSpec& spec, std::uint64_t seed) {
    auto p = init_params(spec, seed);
    Rng rng{seed, 77};
    for (auto& v : p.values) v += 0.1 * rng.normal();
    return p;
}

}  // namespace

TEST_CASE("parameter count of a 784-64-10 MLP") {
    const auto spec = fixtures::small_mlp(784, {64}, 10);
    CHECK(parameter_count(spec) == 50890);
    CHECK(init_params(spec, 0).size() == 50890);
}

TEST_CASE("layer map names and shapes") {
    const auto mlp = layer_map(fixtures::small_mlp(4, {8}, 3));
    REQUIRE(mlp.size() == 4);
    CHECK(mlp[0].name == "fc1.weight");
    CHECK(mlp[0].shape == std::vector<std::size_t>{8, 4});
    CHECK(mlp[1].kind == ParamKind::bias);
    CHECK(mlp[3].name == "fc2.bias");

    const auto conv = layer_map(ModelSpec{Architecture::convnet, {2, 4, 4}, {3}, 5});
    CHECK(conv[0].name == "conv1.weight");
    CHECK(conv[0].shape == std::vector<std::size_t>{3, 2, 3, 3});
    CHECK(conv[2].name == "classifier.weight");
    CHECK(conv[2].shape == std::vector<std::size_t>{5, 12});
    CHECK_NOTHROW(validate_layer_map(conv, parameter_count(ModelSpec{Architecture::convnet, {2, 4, 4}, {3}, 5})));
}

TEST_CASE("init is deterministic and seed sensitive") {
    const auto spec = fixtures::small_mlp(10, {16}, 4);
    CHECK(init_params(spec, 3) == init_params(spec, 3));
    CHECK(init_params(spec, 3).values != init_params(spec, 4).values);
    const auto p = init_params(spec, 3);
    const auto& w = p.layers[0];
    const double bound = std::sqrt(6.0 / 10.0);
    for (double v : p.slice(w)) CHECK(std::abs(v) <= bound);
    for (double v : p.slice(p.layers[1])) CHECK(v == 0.0);
}

TEST_CASE("forward with identity and zero masks") {
    const auto spec = fixtures::small_mlp(5, {7}, 3);
    auto p = jittered_init(spec, 1);
    const auto x = random_batch({4, 5}, 2);
    const Model model(spec);
    const auto ones = SparsityMask::ones(p.layers);
    CHECK(forward(spec, p, ones, x) == model.forward(p.values, x));

    // All-zero mask: every logit is zero.
    const auto zeros = SparsityMask::zeros(p.layers);
    for (double v : forward(spec, p, zeros, x).data) CHECK(v == 0.0);
}

TEST_CASE("single linear layer matches a hand computation") {
    const auto spec = fixtures::small_mlp(3, {}, 3);
    ParameterVector p{{1, 2, 3, 4, 5, 6, 7, 8, 9, 0.5, -0.5, 1}, layer_map(spec)};
    const Tensor x({1, 3}, {1, 0, -1});
    const auto y = forward(spec, p, SparsityMask::ones(p.layers), x);
    CHECK(y.data == std::vector<double>{-1.5, -2.5, -1.0});
}

TEST_CASE("conv block matches a hand computation") {
    // 1x2x2 input, one channel, centre-tap kernel plus bias; pooled to 1x1.
    ModelSpec spec{Architecture::convnet, {1, 2, 2}, {1}, 2};
    std::vector<double> v(parameter_count(spec), 0.0);
    v[4] = 2.0;   // centre tap
    v[9] = -1.0;  // conv bias
    v[10] = 3.0;   // classifier weight, class 0
    v[12] = 0.25;  // classifier bias, class 0
    ParameterVector p{v, layer_map(spec)};
    const Tensor x({1, 1, 2, 2}, {1, 2, 0.25, 0});
    // conv: 2x-1 -> {1, 3, -0.5, -1}; relu -> {1, 3, 0, 0}; pool -> 1; 3*1 + 0.25
    const auto y = forward(spec, p, SparsityMask::ones(p.layers), x);
    CHECK(y.data == std::vector<double>{3.25, 0.0});
}

TEST_CASE("analytic gradient agrees with finite differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        SUBCASE("mlp") {
            const auto spec = fixtures::small_mlp(4, {8}, 3);
            const auto p = jittered_init(spec, seed);
            const auto x = random_batch({6, 4}, seed + 10);
            const auto y = random_labels(6, 3, seed + 20);
            const auto mask = SparsityMask::ones(p.layers);
            const auto g = backward(spec, p, mask, x, y);
            CHECK(oracle::max_relative_error(g.values, oracle::finite_difference_gradient(spec, p, mask, x, y)) < 1e-4);
        }
        SUBCASE("convnet") {
            const ModelSpec spec{Architecture::convnet, {2, 4, 4}, {3}, 3};
            const auto p = jittered_init(spec, seed);
            const auto x = random_batch({3, 2, 4, 4}, seed + 10);
            const auto y = random_labels(3, 3, seed + 20);
            const auto mask = SparsityMask::ones(p.layers);
            const auto g = backward(spec, p, mask, x, y);
            CHECK(oracle::max_relative_error(g.values, oracle::finite_difference_gradient(spec, p, mask, x, y)) < 1e-4);
        }
    }
}

TEST_CASE("gradient is zero at masked positions") {
    const auto spec = fixtures::small_mlp(4, {8}, 3);
    const auto p = jittered_init(spec, 5);
    const auto mask = random_prune(SparsityMask::ones(p.layers), 0.6, 9);
    const auto g = backward(spec, p, mask, random_batch({5, 4}, 1), random_labels(5, 3, 2));
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!mask.kept(i)) CHECK(g.values[i] == 0.0);
}

TEST_CASE("duplicating every row leaves the mean-loss gradient unchanged") {
    const auto spec = fixtures::small_mlp(4, {8}, 3);
    const auto p = jittered_init(spec, 2);
    const auto x = random_batch({5, 4}, 3);
    const auto y = random_labels(5, 3, 4);
    Tensor x2({10, 4});
    std::vector<int> y2;
    for (std::size_t r = 0; r < 10; ++r) {
        std::copy(x.row(r % 5).begin(), x.row(r % 5).end(), x2.row(r).begin());
        y2.push_back(y[r % 5]);
    }
    const auto mask = SparsityMask::ones(p.layers);
    const auto g1 = backward(spec, p, mask, x, y);
    const auto g2 = backward(spec, p, mask, x2, y2);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2.values[i] == doctest::Approx(g1.values[i]).epsilon(1e-12));
}

TEST_CASE("zero epochs returns the masked input") {
    const auto spec = fixtures::small_mlp(2, {6}, 4);
    const auto p = jittered_init(spec, 1);
    const auto mask = random_prune(SparsityMask::ones(p.layers), 0.5, 3);
    const auto out = train(spec, p, mask, fixtures::blobs(10), fixtures::quick_train(0));
    CHECK(out == apply_mask(p, mask));
}

TEST_CASE("training is reproducible and keeps pruned weights at zero") {
    const auto spec = fixtures::small_mlp(2, {12}, 4);
    const auto data = fixtures::blobs(20);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto p = init_params(spec, seed);
        const auto mask = random_prune(SparsityMask::ones(p.layers), 0.3 + 0.1 * static_cast<double>(seed), seed);
        const auto a = train(spec, p, mask, data, fixtures::quick_train(3, seed));
        const auto b = train(spec, p, mask, data, fixtures::quick_train(3, seed));
        CHECK(a == b);
        for (std::size_t i = 0; i < a.size(); ++i)
            if (!mask.kept(i)) CHECK(a.values[i] == 0.0);
    }
}

TEST_CASE("blobs are learned and loss decreases") {
    const auto spec = fixtures::small_mlp(2, {16}, 2);
    const auto data = synth_dataset(SynthKind::gaussianBlobs, 2, 100, 0.5, 4);
    const auto p = init_params(spec, 0);
    const auto mask = SparsityMask::ones(p.layers);
    const auto before = evaluate(spec, p, mask, data);
    const auto trained = train(spec, p, mask, data, fixtures::quick_train(10));
    const auto after = evaluate(spec, trained, mask, data);
    CHECK(after.accuracy >= 0.95);
    CHECK(after.meanLoss < before.meanLoss);
}

TEST_CASE("evaluate breaks argmax ties toward class 0 and is pure") {
    const auto spec = fixtures::small_mlp(2, {}, 3);
    ParameterVector p{std::vector<double>(parameter_count(spec), 0.0), layer_map(spec)};
    LabeledDataset data{Tensor({5, 2}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}), {0, 1, 0, 2, 0}, 3};
    const auto mask = SparsityMask::ones(p.layers);
    const auto before = content_hash(p.values);
    const auto e = evaluate(spec, p, mask, data);
    CHECK(e.accuracy == doctest::Approx(0.6));
    CHECK(e.meanLoss == doctest::Approx(std::log(3.0)));
    CHECK(content_hash(p.values) == before);
}

TEST_CASE("evaluate is perfect on a separable fixture") {
    const auto spec = fixtures::small_mlp(1, {}, 2);
    ParameterVector p{{-1, 1, 0, 0}, layer_map(spec)};
    LabeledDataset data{Tensor({4, 1}, {-2, -1, 1, 2}), {0, 0, 1, 1}, 2};
    CHECK(evaluate(spec, p, SparsityMask::ones(p.layers), data).accuracy == 1.0);
}

TEST_CASE("flatten and unflatten round-trip") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        ModelSpec spec = seed % 2 ? ModelSpec{Architecture::convnet, {1 + rng.below(2), 4, 4}, {1 + rng.below(3)}, 2 + rng.below(4)}
                                  : fixtures::small_mlp(1 + rng.below(6), {1 + rng.below(5), 1 + rng.below(5)}, 2 + rng.below(4));
        const auto p = init_params(spec, seed);
        CHECK(flatten(unflatten(p), p.layers) == p);
    }
}

TEST_CASE("bad inputs are rejected") {
    const auto spec = fixtures::small_mlp(3, {4}, 2);
    const auto p = init_params(spec, 0);
    const auto mask = SparsityMask::ones(p.layers);
    CHECK_THROWS_AS(forward(spec, p, mask, Tensor({2, 4})), std::invalid_argument);
    auto shortMask = mask;
    shortMask.bits.pop_back();
    CHECK_THROWS_AS(forward(spec, p, shortMask, Tensor({2, 3})), std::invalid_argument);
    auto nanParams = p;
    nanParams.values.back() = std::nan("");
    CHECK_THROWS_AS(backward(spec, nanParams, mask, Tensor({1, 3}), std::vector<int>{0}), std::domain_error);
    CHECK_THROWS(backward(spec, p, mask, Tensor({1, 3}), std::vector<int>{5}));
}

TEST_CASE("learning rate follows milestones") {
    TrainConfig c;
    c.learningRate = 1.0;
    c.milestones = {2, 4};
    c.gamma = 0.5;
    CHECK(learning_rate_at(c, 0) == 1.0);
    CHECK(learning_rate_at(c, 2) == 0.5);
    CHECK(learning_rate_at(c, 5) == 0.25);
    c.batchSize = 0;
    CHECK_FALSE(validate(c).empty());
}

TEST_CASE("divergence is reported") {
    const auto spec = fixtures::small_mlp(2, {}, 4);
    auto cfg = fixtures::quick_train(5);
    cfg.learningRate = 1e300;
    cfg.momentum = 0.0;
    const auto p = init_params(spec, 0);
    CHECK_THROWS_AS(train(spec, p, SparsityMask::ones(p.layers), fixtures::blobs(20, 0, 3.0), cfg), DivergenceError);
}
