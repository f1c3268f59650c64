#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mdb/error.hpp"
#include "mdb/network.hpp"
#include "mdb/rng.hpp"

using namespace mdb;

namespace {

ModelConfig tiny_config(int n_classes = 3) {
    ModelConfig c;
    c.input_size = 8;
    c.stem_width = 4;
    c.n_blocks = 3;
    c.n_classes = n_classes;
    return c;
}

Batch random_batch(const ModelConfig& c, int n, std::uint64_t seed) {
    Batch b;
    b.n = n;
    b.channels = c.channels;
    b.height = b.width = c.input_size;
    b.data.resize(static_cast<std::size_t>(n) * b.image_numel());
    SplitMix64 rng(seed);
    for (float& v : b.data) v = static_cast<float>(rng.uniform());
    return b;
}

void zero_head(ParamState& s) {
    for (float& v : s.param("head.weight").data) v = 0.0f;
    for (float& v : s.param("head.bias").data) v = 0.0f;
}

double norm(const std::vector<double>& v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

}  // namespace

TEST(Network, GradientMatchesCentralDifferences) {
    const ModelConfig cfg = tiny_config();
    ParamState s = init_model(cfg, 3);
    // Non-trivial BN affine and head bias so their gradients are exercised.
    SplitMix64 rng(17);
    for (Tensor& t : s.params)
        if (t.name.find(".gamma") != std::string::npos || t.name.find(".beta") != std::string::npos ||
            t.name == "head.bias")
            for (float& v : t.data) v += static_cast<float>(0.2 * (rng.uniform() - 0.5));
    const Batch b = random_batch(cfg, 4, 5);
    const std::vector<int> labels{0, 2, 1, 2};
    ParamsF64 p = to_f64(s);
    const std::vector<double> images = to_f64(b);
    const auto analytic = grad_f64(p, images, b.n, labels);
    ASSERT_EQ(analytic.size(), s.params.size());

    // Larger steps straddle ReLU kinks in this tiny model and give O(h) errors.
    const double h = 1e-6;
    for (std::size_t t = 0; t < p.params.size(); ++t) {
        std::vector<double> numeric(p.params[t].size());
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            const double keep = p.params[t][i];
            p.params[t][i] = keep + h;
            const double up = loss_f64(p, images, b.n, labels);
            p.params[t][i] = keep - h;
            const double down = loss_f64(p, images, b.n, labels);
            p.params[t][i] = keep;
            numeric[i] = (up - down) / (2 * h);
        }
        std::vector<double> diff(numeric.size());
        for (std::size_t i = 0; i < diff.size(); ++i) {
            diff[i] = numeric[i] - analytic[t][i];
            EXPECT_LE(std::abs(diff[i]), 1e-4 * std::max(std::abs(numeric[i]), std::abs(analytic[t][i])) + 1e-9)
                << s.params[t].name << "[" << i << "]";
        }
        const double scale = std::max(norm(analytic[t]), 1e-6);
        EXPECT_LT(norm(diff) / scale, 1e-4) << s.params[t].name;
    }
}

TEST(Network, FloatGradientTracksDoubleShadow) {
    const ModelConfig cfg = tiny_config();
    const ParamState s = init_model(cfg, 8);
    const Batch b = random_batch(cfg, 6, 9);
    const std::vector<int> labels{0, 1, 2, 0, 1, 2};
    double loss64 = 0;
    const auto g64 = grad_f64(to_f64(s), to_f64(b), b.n, labels, &loss64);
    const LossAndGrad g32 = loss_and_grad(s, b, labels);
    EXPECT_NEAR(g32.loss, loss64, 1e-5 * std::max(1.0, loss64));
    for (std::size_t t = 0; t < g64.size(); ++t) {
        std::vector<double> diff(g64[t].size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = g32.grads[t][i] - g64[t][i];
        EXPECT_LT(norm(diff) / std::max(norm(g64[t]), 1e-6), 1e-3) << s.params[t].name;
    }
}

TEST(Network, UniformLogitsGiveLogK) {
    for (int k : {2, 3, 10}) {
        const ModelConfig cfg = tiny_config(k);
        ParamState s = init_model(cfg, 1);
        zero_head(s);
        const Batch b = random_batch(cfg, 3, 2);
        const std::vector<int> labels{0, k - 1, 1};
        EXPECT_NEAR(loss_and_grad(s, b, labels).loss, std::log(static_cast<double>(k)), 1e-6);
        for (float v : forward(s, b)) EXPECT_EQ(v, 0.0f);
    }
}

TEST(Network, HeadBiasGradientForTwoClasses) {
    const ModelConfig cfg = tiny_config(2);
    ParamState s = init_model(cfg, 4);
    zero_head(s);
    const Batch b = random_batch(cfg, 5, 3);
    const std::vector<int> labels(5, 0);
    const LossAndGrad g = loss_and_grad(s, b, labels);
    const auto& bias = g.grads.back();
    ASSERT_EQ(bias.size(), 2u);
    EXPECT_NEAR(bias[0], -0.5, 1e-6);
    EXPECT_NEAR(bias[1], 0.5, 1e-6);
}

TEST(Network, EvalRowsIndependentOfBatchComposition) {
    const ModelConfig cfg = tiny_config();
    ParamState s = init_model(cfg, 6);
    // Give the running stats some non-default content.
    const Batch warm = random_batch(cfg, 8, 1);
    update_running_stats(s, loss_and_grad(s, warm, std::vector<int>(8, 1)).batch_stats);

    const Batch b = random_batch(cfg, 4, 7);
    const auto base = forward(s, b);
    Batch perm = b;
    const std::vector<int> order{2, 0, 3, 1};
    const std::size_t m = b.image_numel();
    for (int i = 0; i < 4; ++i)
        std::copy_n(b.data.begin() + order[i] * m, m, perm.data.begin() + i * m);
    const auto permuted = forward(s, perm);
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < cfg.n_classes; ++k)
            EXPECT_FLOAT_EQ(permuted[i * cfg.n_classes + k], base[order[i] * cfg.n_classes + k]);

    Batch dup = b;
    dup.n = 8;
    dup.data.insert(dup.data.end(), b.data.begin(), b.data.end());
    const auto doubled = forward(s, dup);
    for (std::size_t i = 0; i < base.size(); ++i) {
        EXPECT_FLOAT_EQ(doubled[i], base[i]);
        EXPECT_FLOAT_EQ(doubled[i + base.size()], base[i]);
    }
}

TEST(Network, DuplicatedTrainBatchKeepsLoss) {
    const ModelConfig cfg = tiny_config();
    const ParamState s = init_model(cfg, 6);
    const Batch b = random_batch(cfg, 4, 7);
    Batch dup = b;
    dup.n = 8;
    dup.data.insert(dup.data.end(), b.data.begin(), b.data.end());
    const std::vector<int> labels{0, 1, 2, 1};
    std::vector<int> labels2 = labels;
    labels2.insert(labels2.end(), labels.begin(), labels.end());
    EXPECT_NEAR(loss_and_grad(s, dup, labels2).loss, loss_and_grad(s, b, labels).loss, 1e-5);
}

TEST(Network, InitIsDeterministicAndScaled) {
    const ModelConfig cfg = tiny_config();
    const ParamState a = init_model(cfg, 42), b = init_model(cfg, 42), c = init_model(cfg, 43);
    ASSERT_EQ(a.params.size(), 3u + 6u * cfg.n_blocks + 2u);
    EXPECT_EQ(a.buffers.size(), 2u * (1 + 2 * cfg.n_blocks));
    for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_EQ(a.params[i].data, b.params[i].data);
    EXPECT_NE(a.param("stem.conv.weight").data, c.param("stem.conv.weight").data);
    for (float v : a.param("head.bias").data) EXPECT_EQ(v, 0.0f);
    for (float v : a.param("stem.bn.beta").data) EXPECT_EQ(v, 0.0f);
    for (float v : a.param("stem.bn.gamma").data) EXPECT_EQ(v, 1.0f);
    const float bound = std::sqrt(6.0f / (3 * 9));
    for (float v : a.param("stem.conv.weight").data) EXPECT_LE(std::abs(v), bound);
    EXPECT_EQ(a.param("block2.conv1.weight").shape, (std::vector<int>{16, 8, 3, 3}));
    EXPECT_THROW(a.param("nope"), ArgumentError);
}

TEST(Network, ShapeMismatchThrows) {
    const ModelConfig cfg = tiny_config();
    const ParamState s = init_model(cfg, 1);
    Batch b = random_batch(cfg, 2, 1);
    b.height = b.width = 7;
    EXPECT_THROW(forward(s, b), ArgumentError);
    const Batch ok = random_batch(cfg, 2, 1);
    EXPECT_THROW(loss_and_grad(s, ok, std::vector<int>{0}), ArgumentError);
    EXPECT_THROW(loss_and_grad(s, ok, std::vector<int>{0, 3}), ArgumentError);
    ModelConfig bad = cfg;
    bad.n_classes = 1;
    EXPECT_THROW(init_model(bad, 0), ArgumentError);
}

TEST(Network, ArgmaxTiesTowardSmallestId) {
    const std::vector<float> logits{1, 3, 3, 0, 0, 0, -1, -2, 5};
    EXPECT_EQ(argmax_rows(logits, 3), (std::vector<int>{1, 0, 2}));
}

TEST(Network, SpatialSizesHalvePerLaterBlock) {
    ModelConfig cfg;
    cfg.input_size = 16;
    EXPECT_EQ(cfg.block_size(0), 16);
    EXPECT_EQ(cfg.block_size(1), 8);
    EXPECT_EQ(cfg.block_size(2), 4);
    cfg.input_size = 7;
    EXPECT_EQ(cfg.block_size(1), 4);
}
