#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mdb {

/// Compact residual classifier: 3x3 conv stem (+BN, ReLU), then n_blocks
/// residual blocks of two 3x3 convs with identity shortcuts. Block i has
/// width stem_width * 2^i; blocks after the first downsample by stride 2 and
/// their shortcut subsamples and zero-pads channels. Head: global average
/// pool + affine layer.
struct ModelConfig {
    int input_size = 16;
    int channels = 3;
    int stem_width = 16;
    int n_blocks = 3;
    int n_classes = 10;

    void validate() const;  // throws ArgumentError
    int block_width(int block) const { return stem_width << block; }
    int block_size(int block) const;  // spatial side after the block
    bool operator==(const ModelConfig&) const = default;
};

struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;

    std::size_t numel() const { return data.size(); }
};

/// Trainable parameters, normalization buffers and AdamW state.
struct ParamState {
    ModelConfig config;
    std::vector<Tensor> params;   // declaration order
    std::vector<Tensor> buffers;  // BN running mean / var, declaration order
    std::vector<Tensor> m;        // first moments, shape-matched to params
    std::vector<Tensor> v;        // second moments
    std::int64_t step = 0;
    int epoch = 0;

    std::size_t parameter_count() const;
    const Tensor& param(const std::string& name) const;
    Tensor& param(const std::string& name);
};

/// NCHW image batch.
struct Batch {
    int n = 0;
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    std::size_t image_numel() const { return static_cast<std::size_t>(channels) * height * width; }
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Fan-in scaled uniform init: conv weights U(+-sqrt(6/fan_in)), head weights
/// U(+-1/sqrt(fan_in)); BN gamma 1, all betas and biases 0; running var 1.
ParamState init_model(const ModelConfig& config, std::uint64_t seed);

/// Inference-mode logits, row-major [n][n_classes]. BN uses running stats,
/// so rows do not depend on each other.
std::vector<float> forward(const ParamState& params, const Batch& batch);

/// argmax per row, ties toward the smallest class id.
std::vector<int> argmax_rows(std::span<const float> logits, int n_classes);
std::vector<int> predict(const ParamState& params, const Batch& batch);

struct BatchNormStats {
    std::vector<std::vector<double>> mean;  // per BN layer
    std::vector<std::vector<double>> var;   // unbiased
};

struct LossAndGrad {
    double loss = 0.0;
    std::vector<std::vector<float>> grads;  // aligned with ParamState::params
    BatchNormStats batch_stats;
};

/// Training-mode (batch-statistics) mean cross-entropy and its exact gradient.
LossAndGrad loss_and_grad(const ParamState& params, const Batch& batch, std::span<const int> labels);

/// Blends batch statistics into the running buffers with kBatchNormMomentum.
void update_running_stats(ParamState& params, const BatchNormStats& stats);

// ---- 64-bit shadow path (gradient checking) --------------------------------

struct ParamsF64 {
    ModelConfig config;
    std::vector<std::vector<double>> params;
    std::vector<std::vector<double>> buffers;
};

ParamsF64 to_f64(const ParamState& params);
std::vector<double> to_f64(const Batch& batch);

double loss_f64(const ParamsF64& params, std::span<const double> images, int n,
                std::span<const int> labels);
std::vector<std::vector<double>> grad_f64(const ParamsF64& params, std::span<const double> images, int n,
                                          std::span<const int> labels, double* loss = nullptr);

}  // namespace mdb
