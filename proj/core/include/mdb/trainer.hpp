#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "mdb/diversity.hpp"
#include "mdb/network.hpp"
#include "mdb/synthgrid.hpp"

namespace mdb {

struct OptimizerHyper {
    double learning_rate = 0.005;
    int batch_size = 512;
    double weight_decay = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 25;
    double lr_decay_factor = 0.1;
    int lr_decay_every = 5;

    void validate() const;  // throws ConfigError
    bool operator==(const OptimizerHyper&) const = default;
};

/// learning_rate * lr_decay_factor^floor(epoch / lr_decay_every).
double lr_at(int epoch, const OptimizerHyper& hyper);

/// One AdamW update with bias correction and decoupled weight decay.
/// Increments state.step before computing the correction terms.
void adamw_step(ParamState& state, const std::vector<std::vector<float>>& grads, const OptimizerHyper& hyper,
                double lr_now);

struct TrainReport {
    std::vector<double> train_loss;  // mean mini-batch loss per epoch
    std::vector<double> val_metric;  // validation cell-macro recall per epoch
    int selected_epoch = 0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    ParamState params;  // snapshot at the selected epoch
    TrainReport report;
};

/// Mini-batch AdamW over the plan's train uids. After each epoch the model is
/// scored on the plan's val uids (mean recall over cells with val samples) and
/// the best epoch is kept, ties to the earliest. With no val samples the last
/// epoch is kept. Throws ConfigError if the plan has no train samples.
TrainResult train(const DatasetGrid& grid, const SplitPlan& plan, const ModelConfig& model,
                  const OptimizerHyper& hyper, std::uint64_t seed, const PreprocessSpec& preprocess = {});

/// Stacks preprocessed samples into an NCHW batch.
Batch make_batch(std::span<const Sample* const> samples, const PreprocessSpec& spec, PreprocessMode mode,
                 std::uint64_t draw = 0);

/// Eval-mode predictions in chunks of `chunk` samples.
std::vector<int> predict_samples(const ParamState& params, std::span<const Sample* const> samples,
                                 const PreprocessSpec& spec, int chunk = 256);

// ---- Checkpoints -----------------------------------------------------------
// Layout (little-endian):
//   "MDBCKPT\0"  u32 version
//   i32 input_size, channels, stem_width, n_blocks, n_classes
//   i64 step, i32 epoch, u32 tensor_count
//   per tensor (params then buffers, declaration order):
//     u32 name_len, name bytes, u32 rank, i32 dims[rank], f32 data[numel]
// Optimizer moments are not stored; they are zero after loading.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamState& params, const std::filesystem::path& path);
ParamState load_checkpoint(const std::filesystem::path& path);  // throws LoadError

}  // namespace mdb
