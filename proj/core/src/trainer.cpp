#include "mdb/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mdb/error.hpp"
#include "mdb/metrics.hpp"
#include "mdb/rng.hpp"

namespace mdb {

void OptimizerHyper::validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must lie in [0, 1)");
    if (!(eps > 0)) throw ConfigError("eps must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr_decay_factor > 0)) throw ConfigError("lr_decay_factor must be positive");
    if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
}

double lr_at(int epoch, const OptimizerHyper& hyper) {
    return hyper.learning_rate * std::pow(hyper.lr_decay_factor, epoch / hyper.lr_decay_every);
}

void adamw_step(ParamState& state, const std::vector<std::vector<float>>& grads, const OptimizerHyper& hyper,
                double lr_now) {
    if (grads.size() != state.params.size()) throw ArgumentError("adamw_step: gradient count mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        std::vector<float>& w = state.params[i].data;
        std::vector<float>& m = state.m[i].data;
        std::vector<float>& v = state.v[i].data;
        const std::vector<float>& g = grads[i];
        if (g.size() != w.size()) throw ArgumentError("adamw_step: shape mismatch for " + state.params[i].name);
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double mj = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
            const double vj = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * static_cast<double>(g[j]) * g[j];
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            w[j] = static_cast<float>(w[j] - lr_now * (mhat / (std::sqrt(vhat) + hyper.eps) + hyper.weight_decay * w[j]));
        }
    }
}

Batch make_batch(std::span<const Sample* const> samples, const PreprocessSpec& spec, PreprocessMode mode,
                 std::uint64_t draw) {
    Batch b;
    b.n = static_cast<int>(samples.size());
    b.height = b.width = spec.target_size;
    b.channels = samples.empty() ? 3 : samples.front()->pixels.channels;
    b.data.reserve(b.n * b.image_numel());
    for (const Sample* s : samples) {
        const Sample p = preprocess(*s, spec, mode, draw);
        b.data.insert(b.data.end(), p.pixels.data.begin(), p.pixels.data.end());
    }
    return b;
}

std::vector<int> predict_samples(const ParamState& params, std::span<const Sample* const> samples,
                                 const PreprocessSpec& spec, int chunk) {
    std::vector<int> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); i += chunk) {
        const auto part = samples.subspan(i, std::min<std::size_t>(chunk, samples.size() - i));
        const std::vector<int> p = predict(params, make_batch(part, spec, PreprocessMode::Eval));
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

namespace {

std::vector<const Sample*> resolve(const DatasetGrid& grid, const SplitPlan& plan, bool train_side) {
    std::vector<const Sample*> out;
    for (const CellSplit& cell : plan.cells) {
        for (std::uint64_t uid : train_side ? cell.train : cell.val) {
            const Sample* s = grid.find(uid);
            if (!s) throw ConfigError("plan references uid " + std::to_string(uid) + " absent from the grid");
            out.push_back(s);
        }
    }
    return out;
}

double cell_macro_recall(const ParamState& params, std::span<const Sample* const> samples, const PreprocessSpec& spec,
                         int n_domains) {
    const std::vector<int> pred = predict_samples(params, samples, spec);
    std::vector<int> cls, dom;
    for (const Sample* s : samples) {
        cls.push_back(s->class_id);
        dom.push_back(s->domain_id);
    }
    const CellRecallMatrix m = per_cell_recall(pred, cls, dom, params.config.n_classes, n_domains);
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < m.n_classes; ++c)
        for (int d = 0; d < m.n_domains; ++d)
            if (auto r = m.recall(c, d)) {
                sum += *r;
                ++n;
            }
    return n ? sum / n : 0.0;
}

}  // namespace

TrainResult train(const DatasetGrid& grid, const SplitPlan& plan, const ModelConfig& model,
                  const OptimizerHyper& hyper, std::uint64_t seed, const PreprocessSpec& preprocess) {
    const auto t0 = std::chrono::steady_clock::now();
    model.validate();
    hyper.validate();
    preprocess.validate();
    if (preprocess.target_size != model.input_size) {
        throw ConfigError("preprocess target_size " + std::to_string(preprocess.target_size) +
                          " differs from model input_size " + std::to_string(model.input_size));
    }
    if (model.n_classes < grid.n_classes()) {
        throw ConfigError("model has " + std::to_string(model.n_classes) + " outputs for a " +
                          std::to_string(grid.n_classes()) + "-class grid");
    }
    const std::vector<const Sample*> train_set = resolve(grid, plan, true);
    const std::vector<const Sample*> val_set = resolve(grid, plan, false);
    if (train_set.empty()) throw ConfigError("plan has no training samples");

    // Without augmentation the preprocessed training tensor never changes.
    const bool augment = preprocess.random_translate_max > 0;
    Batch fixed;
    if (!augment) fixed = make_batch(train_set, preprocess, PreprocessMode::Train);
    const std::size_t numel = static_cast<std::size_t>(model.channels) * model.input_size * model.input_size;

    TrainResult result{init_model(model, stream_key(seed, {tag(StreamTag::Init)})), {}};
    ParamState& state = result.params;
    ParamState best = state;
    double best_metric = -1.0;

    std::vector<std::size_t> order(train_set.size());
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        SplitMix64 rng(stream_key(seed, {tag(StreamTag::Shuffle), static_cast<std::uint64_t>(epoch)}));
        shuffle(order, rng);
        const double lr = lr_at(epoch, hyper);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += hyper.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + hyper.batch_size);
            Batch batch;
            if (augment) {
                std::vector<const Sample*> part;
                for (std::size_t i = b0; i < b1; ++i) part.push_back(train_set[order[i]]);
                batch = make_batch(part, preprocess, PreprocessMode::Train, static_cast<std::uint64_t>(epoch));
            } else {
                batch.n = static_cast<int>(b1 - b0);
                batch.channels = model.channels;
                batch.height = batch.width = model.input_size;
                batch.data.resize(batch.n * numel);
                for (std::size_t i = b0; i < b1; ++i)
                    std::copy_n(fixed.data.data() + order[i] * numel, numel, batch.data.data() + (i - b0) * numel);
            }
            std::vector<int> labels;
            for (std::size_t i = b0; i < b1; ++i) labels.push_back(train_set[order[i]]->class_id);
            LossAndGrad lg = loss_and_grad(state, batch, labels);
            update_running_stats(state, lg.batch_stats);
            adamw_step(state, lg.grads, hyper, lr);
            loss_sum += lg.loss;
            ++batches;
        }
        state.epoch = epoch + 1;
        result.report.train_loss.push_back(loss_sum / batches);

        if (val_set.empty()) {
            result.report.val_metric.push_back(0.0);
            best = state;
            result.report.selected_epoch = epoch;
            continue;
        }
        const double metric = cell_macro_recall(state, val_set, preprocess, grid.n_domains());
        result.report.val_metric.push_back(metric);
        if (metric > best_metric) {
            best_metric = metric;
            best = state;
            result.report.selected_epoch = epoch;
        }
    }
    result.params = std::move(best);
    result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace mdb
