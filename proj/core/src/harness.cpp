#include "mdb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"
#include "mdb/digest.hpp"
#include "mdb/error.hpp"

namespace mdb {

using nlohmann::json;
using nlohmann::ordered_json;

// ---- Files -------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ostringstream tmp_name;
    tmp_name << path.filename().string() << ".tmp." << std::this_thread::get_id();
    const std::filesystem::path tmp = path.parent_path() / tmp_name.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ResourceError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw ResourceError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// ---- Config --------------------------------------------------------------------

namespace {

constexpr std::pair<ModelScope, const char*> kScopeNames[] = {
    {ModelScope::MultiDomain, "multi"},
    {ModelScope::Specialized, "specialized"},
    {ModelScope::SpecializedUpsampled, "specialized_upsampled"},
};

const char* scope_name(ModelScope s) {
    for (const auto& [k, n] : kScopeNames)
        if (k == s) return n;
    return "?";
}

ModelKind to_kind(ModelScope s) {
    switch (s) {
        case ModelScope::MultiDomain:
            return ModelKind::MultiDomain;
        case ModelScope::Specialized:
            return ModelKind::Specialized;
        case ModelScope::SpecializedUpsampled:
            return ModelKind::SpecializedUpsampled;
    }
    return ModelKind::MultiDomain;
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

GridConfig parse_grid(const json& j) {
    check_keys(j, {"n_classes", "n_domains", "image_size", "pool_sizes", "seed", "memory_budget_bytes"}, "dataset.grid");
    GridConfig g;
    read_opt(j, "n_classes", g.n_classes);
    read_opt(j, "n_domains", g.n_domains);
    read_opt(j, "image_size", g.image_size);
    read_opt(j, "seed", g.seed);
    read_opt(j, "memory_budget_bytes", g.memory_budget_bytes);
    if (j.contains("pool_sizes")) {
        const json& p = j.at("pool_sizes");
        check_keys(p, {"train", "val", "test", "reserve"}, "dataset.grid.pool_sizes");
        for (Pool pool : kAllPools) read_opt(p, std::string(pool_name(pool)).c_str(), g.pool_sizes[static_cast<int>(pool)]);
    }
    return g;
}

ordered_json grid_json(const GridConfig& g) {
    ordered_json pools;
    for (Pool p : kAllPools) pools[std::string(pool_name(p))] = g.pool_size(p);
    return {{"n_classes", g.n_classes}, {"n_domains", g.n_domains}, {"image_size", g.image_size},
            {"pool_sizes", pools}, {"seed", g.seed}, {"memory_budget_bytes", g.memory_budget_bytes}};
}

ordered_json dataset_json(const DatasetSource& d) {
    static const char* names[] = {"synthetic", "manifest", "grouped", "uniform_resample"};
    ordered_json j;
    j["source"] = names[static_cast<int>(d.kind)];
    if (d.manifest) {
        j["manifest"] = d.manifest->string();
    } else {
        j["grid"] = grid_json(d.grid);
    }
    if (d.kind == DatasetSource::Kind::Grouped) {
        j["grouping"] = d.grouping;
        j["source_domains"] = d.source_domains;
    }
    if (d.kind == DatasetSource::Kind::UniformResample) {
        j["per_cell_train"] = d.per_cell_train;
        j["per_cell_val"] = d.per_cell_val;
        j["resample_seed"] = d.resample_seed;
    }
    return j;
}

ordered_json setup_json(const ExperimentConfig& c) {
    const OptimizerHyper& o = c.optimizer;
    ordered_json j;
    j["dataset"] = dataset_json(c.dataset);
    j["model"] = {{"stem_width", c.model.stem_width}, {"n_blocks", c.model.n_blocks}};
    j["optimizer"] = {{"learning_rate", o.learning_rate}, {"batch_size", o.batch_size},
                      {"weight_decay", o.weight_decay},   {"beta1", o.beta1},
                      {"beta2", o.beta2},                 {"eps", o.eps},
                      {"epochs", o.epochs},               {"lr_decay_factor", o.lr_decay_factor},
                      {"lr_decay_every", o.lr_decay_every}};
    j["preprocess"] = {{"target_size", c.preprocess.target_size},
                       {"center_crop", c.preprocess.center_crop},
                       {"random_translate_max", c.preprocess.random_translate_max},
                       {"augment_seed", c.preprocess.augment_seed}};
    j["train_val_ratio"] = c.train_val_ratio;
    j["upsample_factor"] = c.upsample_factor;
    j["evaluate_on"] = c.evaluate_on_val ? "val" : "test";
    return j;
}

std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return path;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (model_kinds.empty()) throw ConfigError("at least one model kind is required");
    if (ood_levels.empty()) throw ConfigError("at least one OOD level is required");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    for (int level : ood_levels) {
        if (std::find(kOodLevels.begin(), kOodLevels.end(), level) == kOodLevels.end())
            throw ConfigError("OOD level " + std::to_string(level) + " is not one of 0,25,50,75,85,95,100");
    }
    if (amount.kind == AmountKind::Distribution && amount.distribution_indices.empty())
        throw ConfigError("distribution amount needs at least one index");
    if (amount.kind == AmountKind::Percentage && amount.percentages.empty())
        throw ConfigError("percentage amount needs at least one value");
    for (int p : amount.percentages)
        if (std::find(kSamplingPercentages.begin(), kSamplingPercentages.end(), p) == kSamplingPercentages.end())
            throw ConfigError("sampling percentage " + std::to_string(p) + " is not supported");
    if (!(train_val_ratio > 0 && train_val_ratio <= 1)) throw ConfigError("train_val_ratio must lie in (0, 1]");
    if (upsample_factor < 0) throw ConfigError("upsample_factor must be >= 0");
    if (dataset.manifest && !std::filesystem::exists(*dataset.manifest))
        throw ConfigError("manifest " + dataset.manifest->string() + " does not exist");
    try {
        optimizer.validate();
        preprocess.validate();
        if (!dataset.manifest) dataset.grid.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        check_keys(j,
                   {"schema_version", "dataset", "model_kinds", "amount", "ood_levels", "cells", "seeds", "model",
                    "optimizer", "preprocess", "train_val_ratio", "upsample_factor", "evaluate_on", "output_dir"},
                   "config");
        if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kConfigSchemaVersion)
            throw ConfigError("config schema_version must be " + std::to_string(kConfigSchemaVersion));
        ExperimentConfig c;

        const json& d = j.at("dataset");
        check_keys(d, {"source", "grid", "manifest", "grouping", "source_domains", "per_cell_train", "per_cell_val",
                       "resample_seed"},
                   "dataset");
        const std::string source = d.value("source", "synthetic");
        if (source == "synthetic") {
            c.dataset.kind = DatasetSource::Kind::Synthetic;
        } else if (source == "manifest") {
            c.dataset.kind = DatasetSource::Kind::Manifest;
        } else if (source == "grouped") {
            c.dataset.kind = DatasetSource::Kind::Grouped;
        } else if (source == "uniform_resample") {
            c.dataset.kind = DatasetSource::Kind::UniformResample;
        } else {
            throw ConfigError("unknown dataset source '" + source + "'");
        }
        if (d.contains("grid")) c.dataset.grid = parse_grid(d.at("grid"));
        if (d.contains("manifest")) c.dataset.manifest = resolve_path(d.at("manifest").get<std::string>(), base_dir);
        if (c.dataset.kind == DatasetSource::Kind::Manifest && !c.dataset.manifest)
            throw ConfigError("manifest source needs a 'manifest' path");
        read_opt(d, "grouping", c.dataset.grouping);
        read_opt(d, "source_domains", c.dataset.source_domains);
        read_opt(d, "per_cell_train", c.dataset.per_cell_train);
        read_opt(d, "per_cell_val", c.dataset.per_cell_val);
        read_opt(d, "resample_seed", c.dataset.resample_seed);

        if (j.contains("model_kinds")) {
            c.model_kinds.clear();
            for (const auto& k : j.at("model_kinds")) {
                const std::string name = k.get<std::string>();
                auto it = std::find_if(std::begin(kScopeNames), std::end(kScopeNames),
                                       [&](const auto& p) { return name == p.second; });
                if (it == std::end(kScopeNames)) throw ConfigError("unknown model kind '" + name + "'");
                c.model_kinds.push_back(it->first);
            }
            std::sort(c.model_kinds.begin(), c.model_kinds.end());
            c.model_kinds.erase(std::unique(c.model_kinds.begin(), c.model_kinds.end()), c.model_kinds.end());
        }

        if (j.contains("amount")) {
            const json& a = j.at("amount");
            check_keys(a, {"type", "indices", "scale", "values"}, "amount");
            const std::string type = a.value("type", "full");
            if (type == "distribution") {
                c.amount.kind = AmountKind::Distribution;
                read_opt(a, "indices", c.amount.distribution_indices);
                read_opt(a, "scale", c.amount.scale);
            } else if (type == "percentage") {
                c.amount.kind = AmountKind::Percentage;
                read_opt(a, "values", c.amount.percentages);
            } else if (type == "full") {
                c.amount.kind = AmountKind::Full;
            } else {
                throw ConfigError("unknown amount type '" + type + "'");
            }
        }
        read_opt(j, "ood_levels", c.ood_levels);
        if (j.contains("cells") && !(j.at("cells").is_string() && j.at("cells").get<std::string>() == "all")) {
            std::vector<CellIndex> cells;
            for (const auto& cell : j.at("cells")) {
                if (!cell.is_array() || cell.size() != 2) throw ConfigError("cells entries must be [class, domain]");
                cells.push_back({cell[0].get<int>(), cell[1].get<int>()});
            }
            std::sort(cells.begin(), cells.end());
            cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
            c.cells = cells;
        }
        read_opt(j, "seeds", c.seeds);

        if (j.contains("model")) {
            const json& m = j.at("model");
            check_keys(m, {"stem_width", "n_blocks"}, "model");
            read_opt(m, "stem_width", c.model.stem_width);
            read_opt(m, "n_blocks", c.model.n_blocks);
        }
        if (j.contains("optimizer")) {
            const json& o = j.at("optimizer");
            check_keys(o, {"learning_rate", "batch_size", "weight_decay", "beta1", "beta2", "eps", "epochs",
                           "lr_decay_factor", "lr_decay_every"},
                       "optimizer");
            OptimizerHyper& h = c.optimizer;
            read_opt(o, "learning_rate", h.learning_rate);
            read_opt(o, "batch_size", h.batch_size);
            read_opt(o, "weight_decay", h.weight_decay);
            read_opt(o, "beta1", h.beta1);
            read_opt(o, "beta2", h.beta2);
            read_opt(o, "eps", h.eps);
            read_opt(o, "epochs", h.epochs);
            read_opt(o, "lr_decay_factor", h.lr_decay_factor);
            read_opt(o, "lr_decay_every", h.lr_decay_every);
        }
        c.preprocess.target_size = c.dataset.manifest ? 16 : c.dataset.grid.image_size;
        if (j.contains("preprocess")) {
            const json& p = j.at("preprocess");
            check_keys(p, {"target_size", "center_crop", "random_translate_max", "augment_seed"}, "preprocess");
            read_opt(p, "target_size", c.preprocess.target_size);
            read_opt(p, "center_crop", c.preprocess.center_crop);
            read_opt(p, "random_translate_max", c.preprocess.random_translate_max);
            read_opt(p, "augment_seed", c.preprocess.augment_seed);
        }
        read_opt(j, "train_val_ratio", c.train_val_ratio);
        read_opt(j, "upsample_factor", c.upsample_factor);
        if (j.contains("evaluate_on")) {
            const std::string e = j.at("evaluate_on").get<std::string>();
            if (e != "test" && e != "val") throw ConfigError("evaluate_on must be 'test' or 'val'");
            c.evaluate_on_val = e == "val";
        }
        if (j.contains("output_dir")) c.output_dir = resolve_path(j.at("output_dir").get<std::string>(), base_dir);
        c.model.input_size = c.preprocess.target_size;
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field has the wrong type: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const LoadError& e) {
        throw ConfigError(e.what());
    }
    return parse_config(text, path.parent_path());
}

std::string config_to_json(const ExperimentConfig& c) {
    ordered_json j;
    j["schema_version"] = kConfigSchemaVersion;
    const ordered_json setup = setup_json(c);
    j["dataset"] = setup["dataset"];
    json kinds = json::array();
    for (ModelScope s : c.model_kinds) kinds.push_back(scope_name(s));
    j["model_kinds"] = kinds;
    switch (c.amount.kind) {
        case AmountKind::Distribution:
            j["amount"] = {{"type", "distribution"}, {"indices", c.amount.distribution_indices}, {"scale", c.amount.scale}};
            break;
        case AmountKind::Percentage:
            j["amount"] = {{"type", "percentage"}, {"values", c.amount.percentages}};
            break;
        default:
            j["amount"] = {{"type", "full"}};
    }
    j["ood_levels"] = c.ood_levels;
    if (c.cells) {
        json cells = json::array();
        for (const CellIndex& cell : *c.cells) cells.push_back({cell.class_id, cell.domain_id});
        j["cells"] = cells;
    } else {
        j["cells"] = "all";
    }
    j["seeds"] = c.seeds;
    for (const char* key : {"model", "optimizer", "preprocess", "train_val_ratio", "upsample_factor", "evaluate_on"})
        j[key] = setup[key];
    j["output_dir"] = c.output_dir.string();
    return j.dump(2) + "\n";
}

std::string setup_digest(const ExperimentConfig& config) { return to_hex(digest_of(setup_json(config).dump())); }

// ---- Datasets ------------------------------------------------------------------

ResolvedDataset resolve_dataset(const DatasetSource& source) {
    auto base = [&]() { return source.manifest ? load_manifest(*source.manifest) : build_grid(source.grid); };
    ResolvedDataset out;
    switch (source.kind) {
        case DatasetSource::Kind::Synthetic:
        case DatasetSource::Kind::Manifest:
            out.variants.push_back(base());
            break;
        case DatasetSource::Kind::UniformResample:
            out.variants.push_back(
                uniform_resample(base(), source.per_cell_train, source.per_cell_val, source.resample_seed));
            break;
        case DatasetSource::Kind::Grouped: {
            const DatasetGrid grid = base();
            const auto grouping = source.grouping.empty() ? default_grouping(grid.n_classes()) : source.grouping;
            std::vector<int> domains = source.source_domains;
            if (domains.empty())
                for (int d = 0; d < grid.n_domains(); ++d) domains.push_back(d);
            for (int d : domains) out.variants.push_back(grouped_domain_control(grid, grouping, d));
            break;
        }
    }
    out.n_classes = out.variants.front().n_classes();
    out.n_domains = out.variants.front().n_domains();
    return out;
}

// ---- Expansion -----------------------------------------------------------------

std::string ExperimentSpec::amount_label() const {
    switch (amount_kind) {
        case AmountKind::Distribution:
            return "distribution:" + std::to_string(amount_value);
        case AmountKind::Percentage:
            return "percentage:" + std::to_string(amount_value);
        case AmountKind::UniformResample:
            return "uniform_resample";
        case AmountKind::Full:
            break;
    }
    return "full";
}

std::string ExperimentSpec::id(const std::string& setup) const {
    std::ostringstream s;
    s << "setup=" << setup << ";variant=" << variant << ";kind=" << kind.str() << ";amount=" << amount_label()
      << ";cell=" << ood.cell.class_id << "," << ood.cell.domain_id << ";level=" << ood.level_pct
      << ";seed=" << seed;
    return to_hex(digest_of(s.str()));
}

std::vector<ExperimentSpec> expand(const ExperimentConfig& config, int n_classes, int n_domains, int n_variants) {
    config.validate();
    std::vector<CellIndex> cells = config.cells ? *config.cells : all_cells(n_classes, n_domains);
    for (const CellIndex& cell : cells) {
        if (cell.class_id < 0 || cell.class_id >= n_classes || cell.domain_id < 0 || cell.domain_id >= n_domains)
            throw ConfigError("cell (" + std::to_string(cell.class_id) + ", " + std::to_string(cell.domain_id) +
                              ") is outside the " + std::to_string(n_classes) + "x" + std::to_string(n_domains) +
                              " grid");
    }
    std::vector<std::pair<AmountKind, int>> amounts;
    switch (config.amount.kind) {
        case AmountKind::Distribution:
            for (int i : config.amount.distribution_indices) {
                if (i < 0 || i >= 24) throw ConfigError("distribution index " + std::to_string(i) + " out of [0, 24)");
                amounts.emplace_back(AmountKind::Distribution, i);
            }
            break;
        case AmountKind::Percentage:
            for (int p : config.amount.percentages) amounts.emplace_back(AmountKind::Percentage, p);
            break;
        default:
            amounts.emplace_back(AmountKind::Full, 0);
    }
    std::vector<ModelKindRef> kinds;
    for (ModelScope s : config.model_kinds) {
        if (s == ModelScope::MultiDomain) {
            kinds.push_back({ModelKind::MultiDomain, -1});
        } else {
            for (int d = 0; d < n_domains; ++d) kinds.push_back({to_kind(s), d});
        }
    }
    if (n_variants < 1) throw ConfigError("dataset has no variants");
    std::vector<ExperimentSpec> out;
    for (int v = 0; v < n_variants; ++v)
        for (const auto& [kind, value] : amounts)
            for (const ModelKindRef& k : kinds)
                for (int level : config.ood_levels)
                    for (const CellIndex& cell : cells)
                        for (std::uint64_t seed : config.seeds)
                            out.push_back({v, k, kind, value, {cell, level}, seed});
    auto key = [](const ExperimentSpec& s) {
        return std::make_tuple(s.variant, s.amount_kind, s.amount_value, s.kind, s.ood.level_pct, s.ood.cell, s.seed);
    };
    std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
    out.erase(std::unique(out.begin(), out.end(), [&](const auto& a, const auto& b) { return key(a) == key(b); }),
              out.end());
    return out;
}

double amount_x(const ExperimentConfig& config, const ExperimentSpec& spec, int n_classes, int n_domains) {
    if (spec.amount_kind == AmountKind::Distribution) {
        const auto specs = distribution_grid(config.amount.scale, n_classes, n_domains);
        return count_median(cell_counts(specs.at(spec.amount_value), n_classes, n_domains));
    }
    if (spec.amount_kind == AmountKind::Percentage) return spec.amount_value;
    return 0.0;
}

SplitPlan build_plan(const ExperimentConfig& config, const ExperimentSpec& spec, const DatasetGrid& grid) {
    const int nc = grid.n_classes(), nd = grid.n_domains();
    SplitPlan plan;
    switch (spec.amount_kind) {
        case AmountKind::Distribution: {
            const auto specs = distribution_grid(config.amount.scale, nc, nd);
            plan = sample_split(grid, cell_counts(specs.at(spec.amount_value), nc, nd), config.train_val_ratio,
                                spec.seed);
            plan.provenance.distribution = specs.at(spec.amount_value);
            break;
        }
        case AmountKind::Percentage:
            plan = percentage_split(grid, spec.amount_value, spec.seed);
            break;
        default:
            plan = full_split(grid, spec.seed);
    }
    plan = apply_ood(plan, spec.ood, spec.seed);
    switch (spec.kind.kind) {
        case ModelKind::Specialized:
            plan = restrict_to_domain(plan, spec.kind.domain);
            break;
        case ModelKind::SpecializedUpsampled:
            plan = upsample_specialized(plan, spec.kind.domain, config.upsample_factor > 0 ? config.upsample_factor : nd,
                                        grid);
            break;
        default:
            break;
    }
    return plan;
}

std::uint64_t plan_content_digest(const SplitPlan& plan) {
    Fnv1a h;
    h.update_u64(static_cast<std::uint64_t>(plan.n_classes));
    h.update_u64(static_cast<std::uint64_t>(plan.n_domains));
    for (const CellSplit& cell : plan.cells) {
        h.update_u64(cell.train.size());
        for (std::uint64_t u : cell.train) h.update_u64(u);
        h.update_u64(cell.val.size());
        for (std::uint64_t u : cell.val) h.update_u64(u);
    }
    return h.value();
}

// ---- Ledger --------------------------------------------------------------------

namespace {

const char* status_name(LedgerStatus s) {
    switch (s) {
        case LedgerStatus::Pending:
            return "pending";
        case LedgerStatus::Done:
            return "done";
        case LedgerStatus::Failed:
            return "failed";
    }
    return "?";
}

}  // namespace

std::string RunLedger::to_json() const {
    ordered_json j;
    j["schema"] = "mdb.ledger/1";
    ordered_json e = ordered_json::object();
    for (const auto& [id, entry] : entries) {
        ordered_json x;
        x["status"] = status_name(entry.status);
        if (!entry.digest.empty()) x["digest"] = entry.digest;
        if (!entry.error.empty()) x["error"] = entry.error;
        e[id] = x;
    }
    j["entries"] = e;
    return j.dump(1) + "\n";
}

RunLedger RunLedger::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("schema").get<std::string>() != "mdb.ledger/1") throw LoadError("unsupported ledger schema");
        RunLedger l;
        for (const auto& [id, x] : j.at("entries").items()) {
            LedgerEntry e;
            const std::string s = x.at("status").get<std::string>();
            e.status = s == "done" ? LedgerStatus::Done : s == "failed" ? LedgerStatus::Failed : LedgerStatus::Pending;
            e.digest = x.value("digest", "");
            e.error = x.value("error", "");
            l.entries[id] = e;
        }
        return l;
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed ledger: ") + e.what());
    }
}

// ---- Running -------------------------------------------------------------------

std::filesystem::path effective_output_dir(const ExperimentConfig& config) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
        return std::filesystem::path(root) / config.output_dir.filename();
    }
    return config.output_dir;
}

namespace {

struct TrainOutcome {
    std::vector<int> predictions;  // aligned with the eval sample list
    int selected_epoch = 0;
    std::vector<double> train_loss;
    std::vector<double> val_metric;
    bool from_cache = false;
};

std::vector<const Sample*> eval_samples(const DatasetGrid& grid, Pool pool, int skip_domain = -1) {
    std::vector<const Sample*> out;
    for (int c = 0; c < grid.n_classes(); ++c)
        for (int d = 0; d < grid.n_domains(); ++d) {
            if (d == skip_domain) continue;
            for (const Sample& s : grid.pool(c, d, pool)) out.push_back(&s);
        }
    return out;
}

std::string predictions_csv(const std::string& experiment_id, std::span<const Sample* const> samples,
                            std::span<const int> preds) {
    std::string out = "experiment_id,uid,true_class,true_domain,pred_class\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out += experiment_id + "," + to_hex(samples[i]->uid) + "," + std::to_string(samples[i]->class_id) + "," +
               std::to_string(samples[i]->domain_id) + "," + std::to_string(preds[i]) + "\n";
    }
    return out;
}

std::string report_json(const TrainOutcome& t) {
    ordered_json j;
    j["selected_epoch"] = t.selected_epoch;
    j["train_loss"] = t.train_loss;
    j["val_metric"] = t.val_metric;
    return j.dump(1) + "\n";
}

std::optional<TrainOutcome> load_cached(const std::filesystem::path& dir, std::size_t n_eval) {
    const auto report = dir / "report.json";
    if (!std::filesystem::exists(report)) return std::nullopt;
    try {
        const json j = json::parse(read_file(report));
        TrainOutcome t;
        t.selected_epoch = j.at("selected_epoch").get<int>();
        t.train_loss = j.at("train_loss").get<std::vector<double>>();
        t.val_metric = j.at("val_metric").get<std::vector<double>>();
        std::istringstream in(read_file(dir / "eval.csv"));
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) t.predictions.push_back(std::stoi(line));
        if (t.predictions.size() != n_eval) return std::nullopt;
        t.from_cache = true;
        return t;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

class Runner {
public:
    Runner(const ExperimentConfig& config, const RunOptions& options)
        : config_(config), options_(options), out_(effective_output_dir(config)) {}

    RunStats run() {
        dataset_ = resolve_dataset(config_.dataset);
        model_ = config_.model;
        model_.n_classes = dataset_.n_classes;
        setup_ = setup_digest(config_);
        std::vector<std::uint64_t> digests_before;
        for (const DatasetGrid& g : dataset_.variants) digests_before.push_back(test_pool_digest(g));

        specs_ = expand(config_, dataset_.n_classes, dataset_.n_domains, static_cast<int>(dataset_.variants.size()));
        std::filesystem::create_directories(out_ / "records");
        std::filesystem::create_directories(out_ / "predictions");
        std::filesystem::create_directories(out_ / "cache");
        write_atomic(out_ / "config.json", config_to_json(config_));

        RunLedger previous;
        if (options_.resume && std::filesystem::exists(out_ / "ledger.json"))
            previous = RunLedger::from_json(read_file(out_ / "ledger.json"));
        std::vector<std::size_t> todo;
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            const std::string id = specs_[i].id(setup_);
            auto it = previous.entries.find(id);
            const auto record = out_ / "records" / (id + ".json");
            if (it != previous.entries.end() && it->second.status == LedgerStatus::Done &&
                std::filesystem::exists(record) && to_hex(digest_of(read_file(record))) == it->second.digest) {
                ledger_.entries[id] = it->second;
                ++stats_.skipped;
                continue;
            }
            ledger_.entries[id] = LedgerEntry{};
            todo.push_back(i);
        }
        stats_.total = static_cast<int>(specs_.size());
        write_atomic(out_ / "ledger.json", ledger_.to_json());

        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t k = next.fetch_add(1);
                if (k >= todo.size()) return;
                execute(specs_[todo[k]]);
            }
        };
        const int n_workers = std::max(1, std::min<int>(options_.workers, static_cast<int>(todo.size())));
        std::vector<std::thread> pool;
        for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
        worker();
        for (std::thread& t : pool) t.join();

        for (std::size_t v = 0; v < dataset_.variants.size(); ++v) {
            if (test_pool_digest(dataset_.variants[v]) != digests_before[v])
                throw ResourceError("test pool of dataset variant " + std::to_string(v) + " changed during the sweep");
        }
        return stats_;
    }

private:
    Pool eval_pool() const { return config_.evaluate_on_val ? Pool::Val : Pool::Test; }

    void log(const std::string& msg) {
        if (!options_.log) return;
        std::lock_guard lock(log_mutex_);
        options_.log(msg);
    }

    TrainOutcome train_or_load(const std::string& key, const DatasetGrid& grid, const SplitPlan& plan,
                               std::uint64_t seed, std::span<const Sample* const> eval) {
        std::shared_future<TrainOutcome> fut;
        std::promise<TrainOutcome> promise;
        bool owner = false;
        {
            std::lock_guard lock(cache_mutex_);
            auto it = inflight_.find(key);
            if (it == inflight_.end()) {
                fut = promise.get_future().share();
                inflight_.emplace(key, fut);
                owner = true;
            } else {
                fut = it->second;
            }
        }
        if (!owner) {
            TrainOutcome t = fut.get();
            t.from_cache = true;
            return t;
        }
        try {
            const auto dir = out_ / "cache" / key;
            std::optional<TrainOutcome> cached = load_cached(dir, eval.size());
            if (!cached) {
                TrainResult r = train(grid, plan, model_, config_.optimizer, seed, config_.preprocess);
                TrainOutcome t;
                t.predictions = predict_samples(r.params, eval, config_.preprocess);
                t.selected_epoch = r.report.selected_epoch;
                t.train_loss = r.report.train_loss;
                t.val_metric = r.report.val_metric;
                std::filesystem::create_directories(dir);
                save_checkpoint(r.params, dir / "model.ckpt.tmp");
                std::filesystem::rename(dir / "model.ckpt.tmp", dir / "model.ckpt");
                std::string preds;
                for (int p : t.predictions) preds += std::to_string(p) + "\n";
                write_atomic(dir / "eval.csv", preds);
                write_atomic(dir / "report.json", report_json(t));
                cached = std::move(t);
            }
            promise.set_value(*cached);
            return *cached;
        } catch (...) {
            promise.set_exception(std::current_exception());
            throw;
        }
    }

    void execute(const ExperimentSpec& spec) {
        const std::string id = spec.id(setup_);
        LedgerEntry entry;
        std::string note;
        try {
            const DatasetGrid& grid = dataset_.variants.at(spec.variant);
            const SplitPlan plan = build_plan(config_, spec, grid);
            const std::vector<const Sample*> eval = eval_samples(grid, eval_pool());
            const std::string key =
                to_hex(digest_of(setup_ + ";" + std::to_string(spec.variant) + ";" +
                                 to_hex(plan_content_digest(plan)) + ";" + std::to_string(spec.seed)));
            const TrainOutcome t = train_or_load(key, grid, plan, spec.seed, eval);

            std::vector<int> cls, dom;
            for (const Sample* s : eval) {
                cls.push_back(s->class_id);
                dom.push_back(s->domain_id);
            }
            ResultRecord r;
            r.experiment_id = id;
            r.variant = spec.variant;
            r.kind = spec.kind;
            r.amount = spec.amount_label();
            r.x = amount_x(config_, spec, grid.n_classes(), grid.n_domains());
            r.ood = spec.ood;
            r.seed = spec.seed;
            r.recall = per_cell_recall(t.predictions, cls, dom, grid.n_classes(), grid.n_domains());
            r.train_key = key;
            r.selected_epoch = t.selected_epoch;
            r.train_loss = t.train_loss;
            r.val_metric = t.val_metric;
            const std::string text = to_json(r);
            write_atomic(out_ / "predictions" / (id + ".csv"), predictions_csv(id, eval, t.predictions));
            write_atomic(out_ / "records" / (id + ".json"), text);
            entry.status = LedgerStatus::Done;
            entry.digest = to_hex(digest_of(text));
            note = t.from_cache ? " (cached)" : "";
        } catch (const std::exception& e) {
            entry.status = LedgerStatus::Failed;
            entry.error = e.what();
        }
        int finished;
        {
            std::lock_guard lock(ledger_mutex_);
            ledger_.entries[id] = entry;
            if (entry.status == LedgerStatus::Done) {
                ++stats_.ran;
                if (!note.empty()) ++stats_.cache_hits;
            } else {
                ++stats_.failed;
            }
            finished = stats_.ran + stats_.failed + stats_.skipped;
            write_atomic(out_ / "ledger.json", ledger_.to_json());
        }
        std::ostringstream msg;
        msg << "[" << finished << "/" << stats_.total << "] " << spec.kind.str() << " " << spec.amount_label()
            << " cell(" << spec.ood.cell.class_id << "," << spec.ood.cell.domain_id << ") level "
            << spec.ood.level_pct << " seed " << spec.seed << " variant " << spec.variant << ": "
            << (entry.status == LedgerStatus::Done ? "done" + note : "FAILED: " + entry.error);
        log(msg.str());
    }

    const ExperimentConfig& config_;
    const RunOptions& options_;
    std::filesystem::path out_;
    ResolvedDataset dataset_;
    ModelConfig model_;
    std::string setup_;
    std::vector<ExperimentSpec> specs_;
    RunLedger ledger_;
    RunStats stats_;
    std::mutex ledger_mutex_, cache_mutex_, log_mutex_;
    std::map<std::string, std::shared_future<TrainOutcome>> inflight_;
};

}  // namespace

RunStats run_sweep(const ExperimentConfig& config, const RunOptions& options) {
    Runner runner(config, options);
    return runner.run();
}

// ---- Summaries -----------------------------------------------------------------

std::vector<ResultRecord> load_records(const std::filesystem::path& output_dir) {
    std::vector<std::filesystem::path> files;
    const auto dir = output_dir / "records";
    if (std::filesystem::exists(dir))
        for (const auto& e : std::filesystem::directory_iterator(dir))
            if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<ResultRecord> out;
    for (const auto& f : files) out.push_back(record_from_json(read_file(f)));
    return out;
}

void summarize(const std::filesystem::path& output_dir) {
    const std::vector<ResultRecord> records = load_records(output_dir);
    const std::vector<Curve> curves = summarize_records(records);

    std::string summary = "x,metric,model_kind,ood_level,mean,std,n_seeds,auc\n";
    std::string auc = "ood_level,model_kind,metric,auc\n";
    std::string diff = "x,metric,ood_level,baseline,diff\n";
    std::string missing = "kind,detail\n";
    for (const Curve& c : curves) {
        const std::string auc_text = c.auc ? format_float(*c.auc) : "";
        for (const CurvePoint& p : c.points) {
            summary += format_float(p.x) + "," + c.metric + "," + c.model_kind + "," + std::to_string(c.ood_level) +
                       "," + format_float(p.stats.mean) + "," + format_float(p.stats.std) + "," +
                       std::to_string(p.stats.n) + "," + auc_text + "\n";
        }
        if (c.auc)
            auc += std::to_string(c.ood_level) + "," + c.model_kind + "," + c.metric + "," + auc_text + "\n";
    }
    for (const Curve& multi : curves) {
        if (multi.model_kind != "multi") continue;
        for (const Curve& base : curves) {
            if (base.metric != multi.metric || base.ood_level != multi.ood_level) continue;
            if (base.model_kind != "specialized" && base.model_kind != "specialized_upsampled") continue;
            try {
                for (const DiffPoint& d : model_difference(multi, base))
                    diff += format_float(d.x) + "," + multi.metric + "," + std::to_string(multi.ood_level) + "," +
                            base.model_kind + "," + format_float(d.value) + "\n";
            } catch (const ArgumentError& e) {
                missing += std::string("diff,") + multi.metric + " level " + std::to_string(multi.ood_level) +
                           " vs " + base.model_kind + ": " + e.what() + "\n";
            }
        }
    }
    if (std::filesystem::exists(output_dir / "ledger.json")) {
        const RunLedger ledger = RunLedger::from_json(read_file(output_dir / "ledger.json"));
        for (const auto& [id, e] : ledger.entries) {
            if (e.status == LedgerStatus::Done) continue;
            std::string detail = id + " " + status_name(e.status);
            if (!e.error.empty()) detail += ": " + e.error;
            std::replace(detail.begin(), detail.end(), ',', ';');
            std::replace(detail.begin(), detail.end(), '\n', ' ');
            missing += "experiment," + detail + "\n";
        }
    }
    std::filesystem::create_directories(output_dir);
    write_atomic(output_dir / "summary.csv", summary);
    write_atomic(output_dir / "auc.csv", auc);
    write_atomic(output_dir / "diff.csv", diff);
    write_atomic(output_dir / "missing.csv", missing);
}

int cross_domain_eval(const std::filesystem::path& output_dir) {
    const ExperimentConfig config = parse_config(read_file(output_dir / "config.json"));
    const ResolvedDataset dataset = resolve_dataset(config.dataset);
    const Pool pool = config.evaluate_on_val ? Pool::Val : Pool::Test;
    RunLedger ledger;
    if (std::filesystem::exists(output_dir / "ledger.json"))
        ledger = RunLedger::from_json(read_file(output_dir / "ledger.json"));

    int written = 0;
    for (const ResultRecord& r : load_records(output_dir)) {
        if (r.kind.kind != ModelKind::Specialized || r.ood.cell.domain_id != r.kind.domain) continue;
        const DatasetGrid& grid = dataset.variants.at(r.variant);
        const ParamState params = load_checkpoint(output_dir / "cache" / r.train_key / "model.ckpt");
        const std::vector<const Sample*> eval = eval_samples(grid, pool, r.kind.domain);
        const std::vector<int> preds = predict_samples(params, eval, config.preprocess);
        std::vector<int> cls, dom;
        for (const Sample* s : eval) {
            cls.push_back(s->class_id);
            dom.push_back(s->domain_id);
        }
        ResultRecord x = r;
        x.experiment_id = to_hex(digest_of(r.experiment_id + ";cross"));
        x.kind = {ModelKind::SpecializedCross, r.kind.domain};
        x.recall = per_cell_recall(preds, cls, dom, grid.n_classes(), grid.n_domains());
        const std::string text = to_json(x);
        write_atomic(output_dir / "predictions" / (x.experiment_id + ".csv"),
                     predictions_csv(x.experiment_id, eval, preds));
        write_atomic(output_dir / "records" / (x.experiment_id + ".json"), text);
        ledger.entries[x.experiment_id] = {LedgerStatus::Done, to_hex(digest_of(text)), ""};
        ++written;
    }
    write_atomic(output_dir / "ledger.json", ledger.to_json());
    return written;
}

}  // namespace mdb
