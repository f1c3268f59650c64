#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mdb/diversity.hpp"
#include "mdb/metrics.hpp"
#include "mdb/network.hpp"
#include "mdb/synthgrid.hpp"
#include "mdb/trainer.hpp"

namespace mdb {

inline constexpr int kConfigSchemaVersion = 1;
/// Overrides ExperimentConfig::output_dir when set.
inline constexpr const char* kOutputRootEnv = "MDB_OUTPUT_ROOT";

struct DatasetSource {
    enum class Kind { Synthetic, Manifest, Grouped, UniformResample };
    Kind kind = Kind::Synthetic;
    // Base grid: synthetic config, or a manifest when `manifest` is set.
    GridConfig grid;
    std::optional<std::filesystem::path> manifest;
    // Grouped control: one derived grid (variant) per source domain.
    std::vector<std::pair<int, int>> grouping;
    std::vector<int> source_domains;
    // Uniform resample control.
    int per_cell_train = 0;
    int per_cell_val = 0;
    std::uint64_t resample_seed = 0;
};

struct AmountConfig {
    AmountKind kind = AmountKind::Full;
    std::vector<int> distribution_indices;  // into distribution_grid(scale, ...)
    int scale = 1000;
    std::vector<int> percentages;
};

struct ExperimentConfig {
    DatasetSource dataset;
    std::vector<ModelScope> model_kinds{ModelScope::MultiDomain};
    AmountConfig amount;
    std::vector<int> ood_levels;
    std::optional<std::vector<CellIndex>> cells;  // nullopt: every cell
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    ModelConfig model;  // input_size / n_classes are taken from the dataset
    OptimizerHyper optimizer;
    PreprocessSpec preprocess;
    double train_val_ratio = 0.75;
    int upsample_factor = 0;  // 0: number of domains
    bool evaluate_on_val = false;
    std::filesystem::path output_dir = "mdb_out";

    void validate() const;  // throws ConfigError
};

/// Parses a versioned JSON config; relative paths resolve against base_dir.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

/// The grids an experiment config trains on (one per variant).
struct ResolvedDataset {
    std::vector<DatasetGrid> variants;
    int n_classes = 0;
    int n_domains = 0;
};
ResolvedDataset resolve_dataset(const DatasetSource& source);

struct ExperimentSpec {
    int variant = 0;
    ModelKindRef kind;
    AmountKind amount_kind = AmountKind::Full;
    int amount_value = 0;  // distribution index or percentage
    OodSpec ood;
    std::uint64_t seed = 0;

    std::string amount_label() const;
    /// Pure hash of the provenance fields and the config's setup digest.
    std::string id(const std::string& setup_digest) const;
};

/// Cartesian expansion in lexicographic provenance order. Specialized kinds
/// yield one spec per domain; every spec is repeated per dataset variant.
/// Throws ConfigError on empty axes.
std::vector<ExperimentSpec> expand(const ExperimentConfig& config, int n_classes, int n_domains, int n_variants = 1);

/// Digest of everything except the sweep axes (dataset, model, optimizer, preprocessing).
std::string setup_digest(const ExperimentConfig& config);

/// Curve abscissa of an amount: distribution median or percentage (0 otherwise).
double amount_x(const ExperimentConfig& config, const ExperimentSpec& spec, int n_classes, int n_domains);

/// The split plan a spec trains on.
SplitPlan build_plan(const ExperimentConfig& config, const ExperimentSpec& spec, const DatasetGrid& grid);

/// Digest over the train and val uid lists only.
std::uint64_t plan_content_digest(const SplitPlan& plan);

enum class LedgerStatus { Pending, Done, Failed };

struct LedgerEntry {
    LedgerStatus status = LedgerStatus::Pending;
    std::string digest;  // of records/<id>.json when done
    std::string error;   // when failed
};

struct RunLedger {
    std::map<std::string, LedgerEntry> entries;

    std::string to_json() const;
    static RunLedger from_json(const std::string& text);  // throws LoadError
};

struct RunOptions {
    int workers = 1;
    bool resume = false;
    std::function<void(const std::string&)> log;
};

struct RunStats {
    int total = 0;
    int ran = 0;
    int skipped = 0;
    int failed = 0;
    int cache_hits = 0;
};

/// Runs every expanded spec, writing records, prediction dumps, a training
/// cache and ledger.json under the output directory.
RunStats run_sweep(const ExperimentConfig& config, const RunOptions& options = {});

/// Output directory after applying the MDB_OUTPUT_ROOT override.
std::filesystem::path effective_output_dir(const ExperimentConfig& config);

/// Reads records/ and writes summary.csv, auc.csv, diff.csv and missing.csv.
void summarize(const std::filesystem::path& output_dir);

std::vector<ResultRecord> load_records(const std::filesystem::path& output_dir);

/// Evaluates each specialized(d) model whose excluded cell lies in column d on
/// the test cells of the other columns; writes specialized_cross(d) records.
int cross_domain_eval(const std::filesystem::path& output_dir);

/// Writes `content` to `path` via a temporary file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace mdb
