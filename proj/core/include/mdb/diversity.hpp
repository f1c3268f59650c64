#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mdb/synthgrid.hpp"

namespace mdb {

inline constexpr std::array<int, 7> kOodLevels{0, 25, 50, 75, 85, 95, 100};
inline constexpr std::array<int, 7> kSamplingPercentages{5, 10, 25, 35, 50, 75, 100};

/// Gaussian class x domain sample-count distribution. Weights are
/// max-normalized per axis, multiplied, and scaled.
struct DistributionSpec {
    double mu_class = 0.0;
    double sigma_class = 1.0;
    double mu_domain = 0.0;
    double sigma_domain = 1.0;
    int scale = 1000;

    void validate() const;  // throws ArgumentError
    bool operator==(const DistributionSpec&) const = default;
};

struct CellIndex {
    int class_id = 0;
    int domain_id = 0;
    bool operator==(const CellIndex&) const = default;
    auto operator<=>(const CellIndex&) const = default;
};

struct OodSpec {
    CellIndex cell;
    int level_pct = 0;

    void validate() const;  // level must be one of kOodLevels
    bool operator==(const OodSpec&) const = default;
};

/// Dense [n_classes][n_domains] integer matrix.
struct CountMatrix {
    int n_classes = 0;
    int n_domains = 0;
    std::vector<int> values;

    CountMatrix() = default;
    CountMatrix(int c, int d, int fill = 0)
        : n_classes(c), n_domains(d), values(static_cast<std::size_t>(c) * d, fill) {}
    int& at(int c, int d) { return values[static_cast<std::size_t>(c) * n_domains + d]; }
    int at(int c, int d) const { return values[static_cast<std::size_t>(c) * n_domains + d]; }
};

enum class AmountKind { Distribution, Percentage, UniformResample, Full };
enum class ModelScope { MultiDomain, Specialized, SpecializedUpsampled };

struct Scope {
    ModelScope kind = ModelScope::MultiDomain;
    int domain = -1;  // for specialized kinds
    int factor = 1;   // upsampling factor
    bool operator==(const Scope&) const = default;
};

struct PlanProvenance {
    AmountKind amount = AmountKind::Full;
    std::optional<DistributionSpec> distribution;
    std::optional<int> percentage;
    std::optional<OodSpec> ood;
    std::uint64_t seed = 0;
    double train_val_ratio = 0.75;
    Scope scope;
};

struct CellSplit {
    std::vector<std::uint64_t> train;
    std::vector<std::uint64_t> val;
    // Uids withheld by the OOD exclusion (kept for audit and re-application).
    std::vector<std::uint64_t> excluded_train;
    std::vector<std::uint64_t> excluded_val;
};

/// Per-cell train/val uid selections plus how they were produced.
struct SplitPlan {
    int n_classes = 0;
    int n_domains = 0;
    std::vector<CellSplit> cells;
    PlanProvenance provenance;

    SplitPlan() = default;
    SplitPlan(int c, int d) : n_classes(c), n_domains(d), cells(static_cast<std::size_t>(c) * d) {}

    CellSplit& cell(int c, int d) { return cells[static_cast<std::size_t>(c) * n_domains + d]; }
    const CellSplit& cell(int c, int d) const {
        return cells[static_cast<std::size_t>(c) * n_domains + d];
    }
    std::size_t total_train() const;
    std::size_t total_val() const;
};

std::string to_json(const SplitPlan& plan);
SplitPlan plan_from_json(const std::string& text);  // throws LoadError
std::uint64_t plan_digest(const SplitPlan& plan);

/// w[i] = exp(-(i-mean)^2 / (2 std^2)) / max_j(...). Throws ArgumentError if std <= 0.
std::vector<double> discrete_normal_weights(double mean, double std, int n);

/// counts[c][d] = round_half_up(w_class[c] * w_domain[d] * scale).
CountMatrix cell_counts(const DistributionSpec& spec, int n_classes, int n_domains);

/// Median over all cells (mean of the two middle values for even sizes).
double count_median(const CountMatrix& counts);

/// The 24 specs sigma_class {3,5,9,17} x mu_domain {0,2} x sigma_domain {1,3,5}
/// with mu_class = 0, ascending by the median of their count matrices
/// (computed on a 10 x 5 grid).
std::vector<DistributionSpec> distribution_grid(int scale = 1000, int n_classes = 10,
                                                int n_domains = 5);

/// Draws counts[c][d] uids per cell from the train pool without
/// replacement; ceil(ratio * k) go to train, the rest to val.
SplitPlan sample_split(const DatasetGrid& grid, const CountMatrix& counts, double train_val_ratio,
                       std::uint64_t seed);

/// Keeps round_half_even(pct/100 * n) samples of each cell's train and val pools.
SplitPlan percentage_split(const DatasetGrid& grid, int pct, std::uint64_t seed);

/// Every train/val sample of the grid.
SplitPlan full_split(const DatasetGrid& grid, std::uint64_t seed);

/// Removes ceil(level/100 * k) train and ceil(level/100 * m) val uids from the
/// target cell. Removal sets are nested across levels for a fixed seed.
SplitPlan apply_ood(const SplitPlan& plan, const OodSpec& ood, std::uint64_t seed);

SplitPlan restrict_to_domain(const SplitPlan& plan, int domain_id);

/// Specialized plan whose column counts are multiplied by `factor`, extra uids
/// drawn from each cell's reserve pool. The OOD target keeps its retained fraction.
SplitPlan upsample_specialized(const SplitPlan& plan, int domain_id, int factor,
                               const DatasetGrid& grid);

std::vector<std::pair<int, int>> default_grouping(int n_classes);

/// Derived 2-domain grid from one original domain column: new class g holds
/// the pair's first class in domain 0 and its second class in domain 1.
DatasetGrid grouped_domain_control(const DatasetGrid& grid,
                                   const std::vector<std::pair<int, int>>& grouping,
                                   int source_domain);

/// Every cell trimmed to exactly per_cell_train / per_cell_val samples.
DatasetGrid uniform_resample(const DatasetGrid& grid, int per_cell_train, int per_cell_val,
                             std::uint64_t seed);

/// All (class, domain) cells in row-major order.
std::vector<CellIndex> all_cells(int n_classes, int n_domains);

long long round_half_up(double x);
long long round_half_even(double x);

}  // namespace mdb
