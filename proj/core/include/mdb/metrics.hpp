#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdb/diversity.hpp"

namespace mdb {

/// Correct / support counts per (class, domain) cell. A cell with zero
/// support is ABSENT and has no recall value.
struct CellRecallMatrix {
    int n_classes = 0;
    int n_domains = 0;
    std::vector<int> correct;
    std::vector<int> support;

    CellRecallMatrix() = default;
    CellRecallMatrix(int c, int d)
        : n_classes(c), n_domains(d), correct(static_cast<std::size_t>(c) * d, 0),
          support(static_cast<std::size_t>(c) * d, 0) {}

    std::size_t index(int c, int d) const { return static_cast<std::size_t>(c) * n_domains + d; }
    bool absent(int c, int d) const { return support[index(c, d)] == 0; }
    /// nullopt for ABSENT cells.
    std::optional<double> recall(int c, int d) const;
    bool operator==(const CellRecallMatrix&) const = default;
};

/// Throws ArgumentError on misaligned lengths or out-of-range labels.
CellRecallMatrix per_cell_recall(std::span<const int> predictions, std::span<const int> true_class,
                                 std::span<const int> true_domain, int n_classes, int n_domains);

/// Mean recall over the non-ABSENT cells among `cells`; nullopt if none.
std::optional<double> mean_recall(const CellRecallMatrix& m, std::span<const CellIndex> cells);

enum class ModelKind { MultiDomain, Specialized, SpecializedUpsampled, SpecializedCross };

struct ModelKindRef {
    ModelKind kind = ModelKind::MultiDomain;
    int domain = -1;  // trained domain for the specialized kinds

    /// "multi", "specialized(2)", "specialized_upsampled(2)", "specialized_cross(2)".
    std::string str() const;
    /// Kind name without the domain: "multi", "specialized", ...
    std::string family() const;
    static ModelKindRef parse(const std::string& text);  // throws ArgumentError
    bool operator==(const ModelKindRef&) const = default;
    auto operator<=>(const ModelKindRef&) const = default;
};

/// Cells whose recall forms the ID score of one experiment:
///   multi:                 every cell except the target
///   specialized(d), upsampled(d): column d except the target
///   specialized_cross(d):  columns != d, excluding the target's class
std::vector<CellIndex> id_scope(const ModelKindRef& kind, CellIndex target, int n_classes, int n_domains);

/// Cells whose recall forms the OOD score: the target when the model's scope
/// covers it; for specialized_cross(d), the target's class in columns != d.
std::vector<CellIndex> ood_scope(const ModelKindRef& kind, CellIndex target, int n_classes, int n_domains);

/// One experiment's outcome.
struct ResultRecord {
    std::string experiment_id;
    int variant = 0;              // dataset variant (e.g. source domain of a grouped control)
    ModelKindRef kind;
    std::string amount;           // "distribution:<i>", "percentage:<p>", "full", ...
    double x = 0.0;               // curve abscissa: distribution median or percentage
    OodSpec ood;
    std::uint64_t seed = 0;
    CellRecallMatrix recall;
    std::string train_key;
    int selected_epoch = 0;
    std::vector<double> train_loss;
    std::vector<double> val_metric;
};

std::string to_json(const ResultRecord& record);
ResultRecord record_from_json(const std::string& text);  // throws LoadError

struct AverageResult {
    double value = 0.0;
    int used = 0;
    int skipped = 0;  // experiments with no scored cell (ABSENT)
};

/// Mean over records of each record's OOD-scope recall (ABSENT skipped and tallied).
AverageResult ood_average(std::span<const ResultRecord> records);
/// Mean over records of each record's ID-scope mean recall.
AverageResult id_average(std::span<const ResultRecord> records);

/// Sum of (x[i+1]-x[i]) * (y[i]+y[i+1]) / 2. Throws ArgumentError unless xs is
/// strictly increasing with at least two points and ys has the same length.
double auc_trapezoid(std::span<const double> xs, std::span<const double> ys);

struct SeedStats {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single seed
    int n = 0;
    bool single = false;
};

/// Order-independent: values are sorted before summation.
SeedStats aggregate_seeds(std::span<const double> per_seed);

struct CurvePoint {
    double x = 0.0;
    SeedStats stats;
};

struct Curve {
    std::string metric;      // "id" or "ood"
    std::string model_kind;  // family
    int ood_level = 0;
    std::vector<CurvePoint> points;  // strictly increasing x
    std::optional<double> auc;       // over point means; needs >= 2 points
};

/// Pooled ID / OOD scores per (family, x, level, seed), averaged over target
/// cells, then aggregated over seeds. Specialized models of every column that
/// share a target are pooled into one experiment.
std::vector<Curve> summarize_records(std::span<const ResultRecord> records);

struct DiffPoint {
    double x = 0.0;
    double value = 0.0;
};

/// Pointwise a - b over x. Throws ArgumentError listing the x values that
/// appear in only one curve.
std::vector<DiffPoint> model_difference(const Curve& a, const Curve& b);

/// "%.9g"
std::string format_float(double v);

}  // namespace mdb
