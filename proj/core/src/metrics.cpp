#include "mdb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "json.hpp"
#include "mdb/digest.hpp"
#include "mdb/error.hpp"

namespace mdb {

std::optional<double> CellRecallMatrix::recall(int c, int d) const {
    const std::size_t i = index(c, d);
    if (support[i] == 0) return std::nullopt;
    return static_cast<double>(correct[i]) / support[i];
}

CellRecallMatrix per_cell_recall(std::span<const int> predictions, std::span<const int> true_class,
                                 std::span<const int> true_domain, int n_classes, int n_domains) {
    if (predictions.size() != true_class.size() || predictions.size() != true_domain.size()) {
        throw ArgumentError("per_cell_recall: lengths differ (" + std::to_string(predictions.size()) + ", " +
                            std::to_string(true_class.size()) + ", " + std::to_string(true_domain.size()) + ")");
    }
    CellRecallMatrix m(n_classes, n_domains);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int c = true_class[i], d = true_domain[i];
        if (c < 0 || c >= n_classes || d < 0 || d >= n_domains) {
            throw ArgumentError("per_cell_recall: sample " + std::to_string(i) + " has cell (" + std::to_string(c) +
                                ", " + std::to_string(d) + ") outside the grid");
        }
        ++m.support[m.index(c, d)];
        if (predictions[i] == c) ++m.correct[m.index(c, d)];
    }
    return m;
}

std::optional<double> mean_recall(const CellRecallMatrix& m, std::span<const CellIndex> cells) {
    double sum = 0.0;
    int n = 0;
    for (const CellIndex& cell : cells) {
        if (auto r = m.recall(cell.class_id, cell.domain_id)) {
            sum += *r;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

// ---- Model kinds -------------------------------------------------------------

namespace {

constexpr std::pair<ModelKind, const char*> kKindNames[] = {
    {ModelKind::MultiDomain, "multi"},
    {ModelKind::Specialized, "specialized"},
    {ModelKind::SpecializedUpsampled, "specialized_upsampled"},
    {ModelKind::SpecializedCross, "specialized_cross"},
};

}  // namespace

std::string ModelKindRef::family() const {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "unknown";
}

std::string ModelKindRef::str() const {
    if (kind == ModelKind::MultiDomain) return family();
    return family() + "(" + std::to_string(domain) + ")";
}

ModelKindRef ModelKindRef::parse(const std::string& text) {
    const auto open = text.find('(');
    const std::string name = text.substr(0, open);
    for (const auto& [k, n] : kKindNames) {
        if (name != n) continue;
        if (k == ModelKind::MultiDomain) {
            if (open != std::string::npos) break;
            return {k, -1};
        }
        if (open == std::string::npos || text.back() != ')') break;
        try {
            std::size_t used = 0;
            const std::string num = text.substr(open + 1, text.size() - open - 2);
            const int d = std::stoi(num, &used);
            if (used != num.size() || d < 0) break;
            return {k, d};
        } catch (const std::exception&) {
            break;
        }
    }
    throw ArgumentError("unknown model kind '" + text + "'");
}

std::vector<CellIndex> id_scope(const ModelKindRef& kind, CellIndex target, int n_classes, int n_domains) {
    std::vector<CellIndex> out;
    for (int c = 0; c < n_classes; ++c) {
        for (int d = 0; d < n_domains; ++d) {
            const CellIndex cell{c, d};
            switch (kind.kind) {
                case ModelKind::MultiDomain:
                    if (cell != target) out.push_back(cell);
                    break;
                case ModelKind::Specialized:
                case ModelKind::SpecializedUpsampled:
                    if (d == kind.domain && cell != target) out.push_back(cell);
                    break;
                case ModelKind::SpecializedCross:
                    if (d != kind.domain && c != target.class_id) out.push_back(cell);
                    break;
            }
        }
    }
    return out;
}

std::vector<CellIndex> ood_scope(const ModelKindRef& kind, CellIndex target, int n_classes, int n_domains) {
    std::vector<CellIndex> out;
    switch (kind.kind) {
        case ModelKind::MultiDomain:
            out.push_back(target);
            break;
        case ModelKind::Specialized:
        case ModelKind::SpecializedUpsampled:
            if (target.domain_id == kind.domain) out.push_back(target);
            break;
        case ModelKind::SpecializedCross:
            if (target.class_id < n_classes)
                for (int d = 0; d < n_domains; ++d)
                    if (d != kind.domain) out.push_back({target.class_id, d});
            break;
    }
    return out;
}

// ---- Records -------------------------------------------------------------------

std::string to_json(const ResultRecord& r) {
    nlohmann::ordered_json j;
    j["schema"] = "mdb.result/1";
    j["experiment_id"] = r.experiment_id;
    j["variant"] = r.variant;
    j["model_kind"] = r.kind.str();
    j["amount"] = r.amount;
    j["x"] = r.x;
    j["ood"] = {{"class_id", r.ood.cell.class_id}, {"domain_id", r.ood.cell.domain_id}, {"level_pct", r.ood.level_pct}};
    j["seed"] = to_hex(r.seed);
    j["n_classes"] = r.recall.n_classes;
    j["n_domains"] = r.recall.n_domains;
    j["correct"] = r.recall.correct;
    j["support"] = r.recall.support;
    j["train_key"] = r.train_key;
    j["selected_epoch"] = r.selected_epoch;
    j["train_loss"] = r.train_loss;
    j["val_metric"] = r.val_metric;
    return j.dump(1) + "\n";
}

ResultRecord record_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("schema").get<std::string>() != "mdb.result/1") throw LoadError("unsupported record schema");
        ResultRecord r;
        r.experiment_id = j.at("experiment_id").get<std::string>();
        r.variant = j.at("variant").get<int>();
        r.kind = ModelKindRef::parse(j.at("model_kind").get<std::string>());
        r.amount = j.at("amount").get<std::string>();
        r.x = j.at("x").get<double>();
        const auto& o = j.at("ood");
        r.ood.cell = {o.at("class_id").get<int>(), o.at("domain_id").get<int>()};
        r.ood.level_pct = o.at("level_pct").get<int>();
        r.seed = std::stoull(j.at("seed").get<std::string>(), nullptr, 16);
        r.recall.n_classes = j.at("n_classes").get<int>();
        r.recall.n_domains = j.at("n_domains").get<int>();
        r.recall.correct = j.at("correct").get<std::vector<int>>();
        r.recall.support = j.at("support").get<std::vector<int>>();
        const std::size_t cells = static_cast<std::size_t>(r.recall.n_classes) * r.recall.n_domains;
        if (r.recall.correct.size() != cells || r.recall.support.size() != cells)
            throw LoadError("record recall matrix size does not match its grid");
        r.train_key = j.at("train_key").get<std::string>();
        r.selected_epoch = j.at("selected_epoch").get<int>();
        r.train_loss = j.at("train_loss").get<std::vector<double>>();
        r.val_metric = j.at("val_metric").get<std::vector<double>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("malformed result record: ") + e.what());
    } catch (const ArgumentError& e) {
        throw LoadError(std::string("malformed result record: ") + e.what());
    }
}

// ---- Averages ------------------------------------------------------------------

namespace {

template <typename ScopeFn>
AverageResult average_over(std::span<const ResultRecord> records, ScopeFn scope) {
    AverageResult out;
    double sum = 0.0;
    for (const ResultRecord& r : records) {
        const auto cells = scope(r.kind, r.ood.cell, r.recall.n_classes, r.recall.n_domains);
        if (auto v = mean_recall(r.recall, cells)) {
            sum += *v;
            ++out.used;
        } else {
            ++out.skipped;
        }
    }
    if (out.used > 0) out.value = sum / out.used;
    return out;
}

}  // namespace

AverageResult ood_average(std::span<const ResultRecord> records) { return average_over(records, ood_scope); }
AverageResult id_average(std::span<const ResultRecord> records) { return average_over(records, id_scope); }

double auc_trapezoid(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ArgumentError("auc_trapezoid: xs and ys differ in length");
    if (xs.size() < 2) throw ArgumentError("auc_trapezoid: need at least two points");
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        if (!(xs[i + 1] > xs[i])) {
            throw ArgumentError("auc_trapezoid: x not strictly increasing at index " + std::to_string(i + 1));
        }
        area += (xs[i + 1] - xs[i]) * (ys[i] + ys[i + 1]) / 2.0;
    }
    return area;
}

SeedStats aggregate_seeds(std::span<const double> per_seed) {
    SeedStats s;
    s.n = static_cast<int>(per_seed.size());
    if (s.n == 0) return s;
    std::vector<double> v(per_seed.begin(), per_seed.end());
    std::sort(v.begin(), v.end());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / s.n;
    s.single = s.n == 1;
    if (s.n > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / (s.n - 1));
    }
    return s;
}

std::vector<Curve> summarize_records(std::span<const ResultRecord> records) {
    // (family, level, x, seed, variant, target) -> pooled cell recalls
    using ExpKey = std::tuple<std::string, int, double, std::uint64_t, int, CellIndex>;
    struct Pool {
        double id_sum = 0.0;
        int id_n = 0;
        double ood_sum = 0.0;
        int ood_n = 0;
    };
    std::map<ExpKey, Pool> experiments;
    for (const ResultRecord& r : records) {
        Pool& p = experiments[{r.kind.family(), r.ood.level_pct, r.x, r.seed, r.variant, r.ood.cell}];
        const int nc = r.recall.n_classes, nd = r.recall.n_domains;
        for (const CellIndex& cell : id_scope(r.kind, r.ood.cell, nc, nd))
            if (auto v = r.recall.recall(cell.class_id, cell.domain_id)) {
                p.id_sum += *v;
                ++p.id_n;
            }
        for (const CellIndex& cell : ood_scope(r.kind, r.ood.cell, nc, nd))
            if (auto v = r.recall.recall(cell.class_id, cell.domain_id)) {
                p.ood_sum += *v;
                ++p.ood_n;
            }
    }

    // (metric, family, level, x, seed) -> experiment scores
    using SeedKey = std::tuple<std::string, std::string, int, double, std::uint64_t>;
    std::map<SeedKey, std::vector<double>> per_seed;
    for (const auto& [key, p] : experiments) {
        const auto& [family, level, x, seed, variant, target] = key;
        if (p.id_n > 0) per_seed[{"id", family, level, x, seed}].push_back(p.id_sum / p.id_n);
        if (p.ood_n > 0) per_seed[{"ood", family, level, x, seed}].push_back(p.ood_sum / p.ood_n);
    }

    using CurveKey = std::tuple<std::string, std::string, int>;
    std::map<CurveKey, std::map<double, std::vector<double>>> curves;
    for (const auto& [key, scores] : per_seed) {
        const auto& [metric, family, level, x, seed] = key;
        curves[{family, metric, level}][x].push_back(std::accumulate(scores.begin(), scores.end(), 0.0) /
                                                     static_cast<double>(scores.size()));
    }

    std::vector<Curve> out;
    for (const auto& [key, points] : curves) {
        Curve c;
        std::tie(c.model_kind, c.metric, c.ood_level) = key;
        for (const auto& [x, seeds] : points) c.points.push_back({x, aggregate_seeds(seeds)});
        if (c.points.size() >= 2) {
            std::vector<double> xs, ys;
            for (const CurvePoint& p : c.points) {
                xs.push_back(p.x);
                ys.push_back(p.stats.mean);
            }
            c.auc = auc_trapezoid(xs, ys);
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<DiffPoint> model_difference(const Curve& a, const Curve& b) {
    std::set<double> xa, xb;
    for (const CurvePoint& p : a.points) xa.insert(p.x);
    for (const CurvePoint& p : b.points) xb.insert(p.x);
    if (xa != xb) {
        std::string msg = "model_difference: x grids differ at {";
        bool first = true;
        std::vector<double> sym;
        std::set_symmetric_difference(xa.begin(), xa.end(), xb.begin(), xb.end(), std::back_inserter(sym));
        for (double x : sym) {
            msg += (first ? "" : ", ") + format_float(x);
            first = false;
        }
        throw ArgumentError(msg + "}");
    }
    std::vector<DiffPoint> out;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        out.push_back({a.points[i].x, a.points[i].stats.mean - b.points[i].stats.mean});
    }
    return out;
}

std::string format_float(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace mdb
