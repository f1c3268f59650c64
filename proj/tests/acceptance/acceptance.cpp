// Acceptance suite: one PASS/FAIL line per criterion.
//
//   mdb_acceptance [--work DIR] [--only NAME]... [--list]
//
// The qualitative criteria share sweeps under DIR; reruns resume them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdb/diversity.hpp"
#include "mdb/error.hpp"
#include "mdb/harness.hpp"
#include "mdb/metrics.hpp"
#include "mdb/network.hpp"
#include "mdb/rng.hpp"

using namespace mdb;
namespace fs = std::filesystem;

namespace {

// ---- Pinned tolerances -----------------------------------------------------

constexpr int kExpectedSpecs = 24;
constexpr double kExpectedMinMedian = 6;
constexpr double kExpectedMaxMedian = 890;
constexpr int kOodPairs = 100;
constexpr int kGradModels = 20;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-6;  // larger steps straddle ReLU kinks
constexpr double kGradSeconds = 60;
constexpr int kMetricInstances = 200;
constexpr double kRefineTol = 1e-12;
constexpr double kAucAnchor = 890;
constexpr double kChance10 = 0.10;
constexpr double kQ1Gap = 0.30;
constexpr double kQ1ChanceSlack = 0.05;
constexpr double kQ2Range = 0.05;
constexpr double kQ3Gap = 0.10;
constexpr double kChance5 = 0.20;
constexpr double kControlBand = 0.10;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Context {
    fs::path work;
};

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

void log_line(const std::string& s) { std::cerr << "  " << s << "\n"; }

// ---- Presets ---------------------------------------------------------------

// polymnist-lite grid: 10 classes x 5 domains, 16x16, 200 train per cell.
GridConfig lite_grid() {
    GridConfig g;
    g.n_classes = 10;
    g.n_domains = 5;
    g.image_size = 16;
    g.pool_sizes = {200, 50, 100, 0};
    g.seed = 7;
    return g;
}

ExperimentConfig lite_base(const fs::path& out) {
    ExperimentConfig c;
    c.dataset.grid = lite_grid();
    c.model.stem_width = 8;
    c.model.n_blocks = 3;
    c.optimizer.epochs = 4;
    c.optimizer.batch_size = 128;
    c.optimizer.learning_rate = 0.005;
    c.preprocess.target_size = 16;
    c.seeds = {0, 1, 2};
    c.output_dir = out;
    return c;
}

// Largest distribution of the grid, one target cell per domain.
ExperimentConfig main_sweep_config(const fs::path& work) {
    ExperimentConfig c = lite_base(work / "main");
    c.model_kinds = {ModelScope::MultiDomain, ModelScope::Specialized};
    c.amount.kind = AmountKind::Distribution;
    c.amount.distribution_indices = {kExpectedSpecs - 1};
    c.amount.scale = 200;
    c.ood_levels = {0, 50, 85, 100};
    c.cells = std::vector<CellIndex>{{0, 0}, {2, 1}, {4, 2}, {6, 3}, {8, 4}};
    return c;
}

// Grouped-domain control over every source domain.
ExperimentConfig control_sweep_config(const fs::path& work) {
    ExperimentConfig c = lite_base(work / "control");
    c.dataset.kind = DatasetSource::Kind::Grouped;
    c.dataset.grouping = default_grouping(10);
    c.model_kinds = {ModelScope::MultiDomain};
    c.amount.kind = AmountKind::Full;
    c.ood_levels = {0, 100};
    c.cells = std::vector<CellIndex>{{0, 1}, {2, 1}, {4, 1}};
    return c;
}

ExperimentConfig determinism_config(const fs::path& out) {
    ExperimentConfig c = lite_base(out);
    c.model_kinds = {ModelScope::MultiDomain, ModelScope::Specialized};
    c.amount.kind = AmountKind::Distribution;
    c.amount.distribution_indices = {5};  // smallest with every cell populated
    c.amount.scale = 200;
    c.ood_levels = {0, 100};
    c.cells = std::vector<CellIndex>{{1, 0}, {5, 3}};
    c.seeds = {0};
    c.optimizer.epochs = 2;
    return c;
}

RunStats run_logged(const ExperimentConfig& c, int workers, bool resume) {
    RunOptions o;
    o.workers = workers;
    o.resume = resume;
    const auto t0 = std::chrono::steady_clock::now();
    const RunStats s = run_sweep(c, o);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line(effective_output_dir(c).string() + ": " + std::to_string(s.total) + " specs, " +
             std::to_string(s.ran) + " ran, " + std::to_string(s.skipped) + " skipped, " +
             std::to_string(s.failed) + " failed, " + std::to_string(s.cache_hits) + " cache hits, " +
             fmt(secs, 1) + " s");
    return s;
}

std::vector<ResultRecord> ensure_main_sweep(const Context& ctx) {
    const ExperimentConfig c = main_sweep_config(ctx.work);
    run_logged(c, 1, true);
    const fs::path dir = effective_output_dir(c);
    bool have_cross = false;
    for (const auto& r : load_records(dir)) have_cross |= r.kind.kind == ModelKind::SpecializedCross;
    if (!have_cross) log_line("crosseval wrote " + std::to_string(cross_domain_eval(dir)) + " records");
    summarize(dir);
    return load_records(dir);
}

std::vector<ResultRecord> select(const std::vector<ResultRecord>& rs,
                                 const std::function<bool(const ResultRecord&)>& keep) {
    std::vector<ResultRecord> out;
    for (const auto& r : rs)
        if (keep(r)) out.push_back(r);
    return out;
}

// ---- Criteria --------------------------------------------------------------

Outcome distribution_oracle(const Context&) {
    const auto grid = distribution_grid(1000, 10, 5);
    int mismatches = 0;
    std::vector<double> medians;
    for (const auto& s : grid) {
        const CountMatrix m = cell_counts(s, 10, 5);
        for (int c = 0; c < 10; ++c)
            for (int d = 0; d < 5; ++d) {
                const double e = std::pow(c - s.mu_class, 2) / (2 * s.sigma_class * s.sigma_class) +
                                 std::pow(d - s.mu_domain, 2) / (2 * s.sigma_domain * s.sigma_domain);
                mismatches += m.at(c, d) != static_cast<int>(std::lround(std::exp(-e) * s.scale));
            }
        medians.push_back(count_median(m));
    }
    const auto [lo, hi] = std::minmax_element(medians.begin(), medians.end());
    const bool sorted = std::is_sorted(medians.begin(), medians.end());
    Outcome o;
    o.pass = mismatches == 0 && static_cast<int>(grid.size()) == kExpectedSpecs && sorted &&
             *lo == kExpectedMinMedian && *hi == kExpectedMaxMedian;
    o.detail = "oracle mismatches " + std::to_string(mismatches) + "/1200, specs " + std::to_string(grid.size()) +
               ", sorted " + (sorted ? "yes" : "no") + ", medians span " + fmt(*lo, 1) + ".." + fmt(*hi, 1) +
               " (want " + fmt(kExpectedMinMedian, 0) + ".." + fmt(kExpectedMaxMedian, 0) + ")";
    return o;
}

Outcome ood_plan_properties(const Context&) {
    GridConfig g = lite_grid();
    g.pool_sizes = {200, 50, 0, 0};
    const DatasetGrid grid = build_grid(g);
    const CountMatrix counts = cell_counts(distribution_grid(200)[kExpectedSpecs - 1], 10, 5);
    SplitMix64 rng(0xACCE55);
    int violations = 0;
    std::string first;
    auto fail = [&](const std::string& what) {
        if (violations++ == 0) first = what;
    };
    for (int pair = 0; pair < kOodPairs; ++pair) {
        const CellIndex cell{static_cast<int>(rng.below(10)), static_cast<int>(rng.below(5))};
        const std::uint64_t seed = rng.next();
        const SplitPlan base = sample_split(grid, counts, 0.75, seed);
        const auto& b = base.cell(cell.class_id, cell.domain_id);
        std::set<std::uint64_t> prev_train(b.train.begin(), b.train.end());
        std::set<std::uint64_t> prev_val(b.val.begin(), b.val.end());
        const std::string tag = "cell (" + std::to_string(cell.class_id) + "," + std::to_string(cell.domain_id) + ")";
        for (int level : kOodLevels) {
            const SplitPlan p = apply_ood(base, {cell, level}, seed);
            for (int c = 0; c < 10; ++c)
                for (int d = 0; d < 5; ++d) {
                    if (CellIndex{c, d} == cell) continue;
                    if (p.cell(c, d).train != base.cell(c, d).train || p.cell(c, d).val != base.cell(c, d).val)
                        fail(tag + ": other cell modified at level " + std::to_string(level));
                }
            const auto& t = p.cell(cell.class_id, cell.domain_id);
            const std::set<std::uint64_t> tr(t.train.begin(), t.train.end()), va(t.val.begin(), t.val.end());
            if (level == 0 && (t.train != b.train || t.val != b.val)) fail(tag + ": level 0 not identity");
            if (level == 100 && (!t.train.empty() || !t.val.empty())) fail(tag + ": level 100 not empty");
            if (!std::includes(prev_train.begin(), prev_train.end(), tr.begin(), tr.end()) ||
                !std::includes(prev_val.begin(), prev_val.end(), va.begin(), va.end()))
                fail(tag + ": not nested at level " + std::to_string(level));
            const std::size_t want = b.train.size() - (level * b.train.size() + 99) / 100;
            if (t.train.size() != want) fail(tag + ": wrong retained count at level " + std::to_string(level));
            prev_train = tr;
            prev_val = va;
        }
    }
    return {violations == 0, std::to_string(kOodPairs) + " (cell, seed) pairs x " +
                                 std::to_string(kOodLevels.size()) + " levels, " + std::to_string(violations) +
                                 " violations" + (first.empty() ? "" : "; first: " + first)};
}

Outcome gradient_check(const Context&) {
    const auto t0 = std::chrono::steady_clock::now();
    SplitMix64 rng(0x96AD);
    double worst = 0;
    std::string worst_at;
    for (int m = 0; m < kGradModels; ++m) {
        ModelConfig cfg;
        cfg.input_size = 4 + static_cast<int>(rng.below(5));
        cfg.stem_width = 2 + static_cast<int>(rng.below(3));
        cfg.n_blocks = 1 + static_cast<int>(rng.below(3));
        cfg.n_classes = 2 + static_cast<int>(rng.below(4));
        const int n = 2 + static_cast<int>(rng.below(4));
        ParamState s = init_model(cfg, rng.next());
        for (Tensor& t : s.params)
            if (t.name.find("conv") == std::string::npos)
                for (float& v : t.data) v += static_cast<float>(0.2 * (rng.uniform() - 0.5));
        ParamsF64 p = to_f64(s);
        std::vector<double> images(static_cast<std::size_t>(n) * cfg.channels * cfg.input_size * cfg.input_size);
        for (double& v : images) v = rng.uniform();
        std::vector<int> labels(n);
        for (int& l : labels) l = static_cast<int>(rng.below(cfg.n_classes));

        const auto analytic = grad_f64(p, images, n, labels);
        for (std::size_t t = 0; t < p.params.size(); ++t) {
            double diff2 = 0, ref2 = 0;
            for (std::size_t i = 0; i < p.params[t].size(); ++i) {
                const double keep = p.params[t][i];
                p.params[t][i] = keep + kGradStep;
                const double up = loss_f64(p, images, n, labels);
                p.params[t][i] = keep - kGradStep;
                const double down = loss_f64(p, images, n, labels);
                p.params[t][i] = keep;
                const double fd = (up - down) / (2 * kGradStep);
                diff2 += (fd - analytic[t][i]) * (fd - analytic[t][i]);
                ref2 += analytic[t][i] * analytic[t][i];
            }
            const double rel = std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-8);
            if (rel > worst) {
                worst = rel;
                worst_at = "model " + std::to_string(m) + " " + s.params[t].name;
            }
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst < kGradRelTol && secs < kGradSeconds,
            std::to_string(kGradModels) + " models, worst relative error " + fmt(worst * 1e6, 3) + "e-6 (" +
                worst_at + "), " + fmt(secs, 1) + " s"};
}

// Brute-force recomputation from a raw prediction dump.
struct Dump {
    std::vector<int> pred, cls, dom;
};

double dump_recall(const Dump& d, int c, int dm, bool* absent) {
    int hit = 0, total = 0;
    for (std::size_t i = 0; i < d.pred.size(); ++i)
        if (d.cls[i] == c && d.dom[i] == dm) {
            ++total;
            hit += d.pred[i] == c;
        }
    *absent = total == 0;
    return total ? static_cast<double>(hit) / total : 0.0;
}

Outcome metric_oracles(const Context&) {
    SplitMix64 rng(0x3E7);
    int recall_bad = 0, avg_bad = 0, auc_bad = 0;
    for (int inst = 0; inst < kMetricInstances; ++inst) {
        const int nc = 2 + static_cast<int>(rng.below(5));
        const int nd = 2 + static_cast<int>(rng.below(3));
        std::vector<ResultRecord> records;
        std::vector<Dump> dumps;
        const int n_exp = 1 + static_cast<int>(rng.below(4));
        const ModelKindRef kind = rng.uniform() < 0.5 ? ModelKindRef{ModelKind::MultiDomain, -1}
                                                      : ModelKindRef{ModelKind::Specialized, static_cast<int>(rng.below(nd))};
        for (int e = 0; e < n_exp; ++e) {
            Dump d;
            const int n = static_cast<int>(rng.below(80));
            for (int i = 0; i < n; ++i) {
                d.cls.push_back(static_cast<int>(rng.below(nc)));
                d.dom.push_back(static_cast<int>(rng.below(nd)));
                d.pred.push_back(rng.uniform() < 0.6 ? d.cls.back() : static_cast<int>(rng.below(nc)));
            }
            ResultRecord r;
            r.kind = kind;
            r.ood = {{static_cast<int>(rng.below(nc)), kind.domain >= 0 && rng.uniform() < 0.7
                                                            ? kind.domain
                                                            : static_cast<int>(rng.below(nd))},
                     100};
            r.recall = per_cell_recall(d.pred, d.cls, d.dom, nc, nd);
            for (int c = 0; c < nc; ++c)
                for (int dm = 0; dm < nd; ++dm) {
                    bool absent = false;
                    const double v = dump_recall(d, c, dm, &absent);
                    const auto got = r.recall.recall(c, dm);
                    if (absent != !got.has_value() || (got && *got != v)) ++recall_bad;
                }
            records.push_back(r);
            dumps.push_back(d);
        }
        // ID / OOD averages from the dumps.
        double id_sum = 0, ood_sum = 0;
        int id_used = 0, ood_used = 0;
        for (std::size_t e = 0; e < records.size(); ++e) {
            const CellIndex t = records[e].ood.cell;
            double s = 0;
            int k = 0;
            for (int c = 0; c < nc; ++c)
                for (int dm = 0; dm < nd; ++dm) {
                    if (CellIndex{c, dm} == t) continue;
                    if (kind.kind == ModelKind::Specialized && dm != kind.domain) continue;
                    bool absent = false;
                    const double v = dump_recall(dumps[e], c, dm, &absent);
                    if (absent) continue;
                    s += v;
                    ++k;
                }
            if (k) {
                id_sum += s / k;
                ++id_used;
            }
            const bool in_scope = kind.kind == ModelKind::MultiDomain || t.domain_id == kind.domain;
            bool absent = false;
            const double v = dump_recall(dumps[e], t.class_id, t.domain_id, &absent);
            if (in_scope && !absent) {
                ood_sum += v;
                ++ood_used;
            }
        }
        const AverageResult id = id_average(records), ood = ood_average(records);
        if (id.used != id_used || (id_used && id.value != id_sum / id_used)) ++avg_bad;
        if (ood.used != ood_used || (ood_used && ood.value != ood_sum / ood_used)) ++avg_bad;

        // AUC: exact on a linear curve, and equal to a 10x refinement of the
        // piecewise-linear interpolant of a cubic.
        std::vector<double> xs{0};
        const int pts = 2 + static_cast<int>(rng.below(6));
        for (int i = 1; i < pts; ++i) xs.push_back(xs.back() + 0.25 * (1 + static_cast<int>(rng.below(8))));
        const double a = 0.25 * static_cast<int>(rng.below(9)) - 1, b = 0.5 * static_cast<int>(rng.below(5));
        std::vector<double> lin, cub;
        for (double x : xs) {
            lin.push_back(a * x + b);
            cub.push_back(0.1 * x * x * x - 0.7 * x * x + a * x + b);
        }
        const double x1 = xs.back();
        if (auc_trapezoid(xs, lin) != a * x1 * x1 / 2 + b * x1) ++auc_bad;
        std::vector<double> fx, fy;
        for (std::size_t i = 0; i + 1 < xs.size(); ++i)
            for (int k = 0; k < 10; ++k) {
                fx.push_back(xs[i] + k * (xs[i + 1] - xs[i]) / 10);
                fy.push_back(cub[i] + k * (cub[i + 1] - cub[i]) / 10);
            }
        fx.push_back(xs.back());
        fy.push_back(cub.back());
        if (std::abs(auc_trapezoid(xs, cub) - auc_trapezoid(fx, fy)) > kRefineTol) ++auc_bad;
    }
    return {recall_bad == 0 && avg_bad == 0 && auc_bad == 0,
            std::to_string(kMetricInstances) + " instances: recall mismatches " + std::to_string(recall_bad) +
                ", average mismatches " + std::to_string(avg_bad) + ", auc mismatches " + std::to_string(auc_bad)};
}

Outcome auc_anchor(const Context&) {
    const double two = auc_trapezoid(std::vector<double>{0, 890}, std::vector<double>{1, 1});
    std::vector<double> xs{0}, ys{1};
    for (const auto& s : distribution_grid(1000)) {
        const double m = count_median(cell_counts(s, 10, 5));
        if (m > xs.back() && m < kAucAnchor) {
            xs.push_back(m);
            ys.push_back(1);
        }
    }
    xs.push_back(kAucAnchor);
    ys.push_back(1);
    const double many = auc_trapezoid(xs, ys);
    return {two == kAucAnchor && many == kAucAnchor,
            "constant 1 over [0, 890]: " + format_float(two) + " (2 points), " + format_float(many) + " (" +
                std::to_string(xs.size()) + " points)"};
}

Outcome q1_ood_at_100(const Context& ctx) {
    const auto rs = select(ensure_main_sweep(ctx), [](const ResultRecord& r) { return r.ood.level_pct == 100; });
    const auto multi = ood_average(select(rs, [](const ResultRecord& r) { return r.kind.kind == ModelKind::MultiDomain; }));
    const auto spec = ood_average(select(rs, [](const ResultRecord& r) { return r.kind.kind == ModelKind::Specialized; }));
    return {multi.used > 0 && spec.used > 0 && multi.value >= spec.value + kQ1Gap &&
                spec.value <= kChance10 + kQ1ChanceSlack,
            "level 100 OOD average: multi " + fmt(multi.value) + " (n=" + std::to_string(multi.used) +
                "), specialized " + fmt(spec.value) + " (n=" + std::to_string(spec.used) + "); need gap >= " +
                fmt(kQ1Gap, 2) + " and specialized <= " + fmt(kChance10 + kQ1ChanceSlack, 2)};
}

Outcome q2_id_robustness(const Context& ctx) {
    const auto rs = select(ensure_main_sweep(ctx), [](const ResultRecord& r) { return r.kind.kind == ModelKind::MultiDomain; });
    double lo = 1e9, hi = -1e9;
    std::string per_level;
    for (int level : {0, 50, 85, 100}) {
        const auto a = id_average(select(rs, [&](const ResultRecord& r) { return r.ood.level_pct == level; }));
        if (a.used == 0) return {false, "no multi records at level " + std::to_string(level)};
        lo = std::min(lo, a.value);
        hi = std::max(hi, a.value);
        per_level += " " + std::to_string(level) + "%=" + fmt(a.value);
    }
    return {hi - lo <= kQ2Range,
            "multi ID average per level:" + per_level + "; range " + fmt(hi - lo) + " (max " + fmt(kQ2Range, 2) + ")"};
}

Outcome q3_cross_domain(const Context& ctx) {
    const auto rs = select(ensure_main_sweep(ctx), [](const ResultRecord& r) { return r.ood.level_pct == 50; });
    const auto in_dom = id_average(select(rs, [](const ResultRecord& r) {
        return r.kind.kind == ModelKind::Specialized && r.ood.cell.domain_id == r.kind.domain;
    }));
    const auto cross = id_average(select(rs, [](const ResultRecord& r) { return r.kind.kind == ModelKind::SpecializedCross; }));
    return {in_dom.used > 0 && cross.used > 0 && in_dom.value >= cross.value + kQ3Gap,
            "level 50 specialized ID average: in-domain " + fmt(in_dom.value) + " (n=" + std::to_string(in_dom.used) +
                "), cross-domain " + fmt(cross.value) + " (n=" + std::to_string(cross.used) + "); need gap >= " +
                fmt(kQ3Gap, 2)};
}

Outcome control_experiment(const Context& ctx) {
    const ExperimentConfig c = control_sweep_config(ctx.work);
    run_logged(c, 1, true);
    summarize(effective_output_dir(c));
    const auto rs = load_records(effective_output_dir(c));
    const auto at100 = ood_average(select(rs, [](const ResultRecord& r) { return r.ood.level_pct == 100; }));
    const auto at0 = ood_average(select(rs, [](const ResultRecord& r) { return r.ood.level_pct == 0; }));
    return {at100.used > 0 && at0.used > 0 && std::abs(at100.value - kChance5) <= kControlBand &&
                at0.value > kChance5 + kControlBand,
            "grouped control OOD average: level 100 " + fmt(at100.value) + " (n=" + std::to_string(at100.used) +
                ", want " + fmt(kChance5 - kControlBand, 2) + ".." + fmt(kChance5 + kControlBand, 2) + "), level 0 " +
                fmt(at0.value) + " (n=" + std::to_string(at0.used) + ", want > " + fmt(kChance5 + kControlBand, 2) + ")"};
}

std::map<std::string, std::string> result_set(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const char* sub : {"records", "predictions"})
        if (fs::exists(dir / sub))
            for (const auto& e : fs::directory_iterator(dir / sub))
                files[fs::relative(e.path(), dir).string()] = read_file(e.path());
    files["ledger.json"] = read_file(dir / "ledger.json");
    return files;
}

Outcome determinism(const Context& ctx) {
    const fs::path a = ctx.work / "det_serial", b = ctx.work / "det_parallel";
    fs::remove_all(a);
    fs::remove_all(b);
    const RunStats sa = run_logged(determinism_config(a), 1, false);
    const RunStats sb = run_logged(determinism_config(b), 2, false);
    const auto ra = result_set(effective_output_dir(determinism_config(a)));
    const auto rb = result_set(effective_output_dir(determinism_config(b)));
    // Drop one record and resume: the rebuilt set must match too.
    const fs::path dir_a = effective_output_dir(determinism_config(a));
    fs::remove(fs::directory_iterator(dir_a / "records")->path());
    const RunStats sr = run_logged(determinism_config(a), 1, true);
    const auto rr = result_set(dir_a);
    const bool same = ra == rb && ra == rr;
    return {same && sa.failed == 0 && sb.failed == 0 && sr.ran == 1,
            std::to_string(ra.size()) + " files; workers 1 vs 2 " + (ra == rb ? "identical" : "DIFFER") +
                "; resume after deleting one record " + (ra == rr ? "identical" : "DIFFERS") + " (" +
                std::to_string(sr.ran) + " rerun)"};
}

struct Criterion {
    std::string name;
    std::function<Outcome(const Context&)> run;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> all{
        {"distribution_oracle", distribution_oracle}, {"ood_plan_properties", ood_plan_properties},
        {"gradient_check", gradient_check},           {"metric_oracles", metric_oracles},
        {"auc_anchor", auc_anchor},                   {"q1_ood_at_100", q1_ood_at_100},
        {"q2_id_robustness", q2_id_robustness},       {"q3_cross_domain", q3_cross_domain},
        {"control_experiment", control_experiment},   {"determinism", determinism},
    };
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mdbench acceptance suite"};
    Context ctx;
    std::string work = "acceptance_work";
    std::vector<std::string> only;
    bool list = false;
    app.add_option("--work", work, "Directory for the shared sweeps");
    app.add_option("--only", only, "Run only the named criteria");
    app.add_flag("--list", list, "List criterion names");
    CLI11_PARSE(app, argc, argv);
    ctx.work = fs::absolute(work);

    if (list) {
        for (const auto& c : criteria()) std::cout << c.name << "\n";
        return 0;
    }
    for (const auto& name : only)
        if (std::none_of(criteria().begin(), criteria().end(), [&](const Criterion& c) { return c.name == name; })) {
            std::cerr << "unknown criterion '" << name << "'\n";
            return 2;
        }

    int failed = 0;
    for (const auto& c : criteria()) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run(ctx);
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << " [" << fmt(secs, 1) << " s] " << o.detail << std::endl;
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
