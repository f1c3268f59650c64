#include "mdb/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include "mdb/error.hpp"
#include "mdb/rng.hpp"

namespace mdb {
namespace {

std::string cell_name(int c, int d) {
    return "(" + std::to_string(c) + "," + std::to_string(d) + ")";
}

// Uids sorted ascending by a seeded per-uid priority; ties by uid.
std::vector<std::uint64_t> rank_by_priority(std::vector<std::uint64_t> uids, std::uint64_t seed,
                                            StreamTag t) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> keyed;
    keyed.reserve(uids.size());
    for (std::uint64_t u : uids) keyed.emplace_back(stream_key(seed, {tag(t), u}), u);
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t i = 0; i < keyed.size(); ++i) uids[i] = keyed[i].second;
    return uids;
}

std::vector<std::uint64_t> uids_of(const std::vector<Sample>& pool) {
    std::vector<std::uint64_t> out;
    out.reserve(pool.size());
    for (const Sample& s : pool) out.push_back(s.uid);
    return out;
}

// Keeps `keep` first-ranked uids of `pool`, preserving pool order.
std::vector<std::uint64_t> keep_ranked(const std::vector<std::uint64_t>& pool, std::size_t keep,
                                       std::uint64_t seed, StreamTag t) {
    if (keep >= pool.size()) return pool;
    const auto ranked = rank_by_priority(pool, seed, t);
    std::unordered_set<std::uint64_t> chosen(ranked.begin(), ranked.begin() + keep);
    std::vector<std::uint64_t> out;
    out.reserve(keep);
    for (std::uint64_t u : pool)
        if (chosen.count(u)) out.push_back(u);
    return out;
}

std::size_t ceil_pct(int level, std::size_t k) {
    return (static_cast<std::size_t>(level) * k + 99) / 100;
}

std::size_t round_half_even_pct(int pct, std::size_t n) {
    const std::size_t x = static_cast<std::size_t>(pct) * n;
    const std::size_t q = x / 100;
    const std::size_t r = x % 100;
    if (r > 50) return q + 1;
    if (r < 50) return q;
    return q + (q & 1);
}

// Splits `uids` into (kept, removed) by removing the `remove` highest-priority
// uids under the OOD stream. Kept preserves input order.
std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>> exclude(
    const std::vector<std::uint64_t>& uids, std::size_t remove, std::uint64_t seed) {
    if (remove == 0) return {uids, {}};
    const auto ranked = rank_by_priority(uids, seed, StreamTag::Ood);
    std::unordered_set<std::uint64_t> removed(ranked.end() - static_cast<std::ptrdiff_t>(remove), ranked.end());
    std::vector<std::uint64_t> kept, gone;
    for (std::uint64_t u : uids) (removed.count(u) ? gone : kept).push_back(u);
    return {std::move(kept), std::move(gone)};
}

}  // namespace

long long round_half_up(double x) { return static_cast<long long>(std::floor(x + 0.5)); }

long long round_half_even(double x) {
    const double f = std::floor(x);
    const double diff = x - f;
    if (diff > 0.5) return static_cast<long long>(f) + 1;
    if (diff < 0.5) return static_cast<long long>(f);
    const long long fi = static_cast<long long>(f);
    return fi % 2 == 0 ? fi : fi + 1;
}

void DistributionSpec::validate() const {
    if (!(sigma_class > 0.0)) throw ArgumentError("sigma_class must be > 0");
    if (!(sigma_domain > 0.0)) throw ArgumentError("sigma_domain must be > 0");
    if (scale < 0) throw ArgumentError("scale must be >= 0");
}

void OodSpec::validate() const {
    if (std::find(kOodLevels.begin(), kOodLevels.end(), level_pct) == kOodLevels.end()) {
        throw ArgumentError("OOD level " + std::to_string(level_pct) +
                            "% is not one of {0,25,50,75,85,95,100}");
    }
    if (cell.class_id < 0 || cell.domain_id < 0) throw ArgumentError("OOD cell must be non-negative");
}

std::size_t SplitPlan::total_train() const {
    std::size_t n = 0;
    for (const auto& c : cells) n += c.train.size();
    return n;
}

std::size_t SplitPlan::total_val() const {
    std::size_t n = 0;
    for (const auto& c : cells) n += c.val.size();
    return n;
}

std::vector<double> discrete_normal_weights(double mean, double std, int n) {
    if (!(std > 0.0)) throw ArgumentError("discrete_normal_weights: std must be > 0");
    if (n < 1) throw ArgumentError("discrete_normal_weights: n must be >= 1");
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) {
        const double z = i - mean;
        w[i] = std::exp(-(z * z) / (2.0 * std * std));
    }
    const double peak = *std::max_element(w.begin(), w.end());
    for (double& v : w) v /= peak;
    return w;
}

CountMatrix cell_counts(const DistributionSpec& spec, int n_classes, int n_domains) {
    spec.validate();
    const auto wc = discrete_normal_weights(spec.mu_class, spec.sigma_class, n_classes);
    const auto wd = discrete_normal_weights(spec.mu_domain, spec.sigma_domain, n_domains);
    CountMatrix m(n_classes, n_domains);
    for (int c = 0; c < n_classes; ++c)
        for (int d = 0; d < n_domains; ++d)
            m.at(c, d) = static_cast<int>(round_half_up(wc[c] * wd[d] * spec.scale));
    return m;
}

double count_median(const CountMatrix& counts) {
    if (counts.values.empty()) return 0.0;
    std::vector<int> v = counts.values;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return (static_cast<double>(v[n / 2 - 1]) + v[n / 2]) / 2.0;
}

std::vector<DistributionSpec> distribution_grid(int scale, int n_classes, int n_domains) {
    struct Keyed {
        double median;
        double exact_median;
        DistributionSpec spec;
    };
    std::vector<Keyed> specs;
    for (double sigma_class : {3.0, 5.0, 9.0, 17.0}) {
        for (double mu_domain : {0.0, 2.0}) {
            for (double sigma_domain : {1.0, 3.0, 5.0}) {
                DistributionSpec s{0.0, sigma_class, mu_domain, sigma_domain, scale};
                // Scale-free tiebreak so the order is identical for every scale.
                DistributionSpec fine = s;
                fine.scale = 1000000;
                specs.push_back({count_median(cell_counts(s, n_classes, n_domains)),
                                 count_median(cell_counts(fine, n_classes, n_domains)), s});
            }
        }
    }
    std::stable_sort(specs.begin(), specs.end(), [](const Keyed& a, const Keyed& b) {
        if (a.median != b.median) return a.median < b.median;
        return a.exact_median < b.exact_median;
    });
    std::vector<DistributionSpec> out;
    for (const auto& k : specs) out.push_back(k.spec);
    return out;
}

SplitPlan sample_split(const DatasetGrid& grid, const CountMatrix& counts, double train_val_ratio,
                       std::uint64_t seed) {
    if (counts.n_classes != grid.n_classes() || counts.n_domains != grid.n_domains()) {
        throw ArgumentError("sample_split: count matrix shape does not match grid");
    }
    if (!(train_val_ratio > 0.0 && train_val_ratio <= 1.0)) {
        throw ArgumentError("sample_split: train_val_ratio must lie in (0, 1]");
    }
    SplitPlan plan(grid.n_classes(), grid.n_domains());
    for (int c = 0; c < grid.n_classes(); ++c) {
        for (int d = 0; d < grid.n_domains(); ++d) {
            const auto& pool = grid.pool(c, d, Pool::Train);
            const int k = counts.at(c, d);
            if (k < 0 || static_cast<std::size_t>(k) > pool.size()) {
                throw CapacityError("sample_split: cell " + cell_name(c, d) + " requests " +
                                    std::to_string(k) + " samples but the pool holds " +
                                    std::to_string(pool.size()));
            }
            const auto ranked = rank_by_priority(uids_of(pool), stream_key(seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(d)}), StreamTag::Split);
            const auto n_train = static_cast<std::size_t>(std::ceil(train_val_ratio * k));
            auto& cell = plan.cell(c, d);
            cell.train.assign(ranked.begin(), ranked.begin() + n_train);
            cell.val.assign(ranked.begin() + n_train, ranked.begin() + k);
        }
    }
    plan.provenance.amount = AmountKind::Distribution;
    plan.provenance.seed = seed;
    plan.provenance.train_val_ratio = train_val_ratio;
    return plan;
}

SplitPlan percentage_split(const DatasetGrid& grid, int pct, std::uint64_t seed) {
    if (std::find(kSamplingPercentages.begin(), kSamplingPercentages.end(), pct) ==
        kSamplingPercentages.end()) {
        throw ArgumentError("sampling percentage " + std::to_string(pct) +
                            " is not one of {5,10,25,35,50,75,100}");
    }
    SplitPlan plan(grid.n_classes(), grid.n_domains());
    for (int c = 0; c < grid.n_classes(); ++c) {
        for (int d = 0; d < grid.n_domains(); ++d) {
            const auto train = uids_of(grid.pool(c, d, Pool::Train));
            const auto val = uids_of(grid.pool(c, d, Pool::Val));
            auto& cell = plan.cell(c, d);
            cell.train = keep_ranked(train, round_half_even_pct(pct, train.size()), seed, StreamTag::Percentage);
            cell.val = keep_ranked(val, round_half_even_pct(pct, val.size()), seed, StreamTag::Percentage);
        }
    }
    plan.provenance.amount = AmountKind::Percentage;
    plan.provenance.percentage = pct;
    plan.provenance.seed = seed;
    return plan;
}

SplitPlan full_split(const DatasetGrid& grid, std::uint64_t seed) {
    SplitPlan plan(grid.n_classes(), grid.n_domains());
    for (int c = 0; c < grid.n_classes(); ++c) {
        for (int d = 0; d < grid.n_domains(); ++d) {
            plan.cell(c, d).train = uids_of(grid.pool(c, d, Pool::Train));
            plan.cell(c, d).val = uids_of(grid.pool(c, d, Pool::Val));
        }
    }
    plan.provenance.amount = AmountKind::Full;
    plan.provenance.seed = seed;
    return plan;
}

SplitPlan apply_ood(const SplitPlan& plan, const OodSpec& ood, std::uint64_t seed) {
    ood.validate();
    const auto [c, d] = ood.cell;
    if (c >= plan.n_classes || d >= plan.n_domains) {
        throw ArgumentError("apply_ood: cell " + cell_name(c, d) + " outside plan");
    }
    SplitPlan out = plan;
    out.provenance.ood = ood;
    auto& cell = out.cell(c, d);
    // Re-include anything a previous exclusion withheld so levels compose.
    std::vector<std::uint64_t> train = cell.train;
    train.insert(train.end(), cell.excluded_train.begin(), cell.excluded_train.end());
    std::vector<std::uint64_t> val = cell.val;
    val.insert(val.end(), cell.excluded_val.begin(), cell.excluded_val.end());

    auto [kt, gt] = exclude(train, ceil_pct(ood.level_pct, train.size()), seed);
    auto [kv, gv] = exclude(val, ceil_pct(ood.level_pct, val.size()), seed);
    cell.train = std::move(kt);
    cell.excluded_train = std::move(gt);
    cell.val = std::move(kv);
    cell.excluded_val = std::move(gv);
    return out;
}

SplitPlan restrict_to_domain(const SplitPlan& plan, int domain_id) {
    if (domain_id < 0 || domain_id >= plan.n_domains) {
        throw ArgumentError("restrict_to_domain: domain " + std::to_string(domain_id) + " outside plan");
    }
    SplitPlan out(plan.n_classes, plan.n_domains);
    out.provenance = plan.provenance;
    out.provenance.scope = Scope{ModelScope::Specialized, domain_id, 1};
    for (int c = 0; c < plan.n_classes; ++c) out.cell(c, domain_id) = plan.cell(c, domain_id);
    return out;
}

SplitPlan upsample_specialized(const SplitPlan& plan, int domain_id, int factor,
                               const DatasetGrid& grid) {
    if (factor < 1) throw ArgumentError("upsample_specialized: factor must be >= 1");
    SplitPlan out = restrict_to_domain(plan, domain_id);
    out.provenance.scope = Scope{ModelScope::SpecializedUpsampled, domain_id, factor};
    if (factor == 1) return out;

    const std::uint64_t seed = plan.provenance.seed;
    for (int c = 0; c < plan.n_classes; ++c) {
        auto& cell = out.cell(c, domain_id);
        std::vector<std::uint64_t> train = cell.train;
        train.insert(train.end(), cell.excluded_train.begin(), cell.excluded_train.end());
        std::vector<std::uint64_t> val = cell.val;
        val.insert(val.end(), cell.excluded_val.begin(), cell.excluded_val.end());

        const std::size_t extra_train = train.size() * static_cast<std::size_t>(factor - 1);
        const std::size_t extra_val = val.size() * static_cast<std::size_t>(factor - 1);
        const auto reserve = uids_of(grid.pool(c, domain_id, Pool::Reserve));
        if (extra_train + extra_val > reserve.size()) {
            throw CapacityError("upsample_specialized: reserve of cell " + cell_name(c, domain_id) +
                                " holds " + std::to_string(reserve.size()) + " samples, " +
                                std::to_string(extra_train + extra_val) + " needed");
        }
        const auto ranked = rank_by_priority(
            reserve, stream_key(seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(domain_id)}),
            StreamTag::Upsample);
        train.insert(train.end(), ranked.begin(), ranked.begin() + extra_train);
        val.insert(val.end(), ranked.begin() + extra_train, ranked.begin() + extra_train + extra_val);

        cell = CellSplit{std::move(train), std::move(val), {}, {}};
        const auto& ood = plan.provenance.ood;
        if (ood && ood->cell == CellIndex{c, domain_id} && ood->level_pct > 0) {
            auto [kt, gt] = exclude(cell.train, ceil_pct(ood->level_pct, cell.train.size()), seed);
            auto [kv, gv] = exclude(cell.val, ceil_pct(ood->level_pct, cell.val.size()), seed);
            cell = CellSplit{std::move(kt), std::move(kv), std::move(gt), std::move(gv)};
        }
    }
    return out;
}

std::vector<std::pair<int, int>> default_grouping(int n_classes) {
    if (n_classes < 2 || n_classes % 2 != 0) {
        throw ArgumentError("default_grouping needs an even number of classes");
    }
    std::vector<std::pair<int, int>> g;
    for (int i = 0; i < n_classes / 2; ++i) g.emplace_back(i, i + n_classes / 2);
    return g;
}

DatasetGrid grouped_domain_control(const DatasetGrid& grid,
                                   const std::vector<std::pair<int, int>>& grouping,
                                   int source_domain) {
    if (source_domain < 0 || source_domain >= grid.n_domains()) {
        throw ArgumentError("grouped_domain_control: source domain out of range");
    }
    std::vector<int> seen(grid.n_classes(), 0);
    for (const auto& [a, b] : grouping) {
        for (int x : {a, b}) {
            if (x < 0 || x >= grid.n_classes()) throw ArgumentError("grouping references unknown class");
            if (seen[x]++) throw ArgumentError("grouping is not a partition: class repeated");
        }
    }
    if (std::count(seen.begin(), seen.end(), 1) != grid.n_classes()) {
        throw ArgumentError("grouping is not a partition of the class ids");
    }

    const int n_groups = static_cast<int>(grouping.size());
    std::vector<DatasetGrid::CellPools> cells(static_cast<std::size_t>(n_groups) * 2);
    for (int g = 0; g < n_groups; ++g) {
        const int members[2] = {grouping[g].first, grouping[g].second};
        for (int nd = 0; nd < 2; ++nd) {
            for (Pool p : kAllPools) {
                auto& dst = cells[static_cast<std::size_t>(g) * 2 + nd][static_cast<int>(p)];
                for (const Sample& s : grid.pool(members[nd], source_domain, p)) {
                    Sample copy = s;
                    copy.class_id = g;
                    copy.domain_id = nd;
                    dst.push_back(std::move(copy));
                }
            }
        }
    }
    return DatasetGrid(n_groups, 2, std::move(cells));
}

DatasetGrid uniform_resample(const DatasetGrid& grid, int per_cell_train, int per_cell_val,
                             std::uint64_t seed) {
    if (per_cell_train < 0 || per_cell_val < 0) throw ArgumentError("uniform_resample: negative size");
    std::vector<DatasetGrid::CellPools> cells(static_cast<std::size_t>(grid.n_classes()) * grid.n_domains());
    for (int c = 0; c < grid.n_classes(); ++c) {
        for (int d = 0; d < grid.n_domains(); ++d) {
            auto& cell = cells[static_cast<std::size_t>(c) * grid.n_domains() + d];
            for (Pool p : kAllPools) {
                const auto& src = grid.pool(c, d, p);
                const int want = p == Pool::Train ? per_cell_train : p == Pool::Val ? per_cell_val : -1;
                if (want < 0) {
                    cell[static_cast<int>(p)] = src;
                    continue;
                }
                if (static_cast<std::size_t>(want) > src.size()) {
                    throw CapacityError("uniform_resample: cell " + cell_name(c, d) + " " +
                                        std::string(pool_name(p)) + " pool holds " +
                                        std::to_string(src.size()) + ", requested " + std::to_string(want));
                }
                const auto kept = keep_ranked(uids_of(src), static_cast<std::size_t>(want), seed, StreamTag::Resample);
                std::unordered_set<std::uint64_t> keep(kept.begin(), kept.end());
                for (const Sample& s : src)
                    if (keep.count(s.uid)) cell[static_cast<int>(p)].push_back(s);
            }
        }
    }
    return DatasetGrid(grid.n_classes(), grid.n_domains(), std::move(cells));
}

std::vector<CellIndex> all_cells(int n_classes, int n_domains) {
    std::vector<CellIndex> out;
    for (int c = 0; c < n_classes; ++c)
        for (int d = 0; d < n_domains; ++d) out.push_back({c, d});
    return out;
}

}  // namespace mdb
