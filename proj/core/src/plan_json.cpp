#include <string>

#include "json.hpp"
#include "mdb/digest.hpp"
#include "mdb/diversity.hpp"
#include "mdb/error.hpp"

namespace mdb {
namespace {

using nlohmann::json;

constexpr const char* kPlanSchema = "mdb.splitplan/1";

const char* amount_name(AmountKind k) {
    switch (k) {
        case AmountKind::Distribution: return "distribution";
        case AmountKind::Percentage: return "percentage";
        case AmountKind::UniformResample: return "uniform_resample";
        case AmountKind::Full: return "full";
    }
    return "?";
}

AmountKind parse_amount(const std::string& s) {
    for (AmountKind k : {AmountKind::Distribution, AmountKind::Percentage,
                         AmountKind::UniformResample, AmountKind::Full}) {
        if (s == amount_name(k)) return k;
    }
    throw LoadError("unknown amount kind '" + s + "'");
}

const char* scope_name(ModelScope k) {
    switch (k) {
        case ModelScope::MultiDomain: return "multi_domain";
        case ModelScope::Specialized: return "specialized";
        case ModelScope::SpecializedUpsampled: return "specialized_upsampled";
    }
    return "?";
}

ModelScope parse_scope(const std::string& s) {
    for (ModelScope k : {ModelScope::MultiDomain, ModelScope::Specialized,
                         ModelScope::SpecializedUpsampled}) {
        if (s == scope_name(k)) return k;
    }
    throw LoadError("unknown model scope '" + s + "'");
}

json uid_array(const std::vector<std::uint64_t>& uids) {
    json a = json::array();
    for (std::uint64_t u : uids) a.push_back(to_hex(u));
    return a;
}

std::vector<std::uint64_t> parse_uids(const json& a) {
    std::vector<std::uint64_t> out;
    for (const auto& v : a) out.push_back(std::stoull(v.get<std::string>(), nullptr, 16));
    return out;
}

}  // namespace

std::string to_json(const SplitPlan& plan) {
    const auto& pv = plan.provenance;
    json prov{{"amount", amount_name(pv.amount)},
              {"seed", pv.seed},
              {"train_val_ratio", pv.train_val_ratio},
              {"scope",
               {{"kind", scope_name(pv.scope.kind)}, {"domain", pv.scope.domain}, {"factor", pv.scope.factor}}}};
    if (pv.distribution) {
        const auto& d = *pv.distribution;
        prov["distribution"] = {{"mu_class", d.mu_class},
                                {"sigma_class", d.sigma_class},
                                {"mu_domain", d.mu_domain},
                                {"sigma_domain", d.sigma_domain},
                                {"scale", d.scale}};
    }
    if (pv.percentage) prov["percentage"] = *pv.percentage;
    if (pv.ood) {
        prov["ood"] = {{"class_id", pv.ood->cell.class_id},
                       {"domain_id", pv.ood->cell.domain_id},
                       {"level_pct", pv.ood->level_pct}};
    }

    json cells = json::array();
    for (int c = 0; c < plan.n_classes; ++c) {
        for (int d = 0; d < plan.n_domains; ++d) {
            const auto& cell = plan.cell(c, d);
            json jc{{"class_id", c}, {"domain_id", d}, {"train", uid_array(cell.train)}, {"val", uid_array(cell.val)}};
            if (!cell.excluded_train.empty() || !cell.excluded_val.empty()) {
                jc["excluded_train"] = uid_array(cell.excluded_train);
                jc["excluded_val"] = uid_array(cell.excluded_val);
            }
            cells.push_back(std::move(jc));
        }
    }
    json doc{{"schema", kPlanSchema},
             {"n_classes", plan.n_classes},
             {"n_domains", plan.n_domains},
             {"provenance", std::move(prov)},
             {"cells", std::move(cells)}};
    return doc.dump(1);
}

SplitPlan plan_from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        if (doc.at("schema").get<std::string>() != kPlanSchema) {
            throw LoadError("unsupported split plan schema '" + doc.at("schema").get<std::string>() + "'");
        }
        SplitPlan plan(doc.at("n_classes").get<int>(), doc.at("n_domains").get<int>());
        const json& prov = doc.at("provenance");
        auto& pv = plan.provenance;
        pv.amount = parse_amount(prov.at("amount").get<std::string>());
        pv.seed = prov.at("seed").get<std::uint64_t>();
        pv.train_val_ratio = prov.at("train_val_ratio").get<double>();
        const json& sc = prov.at("scope");
        pv.scope = Scope{parse_scope(sc.at("kind").get<std::string>()), sc.at("domain").get<int>(),
                         sc.at("factor").get<int>()};
        if (prov.contains("distribution")) {
            const json& d = prov["distribution"];
            pv.distribution = DistributionSpec{d.at("mu_class").get<double>(), d.at("sigma_class").get<double>(),
                                               d.at("mu_domain").get<double>(), d.at("sigma_domain").get<double>(),
                                               d.at("scale").get<int>()};
        }
        if (prov.contains("percentage")) pv.percentage = prov["percentage"].get<int>();
        if (prov.contains("ood")) {
            const json& o = prov["ood"];
            pv.ood = OodSpec{{o.at("class_id").get<int>(), o.at("domain_id").get<int>()}, o.at("level_pct").get<int>()};
        }
        for (const json& jc : doc.at("cells")) {
            const int c = jc.at("class_id").get<int>();
            const int d = jc.at("domain_id").get<int>();
            if (c < 0 || c >= plan.n_classes || d < 0 || d >= plan.n_domains) {
                throw LoadError("split plan cell outside grid");
            }
            auto& cell = plan.cell(c, d);
            cell.train = parse_uids(jc.at("train"));
            cell.val = parse_uids(jc.at("val"));
            if (jc.contains("excluded_train")) cell.excluded_train = parse_uids(jc["excluded_train"]);
            if (jc.contains("excluded_val")) cell.excluded_val = parse_uids(jc["excluded_val"]);
        }
        return plan;
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed split plan: ") + e.what());
    }
}

std::uint64_t plan_digest(const SplitPlan& plan) { return digest_of(to_json(plan)); }

}  // namespace mdb
