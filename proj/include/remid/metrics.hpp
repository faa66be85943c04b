#pragma once

// The drop metrics. For a split and a model under evaluation:
//
//   remi  = club(inputs+reasoning, model responses) - club(inputs+reasoning, golden responses)
//   remid = remi(id split) - remi(ood split)
//
// and the worst-case drop bound
//
//   sqrt(2/3) * H_hat * sum_z sqrt(JS(P_z || Q_z))  +  8 * Delta^(1/4)
//
// with H_hat the max over evaluated inputs of the golden-conditional entropy
// plus the model-conditional entropy, and Delta the summed JS between model
// and golden response marginals on each side. Both MI terms are scored by a
// single estimator provider; a reasoner, when present, augments every input
// with one generated reasoning trace.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "remid/common.hpp"
#include "remid/dataset.hpp"
#include "remid/divergence.hpp"
#include "remid/mi.hpp"
#include "remid/providers.hpp"
#include "remid/world.hpp"
#include "remid/worlds.hpp"

namespace remid::metrics {

using json = nlohmann::json;

struct EvalBundle {
    std::shared_ptr<prov::Provider> rpm;        // model under evaluation (samples y_theta)
    std::shared_ptr<prov::Provider> estimator;  // density scoring log p(y|x,r) for both terms
    std::shared_ptr<prov::Reasoner> reasoner;   // optional; absent -> plain (no-reasoning) variant
    std::size_t sample_budget = 256;            // N
    std::size_t entropy_samples = 64;           // K for Monte-Carlo entropies
    std::uint64_t seed = 0;
    double max_failure_rate = 0.05;
    std::size_t bootstrap_resamples = 1000;
};

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t state = base ^ (salt * 0x9e3779b97f4a7c15ull);
    return splitmix64(state);
}

struct RemiReport {
    double remi_value = 0.0;
    double mi_model = 0.0;
    double mi_gold = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n_used = 0;
    std::size_t excluded_neg_inf = 0;
    std::size_t failed_samples = 0;
    std::string variant;  // "remi" with a reasoner, "emi" without
    std::vector<double> per_item;  // paired per-sample contributions
};

struct RemidReport {
    RemiReport remi_id;
    RemiReport remi_ood;
    double remid_value = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct BoundInputs {
    double entropy_hat = 0.0;
    double delta_p = 0.0;
    double delta_q = 0.0;
    div::ShiftSeverity severity;
    double delta() const { return delta_p + delta_q; }
};

struct BoundReport {
    double bound = 0.0;
    BoundInputs inputs;
};

// ---------------------------------------------------------------------------
// Evaluation set preparation
// ---------------------------------------------------------------------------

namespace detail {

struct EvalItem {
    prov::RenderedContext context;
    prov::Target gold;
    prov::Target model;       // one sampled model response per input
    std::string model_text;   // raw text for response-marginal histograms
    std::string gold_text;
};

struct EvalSet {
    std::vector<EvalItem> items;
    std::size_t failed = 0;
    std::vector<std::string> failures;
};

inline std::vector<std::size_t> budget_indices(std::size_t n, std::size_t budget,
                                               std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (budget >= n) return idx;
    auto rng = make_rng(seed, 47);
    for (std::size_t i = 0; i < budget; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(budget);
    return idx;
}

// Renders contexts (with one reasoning trace per input when a reasoner is
// present) and draws one model response per input. Transport and protocol
// failures are collected per sample; the run aborts when their fraction
// exceeds the bundle's limit.
inline EvalSet prepare_eval_set(const data::Split& split, const EvalBundle& bundle,
                                std::uint64_t side_salt) {
    if (split.samples.empty())
        throw ValidationError("split '" + split.name + "' is empty");
    if (!bundle.rpm || !bundle.estimator)
        throw ConfigError("eval bundle needs both an rpm and an estimator provider");
    if (bundle.sample_budget < 2)
        throw ValidationError("sample budget must be >= 2");

    EvalSet set;
    auto indices = budget_indices(split.samples.size(), bundle.sample_budget,
                                  derive_seed(bundle.seed, side_salt));
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto& sample = split.samples[indices[k]];
        try {
            std::optional<prov::Reasoning> reasoning;
            prov::PromptTemplate tmpl = prov::PromptTemplate::plain;
            if (bundle.reasoner) {
                reasoning = bundle.reasoner->reason(sample);
                if (!reasoning->text.empty()) tmpl = prov::PromptTemplate::with_reasoning;
            }
            EvalItem item;
            item.context = prov::render_prompt(sample, reasoning, tmpl);
            item.gold = prov::Target{sample.agent_golden_response,
                                     sample.ids ? std::optional<int>(sample.ids->y)
                                                : std::nullopt};
            item.gold_text = sample.agent_golden_response;
            auto draws = bundle.rpm->sample(item.context, 1, 1.0,
                                            derive_seed(bundle.seed, side_salt * 1315423911ull +
                                                                          indices[k]));
            if (draws.empty()) throw ProtocolError("rpm returned no samples");
            item.model = prov::Target{draws.front().text, draws.front().id};
            item.model_text = draws.front().text;
            set.items.push_back(std::move(item));
        } catch (const TransportError& e) {
            ++set.failed;
            set.failures.push_back(sample.sample_id + ": " + e.what());
        } catch (const ProtocolError& e) {
            ++set.failed;
            set.failures.push_back(sample.sample_id + ": " + e.what());
        }
    }
    const double total = static_cast<double>(set.items.size() + set.failed);
    if (set.failed > 0 && static_cast<double>(set.failed) / total > bundle.max_failure_rate) {
        std::string msg = "provider failures on " + std::to_string(set.failed) + "/" +
                          std::to_string(static_cast<std::size_t>(total)) + " samples:";
        for (std::size_t i = 0; i < set.failures.size() && i < 5; ++i)
            msg += "\n  " + set.failures[i];
        throw ProtocolError(msg);
    }
    return set;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// remi / remid
// ---------------------------------------------------------------------------

inline RemiReport remi(const data::Split& split, const EvalBundle& bundle,
                       std::uint64_t side_salt = 2) {
    auto set = detail::prepare_eval_set(split, bundle, side_salt);
    const std::size_t n = set.items.size();
    if (n < 2) throw ValidationError("fewer than two usable samples after failures");

    auto cross_mode = mi::default_cross_mode(n, derive_seed(bundle.seed, side_salt + 101));
    mi::BootstrapConfig bs{bundle.bootstrap_resamples, derive_seed(bundle.seed, side_salt + 202)};

    auto gold_est = mi::detail::club_from_scores(
        n, cross_mode,
        [&](std::size_t i, std::size_t j) {
            return bundle.estimator->score(set.items[i].context, set.items[j].gold).total_logprob;
        },
        bs);
    auto model_est = mi::detail::club_from_scores(
        n, cross_mode,
        [&](std::size_t i, std::size_t j) {
            return bundle.estimator->score(set.items[i].context, set.items[j].model).total_logprob;
        },
        bs);

    RemiReport rep;
    rep.n_used = n;
    rep.failed_samples = set.failed;
    rep.excluded_neg_inf = gold_est.excluded_neg_inf + model_est.excluded_neg_inf;
    rep.mi_gold = gold_est.value;
    rep.mi_model = model_est.value;
    rep.variant = bundle.reasoner ? "remi" : "emi";
    rep.per_item.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        rep.per_item[i] = model_est.per_item[i] - gold_est.per_item[i];
    rep.remi_value = mean_of(rep.per_item);
    auto boot = mi::bootstrap_mean(rep.per_item, bs);
    rep.se = boot.se;
    rep.ci_low = boot.ci_low;
    rep.ci_high = boot.ci_high;
    return rep;
}

inline RemidReport remid(const data::Split& id_split, const data::Split& ood_split,
                         const EvalBundle& bundle) {
    RemidReport rep;
    rep.remi_id = remi(id_split, bundle, 2);
    rep.remi_ood = remi(ood_split, bundle, 3);
    rep.remid_value = rep.remi_id.remi_value - rep.remi_ood.remi_value;
    rep.se = std::sqrt(rep.remi_id.se * rep.remi_id.se + rep.remi_ood.se * rep.remi_ood.se);
    rep.ci_low = rep.remid_value - 1.96 * rep.se;
    rep.ci_high = rep.remid_value + 1.96 * rep.se;
    return rep;
}

// ---------------------------------------------------------------------------
// Drop bound from evaluated splits
// ---------------------------------------------------------------------------

inline BoundReport drop_bound(const data::Split& id_split, const data::Split& ood_split,
                                  const EvalBundle& bundle,
                                  const div::DiscretizeStrategy& strategy) {
    BoundReport rep;
    rep.inputs.severity = div::shift_severity(id_split, ood_split, strategy);

    auto id_set = detail::prepare_eval_set(id_split, bundle, 2);
    auto ood_set = detail::prepare_eval_set(ood_split, bundle, 3);

    // H_hat: max over every evaluated input of the golden-conditional entropy
    // (the estimator stands in for it) plus the model-conditional entropy.
    // Exact enumeration when the backend exposes its conditional, Monte Carlo
    // otherwise.
    double entropy_hat = 0.0;
    std::size_t ctx_index = 0;
    for (const auto* set : {&id_set, &ood_set}) {
        for (const auto& item : set->items) {
            double h_gold = mi::conditional_entropy(item.context, *bundle.estimator,
                                                    bundle.entropy_samples,
                                                    derive_seed(bundle.seed, 900 + ctx_index));
            double h_model = mi::conditional_entropy(item.context, *bundle.rpm,
                                                     bundle.entropy_samples,
                                                     derive_seed(bundle.seed, 901 + ctx_index));
            entropy_hat = std::max(entropy_hat, h_gold + h_model);
            ++ctx_index;
        }
    }
    rep.inputs.entropy_hat = entropy_hat;

    // delta terms: JS between discretized model-response and golden-response
    // marginals on each side.
    auto marginal_js = [&](const detail::EvalSet& set) {
        std::vector<std::string> gold_texts, model_texts;
        for (const auto& item : set.items) {
            gold_texts.push_back(item.gold_text);
            model_texts.push_back(item.model_text);
        }
        return div::js(div::discretize(model_texts, strategy),
                       div::discretize(gold_texts, strategy));
    };
    rep.inputs.delta_p = marginal_js(id_set);
    rep.inputs.delta_q = marginal_js(ood_set);

    rep.bound = world::assemble_bound(entropy_hat, rep.inputs.severity.js_user,
                                      rep.inputs.severity.js_character,
                                      rep.inputs.severity.js_dialogue, rep.inputs.delta());
    return rep;
}

// ---------------------------------------------------------------------------
// Oracle bundles for synthetic worlds
// ---------------------------------------------------------------------------

// Estimator scores with the golden table; the rpm samples from the model
// table; the reasoner draws from the world's reasoning table.
inline EvalBundle make_oracle_bundle(const world::SyntheticWorld& w, std::size_t n,
                                     std::uint64_t seed, bool with_reasoner = true,
                                     std::size_t entropy_samples = 64) {
    EvalBundle b;
    b.rpm = std::make_shared<prov::OracleProvider>(w, world::Table::model,
                                                   derive_seed(seed, 7001));
    b.estimator = std::make_shared<prov::OracleProvider>(w, world::Table::gold,
                                                         derive_seed(seed, 7002));
    if (with_reasoner)
        b.reasoner = std::make_shared<prov::WorldReasoner>(w, derive_seed(seed, 7003));
    b.sample_budget = n;
    b.entropy_samples = entropy_samples;
    b.seed = seed;
    return b;
}

// Exact expectation of what remi estimates on a synthetic world when the
// shared estimator scores with `density`: both club terms enumerated in
// closed form. The model term conditions its response on the regenerated
// reasoning trace; the golden term's response predates that trace, so its
// law given x marginalizes the reasoning out (exact_club_regen).
inline double exact_remi_expectation(const world::SyntheticWorld& w, world::Which which,
                                     world::Table density = world::Table::gold) {
    return world::exact_club_mixed(w, which, world::Table::model, density) -
           world::exact_club_regen(w, which, world::Table::gold, density);
}

inline double exact_remid_expectation(const world::SyntheticWorld& w,
                                      world::Table density = world::Table::gold) {
    return exact_remi_expectation(w, world::Which::P, density) -
           exact_remi_expectation(w, world::Which::Q, density);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json to_json(const RemiReport& r) {
    json j;
    j["variant"] = r.variant;
    j["remi_value"] = r.remi_value;
    j["mi_model"] = r.mi_model;
    j["mi_gold"] = r.mi_gold;
    j["se"] = r.se;
    j["ci_low"] = r.ci_low;
    j["ci_high"] = r.ci_high;
    j["n_used"] = r.n_used;
    j["excluded_neg_inf"] = r.excluded_neg_inf;
    j["failed_samples"] = r.failed_samples;
    return j;
}

inline json to_json(const RemidReport& r) {
    json j;
    j["remid_value"] = r.remid_value;
    j["se"] = r.se;
    j["ci_low"] = r.ci_low;
    j["ci_high"] = r.ci_high;
    j["remi_id"] = to_json(r.remi_id);
    j["remi_ood"] = to_json(r.remi_ood);
    return j;
}

inline json to_json(const BoundReport& r) {
    json j;
    j["bound"] = r.bound;
    j["entropy_hat"] = r.inputs.entropy_hat;
    j["delta_p"] = r.inputs.delta_p;
    j["delta_q"] = r.inputs.delta_q;
    j["delta"] = r.inputs.delta();
    j["severity"] = div::to_json(r.inputs.severity);
    return j;
}

}  // namespace remid::metrics
