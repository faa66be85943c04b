#pragma once

// KL and Jensen-Shannon divergence over empirical and exact distributions,
// plus the text discretization used to turn split components into histograms.
// JS here is the base-e variant, so it lives in [0, ln 2].

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "remid/common.hpp"
#include "remid/dataset.hpp"

namespace remid::div {

inline constexpr double kLn2 = 0.6931471805599453;

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

struct Histogram {
    std::map<std::string, double> bins;  // bin id -> probability mass
    std::size_t support_size = 0;
    double smoothing_epsilon = 0.0;

    double mass(const std::string& key) const {
        auto it = bins.find(key);
        return it == bins.end() ? 0.0 : it->second;
    }
};

inline Histogram histogram_from_masses(std::map<std::string, double> masses,
                                       double smoothing_epsilon = 0.0) {
    Histogram h;
    h.bins = std::move(masses);
    h.smoothing_epsilon = smoothing_epsilon;
    KahanSum total;
    for (const auto& [k, v] : h.bins) {
        if (v < 0) throw ValidationError("histogram bin '" + k + "' has negative mass");
        total.add(v);
    }
    if (std::abs(total.value() - 1.0) > 1e-9)
        throw ValidationError("histogram masses sum to " + fmt_double(total.value()) +
                              ", expected 1");
    h.support_size = h.bins.size();
    return h;
}

inline Histogram histogram_from_counts(const std::map<std::string, std::size_t>& counts) {
    std::size_t total = 0;
    for (const auto& [k, c] : counts) total += c;
    if (total == 0) throw ValidationError("cannot build a histogram from zero counts");
    std::map<std::string, double> masses;
    for (const auto& [k, c] : counts)
        masses[k] = static_cast<double>(c) / static_cast<double>(total);
    return histogram_from_masses(std::move(masses));
}

// ---------------------------------------------------------------------------
// KL / JS
// ---------------------------------------------------------------------------

// KL(p || q) in nats over the union of both supports. Smoothing is taken from
// q.smoothing_epsilon: each q-bin gets +eps and the result is renormalized.
// Without smoothing, p>0 against q=0 yields +infinity (a value, not an error).
inline double kl(const Histogram& p, const Histogram& q) {
    std::set<std::string> universe;
    for (const auto& [k, v] : p.bins) universe.insert(k);
    for (const auto& [k, v] : q.bins) universe.insert(k);

    const double eps = q.smoothing_epsilon;
    const double qnorm = 1.0 + eps * static_cast<double>(universe.size());
    KahanSum acc;
    for (const auto& key : universe) {
        double pm = p.mass(key);
        if (pm <= 0.0) continue;
        double qm = (q.mass(key) + eps) / qnorm;
        if (qm <= 0.0) return std::numeric_limits<double>::infinity();
        acc.add(pm * std::log(pm / qm));
    }
    double v = acc.value();
    return (v < 0 && v > -1e-12) ? 0.0 : v;  // Gibbs up to fp noise
}

// JS(p || q) = [KL(p||m) + KL(q||m)] / 2 with m = (p+q)/2. Always finite,
// symmetric, in [0, ln 2]. The mixture dominates both arguments so no
// smoothing is ever applied here.
inline double js(const Histogram& p, const Histogram& q) {
    std::set<std::string> universe;
    for (const auto& [k, v] : p.bins) universe.insert(k);
    for (const auto& [k, v] : q.bins) universe.insert(k);

    KahanSum accp, accq;
    for (const auto& key : universe) {
        double pm = p.mass(key);
        double qm = q.mass(key);
        double m = 0.5 * (pm + qm);
        if (pm > 0.0) accp.add(pm * std::log(pm / m));
        if (qm > 0.0) accq.add(qm * std::log(qm / m));
    }
    double v = 0.5 * (accp.value() + accq.value());
    if (v < 0 && v > -1e-12) v = 0.0;
    return v;
}

// Standalone KL on empirical histograms: a 1e-9 floor keeps bins present in
// p but unseen in q from collapsing the whole value to infinity. JS never
// needs this (the mixture dominates both arguments).
inline double kl_empirical(const Histogram& p, Histogram q) {
    if (q.smoothing_epsilon == 0.0) q.smoothing_epsilon = 1e-9;
    return kl(p, q);
}

// Aligned-vector forms for exact finite distributions (world marginals and
// conditional rows). Same definitions as the histogram forms.
inline double kl_vec(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw ValidationError("kl_vec: size mismatch");
    KahanSum acc;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
        acc.add(p[i] * std::log(p[i] / q[i]));
    }
    double v = acc.value();
    return (v < 0 && v > -1e-12) ? 0.0 : v;
}

inline double js_vec(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw ValidationError("js_vec: size mismatch");
    KahanSum accp, accq;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) accp.add(p[i] * std::log(p[i] / m));
        if (q[i] > 0.0) accq.add(q[i] * std::log(q[i] / m));
    }
    double v = 0.5 * (accp.value() + accq.value());
    if (v < 0 && v > -1e-12) v = 0.0;
    return v;
}

inline double entropy_vec(const std::vector<double>& p) {
    KahanSum acc;
    for (double x : p)
        if (x > 0.0) acc.add(-x * std::log(x));
    double v = acc.value();
    return v < 0 ? 0.0 : v;
}

// ---------------------------------------------------------------------------
// Text discretization
// ---------------------------------------------------------------------------

struct ExactCategorical {};
struct HashBuckets {
    std::size_t k = 512;
    std::uint64_t seed = 0;
};
struct ExternalLabels {
    std::filesystem::path path;
};

using DiscretizeStrategy = std::variant<ExactCategorical, HashBuckets, ExternalLabels>;

namespace detail {

inline std::map<std::string, std::string> load_label_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open label file: " + path.string());
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed label JSON in " + path.string() + ": " + e.what());
    }
    if (!root.is_object()) throw ParseError("label file must be a JSON object of text -> label");
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : root.items()) {
        if (!v.is_string()) throw ParseError("label for '" + k + "' is not a string");
        out[normalize_ws(k)] = v.get<std::string>();
    }
    return out;
}

}  // namespace detail

inline Histogram discretize(const std::vector<std::string>& texts,
                            const DiscretizeStrategy& strategy) {
    if (texts.empty()) throw ValidationError("discretize: empty text list");
    std::map<std::string, std::size_t> counts;
    if (std::holds_alternative<ExactCategorical>(strategy)) {
        for (const auto& t : texts) counts[normalize_ws(t)] += 1;
    } else if (const auto* hb = std::get_if<HashBuckets>(&strategy)) {
        if (hb->k == 0) throw ConfigError("hash_buckets: K must be positive");
        for (const auto& t : texts) {
            std::uint64_t h = fnv1a64(normalize_ws(t), hb->seed) % hb->k;
            counts["b" + std::to_string(h)] += 1;
        }
    } else {
        const auto& el = std::get<ExternalLabels>(strategy);
        auto labels = detail::load_label_map(el.path);
        for (const auto& t : texts) {
            auto it = labels.find(normalize_ws(t));
            if (it == labels.end())
                throw ValidationError("external_labels: unlabeled text: " +
                                      normalize_ws(t).substr(0, 64));
            counts[it->second] += 1;
        }
    }
    return histogram_from_counts(counts);
}

// ---------------------------------------------------------------------------
// Shift severity
// ---------------------------------------------------------------------------

struct ShiftSeverity {
    double js_user = 0.0;
    double js_character = 0.0;
    double js_dialogue = 0.0;
    std::optional<double> combined_joint;

    double sqrt_sum() const {
        return std::sqrt(js_user) + std::sqrt(js_character) + std::sqrt(js_dialogue);
    }
};

inline nlohmann::json to_json(const ShiftSeverity& s) {
    nlohmann::json j;
    j["js_user"] = s.js_user;
    j["js_character"] = s.js_character;
    j["js_dialogue"] = s.js_dialogue;
    j["sqrt_sum"] = s.sqrt_sum();
    if (s.combined_joint) j["combined_joint"] = *s.combined_joint;
    return j;
}

inline std::string severity_csv_header() {
    return "id_split,ood_split,js_user,js_character,js_dialogue,sqrt_sum";
}

inline std::string severity_csv_row(const std::string& id_name, const std::string& ood_name,
                                    const ShiftSeverity& s) {
    return id_name + "," + ood_name + "," + fmt_double(s.js_user) + "," +
           fmt_double(s.js_character) + "," + fmt_double(s.js_dialogue) + "," +
           fmt_double(s.sqrt_sum());
}

inline ShiftSeverity shift_severity(const data::Split& id_split, const data::Split& ood_split,
                                    const DiscretizeStrategy& strategy) {
    if (id_split.samples.empty() || ood_split.samples.empty())
        throw ValidationError("shift_severity: both splits must be non-empty");

    auto component = [&](const data::Split& split, int which) {
        std::vector<std::string> texts;
        texts.reserve(split.samples.size());
        for (const auto& s : split.samples) {
            if (which == 0)
                texts.push_back(s.user_persona);
            else if (which == 1)
                texts.push_back(s.agent_character.serialized());
            else
                texts.push_back(s.dialogue_serialized());
        }
        return discretize(texts, strategy);
    };

    ShiftSeverity out;
    out.js_user = js(component(id_split, 0), component(ood_split, 0));
    out.js_character = js(component(id_split, 1), component(ood_split, 1));
    out.js_dialogue = js(component(id_split, 2), component(ood_split, 2));

    // The joint over raw component triples is only defined for synthetic
    // samples under exact categorical binning; on free text the supported
    // product is the per-component severities.
    bool synthetic = std::holds_alternative<ExactCategorical>(strategy);
    for (const auto& s : id_split.samples) synthetic = synthetic && s.ids.has_value();
    for (const auto& s : ood_split.samples) synthetic = synthetic && s.ids.has_value();
    if (synthetic) {
        auto joint = [](const data::Split& split) {
            std::map<std::string, std::size_t> counts;
            for (const auto& s : split.samples)
                counts[std::to_string(s.ids->u) + "|" + std::to_string(s.ids->a) + "|" +
                       std::to_string(s.ids->d)] += 1;
            return histogram_from_counts(counts);
        };
        out.combined_joint = js(joint(id_split), joint(ood_split));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Decomposition report: how the joint JS over independent component triples
// relates to the sum of per-component JS terms, and the sqrt-subadditivity
// step used when assembling the severity bound.
// ---------------------------------------------------------------------------

struct DecompositionReport {
    double js_u = 0.0, js_a = 0.0, js_d = 0.0;
    double js_joint = 0.0;
    double two_js_joint = 0.0;        // 2 * D_JS(P_X || Q_X)
    double two_thirds_marginals = 0.0;  // (2/3) * sum of component JS
    double dropped_conditional_gap = 0.0;  // difference between the two above
    double sqrt_of_sum = 0.0;   // sqrt(js_u + js_a + js_d)
    double sum_of_sqrts = 0.0;  // sqrt(js_u) + sqrt(js_a) + sqrt(js_d)
    bool sqrt_subadditive = false;
};

// Components are independent under each of P and Q: the joints are the
// products of the marginals. The mixture of two products is not a product,
// which is exactly where the dropped conditional terms live.
inline DecompositionReport decomposition_check(
    const std::vector<double>& p_u, const std::vector<double>& p_a,
    const std::vector<double>& p_d, const std::vector<double>& q_u,
    const std::vector<double>& q_a, const std::vector<double>& q_d) {
    DecompositionReport rep;
    rep.js_u = js_vec(p_u, q_u);
    rep.js_a = js_vec(p_a, q_a);
    rep.js_d = js_vec(p_d, q_d);

    std::vector<double> pj, qj;
    pj.reserve(p_u.size() * p_a.size() * p_d.size());
    for (double pu : p_u)
        for (double pa : p_a)
            for (double pd : p_d) pj.push_back(pu * pa * pd);
    for (double qu : q_u)
        for (double qa : q_a)
            for (double qd : q_d) qj.push_back(qu * qa * qd);
    rep.js_joint = js_vec(pj, qj);

    rep.two_js_joint = 2.0 * rep.js_joint;
    rep.two_thirds_marginals = (2.0 / 3.0) * (rep.js_u + rep.js_a + rep.js_d);
    rep.dropped_conditional_gap = rep.two_js_joint - rep.two_thirds_marginals;
    rep.sqrt_of_sum = std::sqrt(rep.js_u + rep.js_a + rep.js_d);
    rep.sum_of_sqrts = std::sqrt(rep.js_u) + std::sqrt(rep.js_a) + std::sqrt(rep.js_d);
    rep.sqrt_subadditive = rep.sqrt_of_sum <= rep.sum_of_sqrts + 1e-12;
    return rep;
}

inline nlohmann::json to_json(const DecompositionReport& r) {
    nlohmann::json j;
    j["js_u"] = r.js_u;
    j["js_a"] = r.js_a;
    j["js_d"] = r.js_d;
    j["js_joint"] = r.js_joint;
    j["two_js_joint"] = r.two_js_joint;
    j["two_thirds_marginals"] = r.two_thirds_marginals;
    j["dropped_conditional_gap"] = r.dropped_conditional_gap;
    j["sqrt_of_sum"] = r.sqrt_of_sum;
    j["sum_of_sqrts"] = r.sum_of_sqrts;
    j["sqrt_subadditive"] = r.sqrt_subadditive;
    return j;
}

}  // namespace remid::div
