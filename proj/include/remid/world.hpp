#pragma once

// Finite discrete worlds over (U, A, D, R, Y) with known tables. Everything
// an estimator produces on these worlds can be recomputed exactly by full
// enumeration, which is what the oracle functions below do.
//
// A world holds two input distributions P and Q (independent component
// marginals over U, A, D), one reasoning table p(r|u,a,d), one golden
// conditional p(y|u,a,d,r) shared by P and Q, and one model conditional
// p_model(y|u,a,d,r).

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "remid/common.hpp"
#include "remid/dataset.hpp"
#include "remid/divergence.hpp"

namespace remid::world {

using json = nlohmann::json;

enum class Which { P, Q };
enum class Table { gold, model };

struct SyntheticWorld {
    std::string name;
    int nu = 0, na = 0, nd = 0, nr = 0, ny = 0;

    std::vector<double> p_u, p_a, p_d;  // P marginals
    std::vector<double> q_u, q_a, q_d;  // Q marginals

    std::vector<double> reasoning;  // [nx() * nr] row-major: p(r | u,a,d)
    std::vector<double> gold;       // [nx() * nr * ny]: p(y | u,a,d,r)
    std::vector<double> model;      // [nx() * nr * ny]: p_model(y | u,a,d,r)

    int nx() const { return nu * na * nd; }

    int x_index(int u, int a, int d) const { return (u * na + a) * nd + d; }

    void x_decode(int x, int& u, int& a, int& d) const {
        d = x % nd;
        a = (x / nd) % na;
        u = x / (nd * na);
    }

    double px(Which which, int x) const {
        int u, a, d;
        x_decode(x, u, a, d);
        const auto& mu = which == Which::P ? p_u : q_u;
        const auto& ma = which == Which::P ? p_a : q_a;
        const auto& md = which == Which::P ? p_d : q_d;
        return mu[static_cast<size_t>(u)] * ma[static_cast<size_t>(a)] *
               md[static_cast<size_t>(d)];
    }

    double p_r(int x, int r) const {
        return reasoning[static_cast<size_t>(x) * nr + r];
    }

    const std::vector<double>& table(Table t) const {
        return t == Table::gold ? gold : model;
    }

    double cond(Table t, int x, int r, int y) const {
        return table(t)[(static_cast<size_t>(x) * nr + r) * ny + y];
    }

    // p(y | x) with the reasoning id marginalized out; this is what scoring
    // without a reasoning trace conditions on.
    std::vector<double> cond_marginal_r(Table t, int x) const {
        std::vector<double> row(static_cast<size_t>(ny), 0.0);
        for (int r = 0; r < nr; ++r) {
            double pr = p_r(x, r);
            if (pr <= 0.0) continue;
            for (int y = 0; y < ny; ++y) row[static_cast<size_t>(y)] += pr * cond(t, x, r, y);
        }
        return row;
    }

    std::vector<double> cond_row(Table t, int x, int r) const {
        if (r < 0) return cond_marginal_r(t, x);
        const auto& tab = table(t);
        auto begin = tab.begin() + (static_cast<size_t>(x) * nr + r) * ny;
        return std::vector<double>(begin, begin + ny);
    }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_prob_vector(const std::vector<double>& v, std::size_t n,
                              const std::string& what) {
    if (v.size() != n)
        throw ValidationError(what + ": expected " + std::to_string(n) + " entries, got " +
                              std::to_string(v.size()));
    KahanSum s;
    for (double x : v) {
        if (x < 0.0) throw ValidationError(what + ": negative probability");
        s.add(x);
    }
    if (std::abs(s.value() - 1.0) > 1e-12)
        throw ValidationError(what + ": row sums to " + fmt_double(s.value()));
}

}  // namespace detail

inline void validate_world(const SyntheticWorld& w) {
    if (w.nu <= 0 || w.na <= 0 || w.nd <= 0 || w.nr <= 0 || w.ny <= 0)
        throw ValidationError("world '" + w.name + "': all sizes must be positive");
    detail::check_prob_vector(w.p_u, w.nu, "p_u");
    detail::check_prob_vector(w.p_a, w.na, "p_a");
    detail::check_prob_vector(w.p_d, w.nd, "p_d");
    detail::check_prob_vector(w.q_u, w.nu, "q_u");
    detail::check_prob_vector(w.q_a, w.na, "q_a");
    detail::check_prob_vector(w.q_d, w.nd, "q_d");
    const std::size_t nx = static_cast<std::size_t>(w.nx());
    if (w.reasoning.size() != nx * w.nr)
        throw ValidationError("reasoning table has wrong shape");
    if (w.gold.size() != nx * w.nr * w.ny || w.model.size() != nx * w.nr * w.ny)
        throw ValidationError("conditional tables have wrong shape");
    for (std::size_t x = 0; x < nx; ++x) {
        std::vector<double> row(w.reasoning.begin() + x * w.nr,
                                w.reasoning.begin() + (x + 1) * w.nr);
        detail::check_prob_vector(row, w.nr, "reasoning row " + std::to_string(x));
        for (int r = 0; r < w.nr; ++r) {
            for (auto t : {Table::gold, Table::model}) {
                const auto& tab = w.table(t);
                std::vector<double> cond(tab.begin() + (x * w.nr + r) * w.ny,
                                         tab.begin() + (x * w.nr + r + 1) * w.ny);
                detail::check_prob_vector(cond, w.ny,
                                          std::string(t == Table::gold ? "gold" : "model") +
                                              " row (" + std::to_string(x) + "," +
                                              std::to_string(r) + ")");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Exact enumeration
// ---------------------------------------------------------------------------

// Marginal of the response under `which` inputs and table `t`:
//   p(y) = sum_x p(x) sum_r p(r|x) t(y|x,r)
inline std::vector<double> response_marginal(const SyntheticWorld& w, Which which, Table t) {
    std::vector<double> marg(static_cast<size_t>(w.ny), 0.0);
    for (int x = 0; x < w.nx(); ++x) {
        double px = w.px(which, x);
        if (px <= 0.0) continue;
        for (int r = 0; r < w.nr; ++r) {
            double pr = w.p_r(x, r);
            if (pr <= 0.0) continue;
            for (int y = 0; y < w.ny; ++y)
                marg[static_cast<size_t>(y)] += px * pr * w.cond(t, x, r, y);
        }
    }
    return marg;
}

// Shannon mutual information I(X_R; Y) of the joint induced by `which` and
// table `t`, by direct enumeration. Because R is part of the conditioning
// side, p(x,r,y) / (p(x,r) p(y)) = t(y|x,r) / p(y).
inline double exact_mi(const SyntheticWorld& w, Which which, Table t) {
    auto marg = response_marginal(w, which, t);
    KahanSum acc;
    for (int x = 0; x < w.nx(); ++x) {
        double px = w.px(which, x);
        if (px <= 0.0) continue;
        for (int r = 0; r < w.nr; ++r) {
            double pxr = px * w.p_r(x, r);
            if (pxr <= 0.0) continue;
            for (int y = 0; y < w.ny; ++y) {
                double c = w.cond(t, x, r, y);
                if (c <= 0.0) continue;
                acc.add(pxr * c * std::log(c / marg[static_cast<size_t>(y)]));
            }
        }
    }
    double v = acc.value();
    return (v < 0 && v > -1e-12) ? 0.0 : v;
}

// Exact value of the contrastive log-ratio estimator when responses are drawn
// from `data` and log-densities come from `density`:
//   E_{p(x,r) data(y|x,r)}[ln density(y|x,r)]
//     - E_{p(x,r)} E_{y ~ data-marginal}[ln density(y|x,r)].
// Both expectations are full enumerations over the finite joint.
inline double exact_club_mixed(const SyntheticWorld& w, Which which, Table data, Table density) {
    auto marg = response_marginal(w, which, data);
    KahanSum diag, cross;
    for (int x = 0; x < w.nx(); ++x) {
        double px = w.px(which, x);
        if (px <= 0.0) continue;
        for (int r = 0; r < w.nr; ++r) {
            double pxr = px * w.p_r(x, r);
            if (pxr <= 0.0) continue;
            for (int y = 0; y < w.ny; ++y) {
                double dm = w.cond(data, x, r, y);
                double de = w.cond(density, x, r, y);
                double logde = de > 0.0 ? std::log(de) : kNegInf;
                if (dm > 0.0) diag.add(pxr * dm * logde);
                double my = marg[static_cast<size_t>(y)];
                if (my > 0.0) cross.add(pxr * my * logde);
            }
        }
    }
    return diag.value() - cross.value();
}

inline double exact_club(const SyntheticWorld& w, Which which, Table t) {
    return exact_club_mixed(w, which, t, t);
}

// Variant for evaluation pipelines that regenerate the reasoning trace: the
// conditioning pair is (x, r) with r ~ p(r|x), but the response was produced
// by the data process with its own latent reasoning draw, so its law given x
// is the r-marginalized conditional. Coincides with exact_club_mixed whenever
// the reasoning table is deterministic.
inline double exact_club_regen(const SyntheticWorld& w, Which which, Table data, Table density) {
    auto marg = response_marginal(w, which, data);
    KahanSum diag, cross;
    for (int x = 0; x < w.nx(); ++x) {
        double px = w.px(which, x);
        if (px <= 0.0) continue;
        auto data_row = w.cond_marginal_r(data, x);
        for (int r = 0; r < w.nr; ++r) {
            double pxr = px * w.p_r(x, r);
            if (pxr <= 0.0) continue;
            for (int y = 0; y < w.ny; ++y) {
                double de = w.cond(density, x, r, y);
                double logde = de > 0.0 ? std::log(de) : kNegInf;
                if (data_row[static_cast<size_t>(y)] > 0.0)
                    diag.add(pxr * data_row[static_cast<size_t>(y)] * logde);
                double my = marg[static_cast<size_t>(y)];
                if (my > 0.0) cross.add(pxr * my * logde);
            }
        }
    }
    return diag.value() - cross.value();
}

// Max over the full input space of H(Y_gold | x, r) + H(Y_model | x, r).
// With use_reasoning = false the conditionals marginalize R out first.
inline double exact_entropy_hat(const SyntheticWorld& w, bool use_reasoning = true) {
    double best = 0.0;
    for (int x = 0; x < w.nx(); ++x) {
        if (w.px(Which::P, x) <= 0.0 && w.px(Which::Q, x) <= 0.0) continue;
        if (use_reasoning) {
            for (int r = 0; r < w.nr; ++r) {
                if (w.p_r(x, r) <= 0.0) continue;
                double h = div::entropy_vec(w.cond_row(Table::gold, x, r)) +
                           div::entropy_vec(w.cond_row(Table::model, x, r));
                best = std::max(best, h);
            }
        } else {
            double h = div::entropy_vec(w.cond_row(Table::gold, x, -1)) +
                       div::entropy_vec(w.cond_row(Table::model, x, -1));
            best = std::max(best, h);
        }
    }
    return best;
}

inline double exact_true_remi(const SyntheticWorld& w, Which which) {
    return exact_mi(w, which, Table::model) - exact_mi(w, which, Table::gold);
}

inline double exact_true_remid(const SyntheticWorld& w) {
    return exact_true_remi(w, Which::P) - exact_true_remi(w, Which::Q);
}

// sqrt(2/3) * H * (sqrt(js_u) + sqrt(js_a) + sqrt(js_d)) + 8 * Delta^(1/4)
inline double assemble_bound(double entropy_hat, double js_u, double js_a, double js_d,
                             double delta) {
    return std::sqrt(2.0 / 3.0) * entropy_hat *
               (std::sqrt(js_u) + std::sqrt(js_a) + std::sqrt(js_d)) +
           8.0 * std::pow(delta, 0.25);
}

struct ExactBound {
    double bound = 0.0;
    double entropy_hat = 0.0;
    double js_u = 0.0, js_a = 0.0, js_d = 0.0;
    double delta_p = 0.0, delta_q = 0.0;
};

// Worst-case drop bound computed entirely from the world tables: component
// severities from the declared marginals, delta terms as the exact JS between
// model and golden response marginals on each side.
inline ExactBound exact_bound(const SyntheticWorld& w, bool use_reasoning = true) {
    ExactBound b;
    b.js_u = div::js_vec(w.p_u, w.q_u);
    b.js_a = div::js_vec(w.p_a, w.q_a);
    b.js_d = div::js_vec(w.p_d, w.q_d);
    b.entropy_hat = exact_entropy_hat(w, use_reasoning);
    b.delta_p = div::js_vec(response_marginal(w, Which::P, Table::model),
                            response_marginal(w, Which::P, Table::gold));
    b.delta_q = div::js_vec(response_marginal(w, Which::Q, Table::model),
                            response_marginal(w, Which::Q, Table::gold));
    b.bound = assemble_bound(b.entropy_hat, b.js_u, b.js_a, b.js_d, b.delta_p + b.delta_q);
    return b;
}

inline div::DecompositionReport decomposition_check(const SyntheticWorld& w) {
    return div::decomposition_check(w.p_u, w.p_a, w.p_d, w.q_u, w.q_a, w.q_d);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline int sample_categorical(const std::vector<double>& probs, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

// Draw a split of synthetic samples: x from the chosen marginals, r from the
// reasoning table, y from the golden conditional.
inline data::Split sample_split(const SyntheticWorld& w, Which which, std::size_t n,
                                std::uint64_t seed, const std::string& name,
                                data::SplitKind kind) {
    auto rng = make_rng(seed, which == Which::P ? 11 : 13);
    data::Split split;
    split.name = name;
    split.kind = kind;
    const auto& mu = which == Which::P ? w.p_u : w.q_u;
    const auto& ma = which == Which::P ? w.p_a : w.q_a;
    const auto& md = which == Which::P ? w.p_d : w.q_d;
    for (std::size_t i = 0; i < n; ++i) {
        data::SyntheticIds ids;
        ids.u = sample_categorical(mu, rng);
        ids.a = sample_categorical(ma, rng);
        ids.d = sample_categorical(md, rng);
        int x = w.x_index(ids.u, ids.a, ids.d);
        std::vector<double> rrow(w.reasoning.begin() + static_cast<size_t>(x) * w.nr,
                                 w.reasoning.begin() + (static_cast<size_t>(x) + 1) * w.nr);
        ids.r = sample_categorical(rrow, rng);
        ids.y = sample_categorical(w.cond_row(Table::gold, x, ids.r), rng);
        split.samples.push_back(
            data::detail::synth_sample_from_ids(ids, name + "-" + std::to_string(i)));
    }
    return split;
}

// ---------------------------------------------------------------------------
// JSON round trip
// ---------------------------------------------------------------------------

inline json to_json(const SyntheticWorld& w) {
    json j;
    j["name"] = w.name;
    j["sizes"] = {{"u", w.nu}, {"a", w.na}, {"d", w.nd}, {"r", w.nr}, {"y", w.ny}};
    j["p_u"] = w.p_u;
    j["p_a"] = w.p_a;
    j["p_d"] = w.p_d;
    j["q_u"] = w.q_u;
    j["q_a"] = w.q_a;
    j["q_d"] = w.q_d;
    j["reasoning"] = w.reasoning;
    j["gold"] = w.gold;
    j["model"] = w.model;
    return j;
}

inline SyntheticWorld world_from_json(const json& j) {
    SyntheticWorld w;
    try {
        w.name = j.value("name", "world");
        const auto& sz = j.at("sizes");
        w.nu = sz.at("u").get<int>();
        w.na = sz.at("a").get<int>();
        w.nd = sz.at("d").get<int>();
        w.nr = sz.at("r").get<int>();
        w.ny = sz.at("y").get<int>();
        w.p_u = j.at("p_u").get<std::vector<double>>();
        w.p_a = j.at("p_a").get<std::vector<double>>();
        w.p_d = j.at("p_d").get<std::vector<double>>();
        w.q_u = j.at("q_u").get<std::vector<double>>();
        w.q_a = j.at("q_a").get<std::vector<double>>();
        w.q_d = j.at("q_d").get<std::vector<double>>();
        w.reasoning = j.at("reasoning").get<std::vector<double>>();
        w.gold = j.at("gold").get<std::vector<double>>();
        w.model = j.at("model").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed world JSON: ") + e.what());
    }
    validate_world(w);
    return w;
}

}  // namespace remid::world
