#pragma once

// Bundled world catalog and the randomized world generator. Every generated
// world keeps one golden conditional shared between P and Q (the consistency
// precondition of the drop bound) and, for worlds meant to exercise the
// estimators, strictly positive tables so log-scores stay finite.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "remid/common.hpp"
#include "remid/world.hpp"

namespace remid::worlds {

using world::SyntheticWorld;

namespace detail {

inline void renormalize(std::vector<double>& v) {
    KahanSum s;
    for (double x : v) s.add(x);
    double z = s.value();
    for (auto& x : v) x /= z;
}

// Dirichlet(alpha) row with a positivity floor.
inline std::vector<double> dirichlet_row(std::size_t n, double alpha, double floor,
                                         std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = gamma(rng) + floor;
    renormalize(v);
    return v;
}

inline std::vector<double> peaked_row(std::size_t n, std::size_t mode, double peak) {
    std::vector<double> v(n, (1.0 - peak) / static_cast<double>(n - 1));
    v[mode] = peak;
    return v;
}

inline std::vector<double> one_hot(std::size_t n, std::size_t idx) {
    std::vector<double> v(n, 0.0);
    v[idx] = 1.0;
    return v;
}

inline void append_row(std::vector<double>& flat, const std::vector<double>& row) {
    flat.insert(flat.end(), row.begin(), row.end());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fixed small worlds
// ---------------------------------------------------------------------------

// Binary input, binary response, p(y = u | u) = 0.9, uniform inputs. Exact
// reference values: MI = ln 2 - H(0.1) ~ 0.3680 nats, contrastive estimator
// value with the true conditional plugged in = 0.4 ln 9 ~ 0.8789 nats.
inline SyntheticWorld two_by_two(double model_peak = 0.75) {
    SyntheticWorld w;
    w.name = "two_by_two";
    w.nu = 2;
    w.na = 1;
    w.nd = 1;
    w.nr = 1;
    w.ny = 2;
    w.p_u = {0.5, 0.5};
    w.p_a = {1.0};
    w.p_d = {1.0};
    w.q_u = {0.5, 0.5};
    w.q_a = {1.0};
    w.q_d = {1.0};
    w.reasoning = {1.0, 1.0};
    for (int u = 0; u < 2; ++u) {
        detail::append_row(w.gold, detail::peaked_row(2, static_cast<size_t>(u), 0.9));
        detail::append_row(w.model, detail::peaked_row(2, static_cast<size_t>(u), model_peak));
    }
    world::validate_world(w);
    return w;
}

// Response independent of the input: exact MI is zero.
inline SyntheticWorld independent_world() {
    SyntheticWorld w;
    w.name = "independent";
    w.nu = 3;
    w.na = 2;
    w.nd = 1;
    w.nr = 2;
    w.ny = 4;
    w.p_u = {0.5, 0.3, 0.2};
    w.p_a = {0.6, 0.4};
    w.p_d = {1.0};
    w.q_u = {0.2, 0.3, 0.5};
    w.q_a = {0.4, 0.6};
    w.q_d = {1.0};
    std::vector<double> fixed = {0.4, 0.3, 0.2, 0.1};
    for (int x = 0; x < w.nx(); ++x) {
        detail::append_row(w.reasoning, {0.5, 0.5});
        for (int r = 0; r < w.nr; ++r) {
            detail::append_row(w.gold, fixed);
            detail::append_row(w.model, fixed);
        }
    }
    world::validate_world(w);
    return w;
}

// Deterministic bijection from a uniform 4-way input: exact MI is ln 4.
inline SyntheticWorld bijection_world() {
    SyntheticWorld w;
    w.name = "bijection";
    w.nu = 4;
    w.na = 1;
    w.nd = 1;
    w.nr = 1;
    w.ny = 4;
    w.p_u = {0.25, 0.25, 0.25, 0.25};
    w.p_a = {1.0};
    w.p_d = {1.0};
    w.q_u = w.p_u;
    w.q_a = w.p_a;
    w.q_d = w.p_d;
    for (int u = 0; u < 4; ++u) {
        detail::append_row(w.reasoning, {1.0});
        detail::append_row(w.gold, detail::one_hot(4, static_cast<size_t>(u)));
        detail::append_row(w.model, detail::one_hot(4, static_cast<size_t>(u)));
    }
    world::validate_world(w);
    return w;
}

// ---------------------------------------------------------------------------
// Random worlds (drop-bound preconditions hold by construction)
// ---------------------------------------------------------------------------

struct RandomWorldSpec {
    int nu = 3, na = 2, nd = 2, nr = 2, ny = 5;
    double marginal_alpha = 1.2;
    double cond_alpha = 0.8;
    double floor = 0.02;           // positivity floor before renormalizing
    double model_noise_min = 0.1;  // model = (1-g)*gold + g*noise, g ~ U[min,max]
    double model_noise_max = 0.45;
};

inline SyntheticWorld random_world(std::uint64_t seed, const RandomWorldSpec& spec = {}) {
    auto rng = make_rng(seed, 53);
    SyntheticWorld w;
    w.name = "random-" + std::to_string(seed);
    w.nu = spec.nu;
    w.na = spec.na;
    w.nd = spec.nd;
    w.nr = spec.nr;
    w.ny = spec.ny;
    auto marg = [&](int n) {
        return detail::dirichlet_row(static_cast<size_t>(n), spec.marginal_alpha, spec.floor, rng);
    };
    w.p_u = marg(w.nu);
    w.p_a = marg(w.na);
    w.p_d = marg(w.nd);
    w.q_u = marg(w.nu);
    w.q_a = marg(w.na);
    w.q_d = marg(w.nd);
    std::uniform_real_distribution<double> noise_amount(spec.model_noise_min,
                                                        spec.model_noise_max);
    for (int x = 0; x < w.nx(); ++x) {
        detail::append_row(w.reasoning, detail::dirichlet_row(static_cast<size_t>(w.nr),
                                                              spec.marginal_alpha, spec.floor,
                                                              rng));
        for (int r = 0; r < w.nr; ++r) {
            auto gold = detail::dirichlet_row(static_cast<size_t>(w.ny), spec.cond_alpha,
                                              spec.floor, rng);
            auto noise = detail::dirichlet_row(static_cast<size_t>(w.ny), spec.cond_alpha,
                                               spec.floor, rng);
            double g = noise_amount(rng);
            std::vector<double> model(gold.size());
            for (std::size_t y = 0; y < gold.size(); ++y)
                model[y] = (1.0 - g) * gold[y] + g * noise[y];
            detail::renormalize(model);
            detail::append_row(w.gold, gold);
            detail::append_row(w.model, model);
        }
    }
    world::validate_world(w);
    return w;
}

// ---------------------------------------------------------------------------
// User-shift sweep family
// ---------------------------------------------------------------------------

// Q's user marginal moves from P's toward a shifted profile as lambda grows;
// the model is accurate on the users P favors and degraded on the users the
// shifted profile favors, so the drop grows with lambda.
inline SyntheticWorld user_shift_world(double lambda) {
    SyntheticWorld w;
    w.name = "usershift-" + fmt_double(lambda);
    w.nu = 4;
    w.na = 2;
    w.nd = 2;
    w.nr = 2;
    w.ny = 6;
    w.p_u = {0.55, 0.3, 0.1, 0.05};
    std::vector<double> shifted = {0.05, 0.1, 0.3, 0.55};
    w.q_u.resize(4);
    for (int u = 0; u < 4; ++u)
        w.q_u[static_cast<size_t>(u)] =
            (1.0 - lambda) * w.p_u[static_cast<size_t>(u)] + lambda * shifted[static_cast<size_t>(u)];
    w.p_a = {0.6, 0.4};
    w.p_d = {0.7, 0.3};
    w.q_a = w.p_a;
    w.q_d = w.p_d;
    std::vector<double> uniform(static_cast<size_t>(w.ny), 1.0 / w.ny);
    for (int u = 0; u < w.nu; ++u) {
        for (int a = 0; a < w.na; ++a) {
            for (int d = 0; d < w.nd; ++d) {
                int r_star = (u + a + d) % w.nr;
                detail::append_row(w.reasoning,
                                   detail::one_hot(static_cast<size_t>(w.nr),
                                                   static_cast<size_t>(r_star)));
                for (int r = 0; r < w.nr; ++r) {
                    auto gold = detail::peaked_row(static_cast<size_t>(w.ny),
                                                   static_cast<size_t>((2 * u + a + d + r) % w.ny),
                                                   0.7);
                    detail::append_row(w.gold, gold);
                    if (u < 2) {
                        detail::append_row(w.model, gold);
                    } else {
                        // Degraded on the shift-favored users: mass pulled
                        // toward uniform, away from the golden mode.
                        std::vector<double> bad(gold.size());
                        for (std::size_t y = 0; y < gold.size(); ++y)
                            bad[y] = 0.25 * gold[y] + 0.75 * uniform[y];
                        detail::append_row(w.model, bad);
                    }
                }
            }
        }
    }
    world::validate_world(w);
    return w;
}

// ---------------------------------------------------------------------------
// Reasoning-sufficient world for the co-evolution ablation
// ---------------------------------------------------------------------------

// The reasoning id fully determines the response distribution: the golden
// conditional depends on r alone, while the input space is much larger than
// the reasoning space. A direct p(y|x) table must estimate every x row from
// scratch; a reasoning-routed model shares the per-r response components.
inline SyntheticWorld reasoning_sufficient_world() {
    SyntheticWorld w;
    w.name = "reasoning_sufficient";
    w.nu = 4;
    w.na = 4;
    w.nd = 3;
    w.nr = 4;
    w.ny = 12;
    w.p_u.assign(4, 0.25);
    w.p_a.assign(4, 0.25);
    w.p_d.assign(3, 1.0 / 3.0);
    w.q_u = w.p_u;
    w.q_a = w.p_a;
    w.q_d = w.p_d;
    std::vector<std::vector<double>> components;
    for (int r = 0; r < w.nr; ++r)
        components.push_back(
            detail::peaked_row(static_cast<size_t>(w.ny), static_cast<size_t>(3 * r), 0.88));
    for (int u = 0; u < w.nu; ++u) {
        for (int a = 0; a < w.na; ++a) {
            for (int d = 0; d < w.nd; ++d) {
                int r_star = (5 * u + 3 * a + 2 * d) % w.nr;
                detail::append_row(w.reasoning,
                                   detail::one_hot(static_cast<size_t>(w.nr),
                                                   static_cast<size_t>(r_star)));
                for (int r = 0; r < w.nr; ++r) {
                    detail::append_row(w.gold, components[static_cast<size_t>(r)]);
                    detail::append_row(w.model, components[static_cast<size_t>(r)]);
                }
            }
        }
    }
    world::validate_world(w);
    return w;
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

// Worlds with strictly positive conditionals, suitable for estimator
// convergence checks.
inline std::vector<SyntheticWorld> bundled_estimation_worlds() {
    std::vector<SyntheticWorld> out;
    out.push_back(two_by_two());
    RandomWorldSpec s1;  // defaults: 3x2x2, r=2, y=5
    out.push_back(random_world(101, s1));
    RandomWorldSpec s2;
    s2.nu = 2;
    s2.na = 3;
    s2.nd = 2;
    s2.nr = 1;
    s2.ny = 4;
    out.push_back(random_world(202, s2));
    RandomWorldSpec s3;
    s3.nu = 4;
    s3.na = 2;
    s3.nd = 3;
    s3.nr = 2;
    s3.ny = 6;
    out.push_back(random_world(303, s3));
    RandomWorldSpec s4;
    s4.nu = 2;
    s4.na = 2;
    s4.nd = 2;
    s4.nr = 3;
    s4.ny = 8;
    out.push_back(random_world(404, s4));
    out.push_back(user_shift_world(0.5));
    for (auto& w : out) w.name = "bundled-" + w.name;
    return out;
}

}  // namespace remid::worlds
