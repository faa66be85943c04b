#pragma once

// Sample-based mutual information estimation. Given pairs {(x_i, r_i, y_i)}
// and a conditional density q(y | x, r), the estimator is
//
//   (1/N) sum_i log q(y_i | x_i, r_i)  -  (1/N^2) sum_i sum_j log q(y_j | x_i, r_i),
//
// a contrastive log-ratio form whose exact counterpart on finite worlds is
// world::exact_club. The double sum includes the i = j pairs. The cross term
// is O(N^2) in scoring calls, so above a size threshold it is subsampled with
// M uniformly drawn j per i under a declared seed.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include <json.hpp>

#include "remid/common.hpp"
#include "remid/providers.hpp"

namespace remid::mi {

struct PairEntry {
    prov::RenderedContext context;
    prov::Target target;
};

struct CrossFull {};
struct CrossSubsample {
    std::size_t m = 128;
    std::uint64_t seed = 0;
};
using CrossTermMode = std::variant<CrossFull, CrossSubsample>;

// Full evaluation below 512 pairs, seeded subsampling above.
inline CrossTermMode default_cross_mode(std::size_t n, std::uint64_t seed = 0) {
    if (n <= 512) return CrossFull{};
    return CrossSubsample{128, seed};
}

struct ScoredPairSet {
    std::vector<PairEntry> entries;
    CrossTermMode cross_mode = CrossFull{};
};

struct BootstrapConfig {
    std::size_t resamples = 1000;
    std::uint64_t seed = 17;
};

struct MiEstimate {
    double value = 0.0;
    double diagonal_term = 0.0;
    double cross_term = 0.0;
    std::size_t n_used = 0;
    std::size_t excluded_neg_inf = 0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    // Per-pair contributions (diagonal_i minus row cross mean); the estimate
    // is their mean and the bootstrap resamples them.
    std::vector<double> per_item;
};

// ---------------------------------------------------------------------------
// Bootstrap over per-item statistics
// ---------------------------------------------------------------------------

struct BootstrapResult {
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

inline BootstrapResult bootstrap_mean(const std::vector<double>& items,
                                      const BootstrapConfig& cfg) {
    BootstrapResult out;
    const std::size_t n = items.size();
    if (n < 2 || cfg.resamples == 0) {
        double m = mean_of(items);
        out.ci_low = out.ci_high = m;
        return out;
    }
    auto rng = make_rng(cfg.seed, 41);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> means;
    means.reserve(cfg.resamples);
    for (std::size_t b = 0; b < cfg.resamples; ++b) {
        KahanSum s;
        for (std::size_t i = 0; i < n; ++i) s.add(items[pick(rng)]);
        means.push_back(s.value() / static_cast<double>(n));
    }
    out.se = sample_std_of(means);
    std::sort(means.begin(), means.end());
    auto quantile = [&](double q) {
        double pos = q * static_cast<double>(means.size() - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        std::size_t hi = std::min(lo + 1, means.size() - 1);
        double frac = pos - static_cast<double>(lo);
        return means[lo] * (1.0 - frac) + means[hi] * frac;
    };
    out.ci_low = quantile(0.025);
    out.ci_high = quantile(0.975);
    return out;
}

// ---------------------------------------------------------------------------
// Core engine: generic over a score matrix accessor
// ---------------------------------------------------------------------------

namespace detail {

// score(i, j) = log q(y_j | x_i, r_i). Computes per-item contributions
// t_i = score(i,i) - rowmean_i, where rowmean_i averages the finite cross
// entries for row i (full or subsampled js).
struct ClubRows {
    std::vector<double> diagonal;
    std::vector<double> per_item;
    std::size_t excluded_neg_inf = 0;
};

template <typename ScoreFn>
ClubRows club_rows(std::size_t n, const CrossTermMode& mode, ScoreFn&& score) {
    ClubRows rows;
    rows.diagonal.resize(n);
    rows.per_item.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sii = score(i, i);
        if (is_neg_inf(sii))
            throw ValidationError(
                "zero-probability dataset target in the diagonal term at pair " +
                std::to_string(i) + "; the estimator cannot score its own data");
        rows.diagonal[i] = sii;

        KahanSum cross;
        std::size_t used = 0;
        auto feed = [&](double s) {
            if (is_neg_inf(s)) {
                ++rows.excluded_neg_inf;
            } else {
                cross.add(s);
                ++used;
            }
        };
        if (std::holds_alternative<CrossFull>(mode)) {
            for (std::size_t j = 0; j < n; ++j) feed(j == i ? sii : score(i, j));
        } else {
            const auto& sub = std::get<CrossSubsample>(mode);
            if (sub.m == 0) throw ValidationError("cross subsample M must be >= 1");
            auto rng = make_rng(sub.seed, 1000003 + i);
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (std::size_t k = 0; k < sub.m; ++k) {
                std::size_t j = pick(rng);
                feed(j == i ? sii : score(i, j));
            }
        }
        // Row i always contains at least the finite diagonal entry in full
        // mode; in subsample mode a fully excluded row falls back to it.
        double rowmean = used > 0 ? cross.value() / static_cast<double>(used) : sii;
        rows.per_item[i] = sii - rowmean;
    }
    return rows;
}

template <typename ScoreFn>
MiEstimate club_from_scores(std::size_t n, const CrossTermMode& mode, ScoreFn&& score,
                            const BootstrapConfig& bootstrap) {
    if (n < 2) throw ValidationError("mutual information estimation needs N >= 2 pairs");
    auto rows = club_rows(n, mode, std::forward<ScoreFn>(score));
    MiEstimate est;
    est.n_used = n;
    est.excluded_neg_inf = rows.excluded_neg_inf;
    est.per_item = rows.per_item;
    est.value = mean_of(rows.per_item);
    est.diagonal_term = mean_of(rows.diagonal);
    est.cross_term = est.diagonal_term - est.value;
    auto bs = bootstrap_mean(rows.per_item, bootstrap);
    est.se = bs.se;
    est.ci_low = bs.ci_low;
    est.ci_high = bs.ci_high;
    return est;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

inline MiEstimate club_mi(const ScoredPairSet& pairs, prov::Provider& provider,
                          const BootstrapConfig& bootstrap = {}) {
    const std::size_t n = pairs.entries.size();
    return detail::club_from_scores(
        n, pairs.cross_mode,
        [&](std::size_t i, std::size_t j) {
            return provider.score(pairs.entries[i].context, pairs.entries[j].target)
                .total_logprob;
        },
        bootstrap);
}

// Matrix-free variant used when scores are precomputed or synthesized.
inline MiEstimate club_mi_fn(std::size_t n, const CrossTermMode& mode,
                             const std::function<double(std::size_t, std::size_t)>& score,
                             const BootstrapConfig& bootstrap = {}) {
    return detail::club_from_scores(n, mode, score, bootstrap);
}

// Monte-Carlo entropy: -(1/K) sum_k log q(y_k | ctx) with y_k drawn from the
// provider at temperature 1. Every summand is >= 0 exactly, so the estimate
// is >= 0 exactly. Oracle-backed callers should prefer enumerated_entropy.
inline double mc_entropy(const prov::RenderedContext& ctx, prov::Provider& provider,
                         std::size_t k, std::uint64_t seed) {
    if (k < 1) throw ValidationError("mc_entropy needs K >= 1");
    auto draws = provider.sample(ctx, k, 1.0, seed);
    KahanSum nll;
    for (const auto& d : draws) {
        if (is_neg_inf(d.total_logprob))
            throw ValidationError("sampled response has zero probability under its own sampler");
        nll.add(-d.total_logprob);
    }
    return nll.value() / static_cast<double>(k);
}

// Exact entropy when the backend can enumerate its conditional; falls back to
// Monte Carlo otherwise.
inline double conditional_entropy(const prov::RenderedContext& ctx, prov::Provider& provider,
                                  std::size_t k, std::uint64_t seed) {
    if (auto row = provider.full_conditional(ctx)) return div::entropy_vec(*row);
    return mc_entropy(ctx, provider, k, seed);
}

inline nlohmann::json to_json(const MiEstimate& e, const CrossTermMode& mode) {
    nlohmann::json j;
    j["value"] = e.value;
    j["diagonal_term"] = e.diagonal_term;
    j["cross_term"] = e.cross_term;
    j["n"] = e.n_used;
    j["excluded_neg_inf"] = e.excluded_neg_inf;
    j["se"] = e.se;
    j["ci_low"] = e.ci_low;
    j["ci_high"] = e.ci_high;
    if (const auto* sub = std::get_if<CrossSubsample>(&mode)) {
        j["cross_mode"] = "subsample";
        j["m"] = sub->m;
        j["cross_seed"] = sub->seed;
    } else {
        j["cross_mode"] = "full";
    }
    return j;
}

}  // namespace remid::mi
