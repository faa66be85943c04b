#pragma once

// Desk-scale co-evolving reinforcement learning: a tabular softmax reasoning
// generator q1(r|x) and response model q2(y|ctx) optimized alternately with
// group-relative policy optimization. Outputs are single symbols, so the
// token product in the clipped objective has exactly one factor and the
// analytic gradient can be checked against finite differences.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "remid/common.hpp"
#include "remid/providers.hpp"
#include "remid/world.hpp"

namespace remid::corl {

// ---------------------------------------------------------------------------
// Tabular softmax policy
// ---------------------------------------------------------------------------

struct TabularPolicy {
    std::size_t n_contexts = 0;
    std::size_t n_outputs = 0;
    std::vector<double> logits;  // row-major [context][output]
    double temperature = 1.0;

    static TabularPolicy uniform(std::size_t nc, std::size_t no) {
        TabularPolicy p;
        p.n_contexts = nc;
        p.n_outputs = no;
        p.logits.assign(nc * no, 0.0);
        return p;
    }

    std::vector<double> row_probs(std::size_t c) const {
        const double* row = logits.data() + c * n_outputs;
        double mx = row[0];
        for (std::size_t o = 1; o < n_outputs; ++o) mx = std::max(mx, row[o]);
        std::vector<double> probs(n_outputs);
        double z = 0.0;
        for (std::size_t o = 0; o < n_outputs; ++o) {
            probs[o] = std::exp((row[o] - mx) / temperature);
            z += probs[o];
        }
        for (auto& p : probs) p /= z;
        return probs;
    }

    double prob(std::size_t c, std::size_t o) const { return row_probs(c)[o]; }

    double logprob(std::size_t c, std::size_t o) const {
        double p = prob(c, o);
        return p > 0.0 ? std::log(p) : kNegInf;
    }

    int sample(std::size_t c, std::mt19937_64& rng) const {
        return world::sample_categorical(row_probs(c), rng);
    }
};

// ---------------------------------------------------------------------------
// Config and advantages
// ---------------------------------------------------------------------------

struct GrpoConfig {
    std::size_t group_size = 8;       // G
    double clip_epsilon = 0.2;        // epsilon
    double kl_coeff = 0.0;            // beta
    double learning_rate = 1e-2;
    std::size_t epochs_per_phase = 3;
    std::size_t alternations = 2;
    std::size_t updates_per_rollout = 1;  // ascent steps per rollout batch
    double advantage_std_floor = 1e-8;
    std::uint64_t seed = 0;
};

inline void validate_config(const GrpoConfig& c) {
    if (c.group_size < 2) throw ConfigError("group size must be >= 2");
    if (c.clip_epsilon <= 0.0 || c.clip_epsilon >= 1.0)
        throw ConfigError("clip epsilon must lie in (0, 1)");
    if (c.kl_coeff < 0.0) throw ConfigError("kl coefficient must be >= 0");
    if (c.learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (c.advantage_std_floor <= 0.0) throw ConfigError("advantage std floor must be positive");
    if (c.updates_per_rollout < 1) throw ConfigError("updates per rollout must be >= 1");
}

// Group-standardized advantages with the population standard deviation; a
// group whose reward spread is below the floor contributes all-zero
// advantages instead of a blown-up update.
inline std::vector<double> grpo_advantages(const std::vector<double>& rewards,
                                           double std_floor = 1e-8) {
    if (rewards.size() < 2) throw ValidationError("advantage groups need G >= 2 rewards");
    double m = mean_of(rewards);
    double sd = pop_std_of(rewards);
    std::vector<double> adv(rewards.size(), 0.0);
    if (sd < std_floor) return adv;
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - m) / sd;
    return adv;
}

// Replaces -inf rewards by the finite group minimum minus 10 so that a single
// zero-probability rollout cannot poison the whole group's normalization.
inline std::vector<double> clamp_neg_inf_rewards(std::vector<double> rewards) {
    double finite_min = std::numeric_limits<double>::infinity();
    bool any_inf = false;
    for (double r : rewards) {
        if (is_neg_inf(r))
            any_inf = true;
        else
            finite_min = std::min(finite_min, r);
    }
    if (!any_inf) return rewards;
    double repl = std::isfinite(finite_min) ? finite_min - 10.0 : 0.0;
    for (auto& r : rewards)
        if (is_neg_inf(r)) r = repl;
    return rewards;
}

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

// Reward for a sampled reasoning id: log-probability of the golden response
// under the current response model, conditioned on that reasoning.
inline double reasoning_reward(const TabularPolicy& q2, std::size_t q2_context, int y_gold) {
    return q2.logprob(q2_context, static_cast<std::size_t>(y_gold));
}

// Reward for a sampled response: the reference model's probability of the
// rollout relative to its probability of the golden response, clamped at 1.
inline double response_reward(const TabularPolicy& ref, std::size_t ctx, int y_rollout,
                              int y_gold) {
    double p_gold = ref.prob(ctx, static_cast<std::size_t>(y_gold));
    if (p_gold <= 0.0)
        throw ConfigError("reference model assigns zero probability to the golden response");
    double ratio = ref.prob(ctx, static_cast<std::size_t>(y_rollout)) / p_gold;
    return std::min(ratio, 1.0);
}

// ---------------------------------------------------------------------------
// Clipped surrogate objective
// ---------------------------------------------------------------------------

struct RolloutGroup {
    std::size_t context = 0;
    std::vector<int> outputs;
    std::vector<double> old_logprobs;
    std::vector<double> rewards;
    std::vector<double> advantages;
};

// Mean over groups of (1/G) sum_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i)
// minus beta * KL(pi || pi_ref) per group context.
inline double clipped_surrogate(const TabularPolicy& trainee,
                                const std::vector<RolloutGroup>& groups,
                                const TabularPolicy* ref, const GrpoConfig& cfg) {
    KahanSum total;
    for (const auto& g : groups) {
        auto probs = trainee.row_probs(g.context);
        KahanSum inner;
        for (std::size_t i = 0; i < g.outputs.size(); ++i) {
            double lp = std::log(probs[static_cast<std::size_t>(g.outputs[i])]);
            double ratio = std::exp(lp - g.old_logprobs[i]);
            double a = g.advantages[i];
            double unclipped = ratio * a;
            double clipped =
                std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * a;
            inner.add(std::min(unclipped, clipped));
        }
        double value = inner.value() / static_cast<double>(g.outputs.size());
        if (cfg.kl_coeff > 0.0 && ref) {
            auto ref_probs = ref->row_probs(g.context);
            KahanSum kl;
            for (std::size_t o = 0; o < probs.size(); ++o)
                if (probs[o] > 0.0) kl.add(probs[o] * std::log(probs[o] / ref_probs[o]));
            value -= cfg.kl_coeff * kl.value();
        }
        total.add(value);
    }
    return total.value() / static_cast<double>(groups.size());
}

// Analytic gradient of clipped_surrogate with respect to the trainee logits.
// The min gates the policy-gradient term: it flows only where the unclipped
// branch attains the minimum.
inline std::vector<double> clipped_surrogate_gradient(const TabularPolicy& trainee,
                                                      const std::vector<RolloutGroup>& groups,
                                                      const TabularPolicy* ref,
                                                      const GrpoConfig& cfg) {
    std::vector<double> grad(trainee.logits.size(), 0.0);
    const double inv_groups = 1.0 / static_cast<double>(groups.size());
    for (const auto& g : groups) {
        auto probs = trainee.row_probs(g.context);
        double* grow = grad.data() + g.context * trainee.n_outputs;
        const double inv_g = 1.0 / static_cast<double>(g.outputs.size());
        for (std::size_t i = 0; i < g.outputs.size(); ++i) {
            std::size_t o = static_cast<std::size_t>(g.outputs[i]);
            double lp = std::log(probs[o]);
            double ratio = std::exp(lp - g.old_logprobs[i]);
            double a = g.advantages[i];
            double unclipped = ratio * a;
            double clipped =
                std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * a;
            if (unclipped <= clipped) {
                double coef = a * ratio * inv_g * inv_groups;
                for (std::size_t k = 0; k < trainee.n_outputs; ++k)
                    grow[k] += coef * ((k == o ? 1.0 : 0.0) - probs[k]);
            }
        }
        if (cfg.kl_coeff > 0.0 && ref) {
            auto ref_probs = ref->row_probs(g.context);
            KahanSum klsum;
            for (std::size_t o = 0; o < probs.size(); ++o)
                if (probs[o] > 0.0) klsum.add(probs[o] * std::log(probs[o] / ref_probs[o]));
            double kl = klsum.value();
            for (std::size_t k = 0; k < trainee.n_outputs; ++k)
                grow[k] -= cfg.kl_coeff * inv_groups * probs[k] *
                           (std::log(probs[k] / ref_probs[k]) - kl);
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// One optimization phase
// ---------------------------------------------------------------------------

struct EpochRecord {
    double mean_reward = 0.0;
    double learning_rate = 0.0;
};

struct PhaseLog {
    std::string label;
    std::vector<EpochRecord> epochs;
    std::vector<std::string> events;
    double final_learning_rate = 0.0;
};

// Rollout contexts come from `items` (trainee context + a per-item reward of
// the rollout output). Per-epoch, fresh rollouts are drawn from the frozen
// snapshot, advantages are group-standardized, and the clipped surrogate is
// ascended. Per-item RNG streams are derived from the seed so context order
// does not matter.
struct PhaseItem {
    std::size_t context = 0;
    std::function<double(int output)> reward;
};

inline PhaseLog grpo_phase(TabularPolicy& trainee, const std::vector<PhaseItem>& items,
                           const TabularPolicy* kl_ref, const GrpoConfig& cfg,
                           std::uint64_t phase_salt, const std::string& label) {
    validate_config(cfg);
    if (items.empty()) throw ValidationError("grpo_phase: no rollout items");
    PhaseLog log;
    log.label = label;
    double lr = cfg.learning_rate;
    double prev_reward = -std::numeric_limits<double>::infinity();
    int decreasing = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs_per_phase; ++epoch) {
        TabularPolicy old = trainee;
        std::vector<RolloutGroup> groups;
        groups.reserve(items.size());
        KahanSum reward_sum;
        for (std::size_t idx = 0; idx < items.size(); ++idx) {
            auto rng = make_rng(cfg.seed, phase_salt * 1000003ull + epoch * 131ull + idx);
            RolloutGroup g;
            g.context = items[idx].context;
            auto probs = old.row_probs(g.context);
            for (std::size_t i = 0; i < cfg.group_size; ++i) {
                int o = world::sample_categorical(probs, rng);
                g.outputs.push_back(o);
                g.old_logprobs.push_back(std::log(probs[static_cast<std::size_t>(o)]));
                g.rewards.push_back(items[idx].reward(o));
            }
            g.rewards = clamp_neg_inf_rewards(std::move(g.rewards));
            for (double r : g.rewards) reward_sum.add(r);
            g.advantages = grpo_advantages(g.rewards, cfg.advantage_std_floor);
            groups.push_back(std::move(g));
        }
        GrpoConfig step_cfg = cfg;
        for (std::size_t u = 0; u < cfg.updates_per_rollout; ++u) {
            auto grad = clipped_surrogate_gradient(trainee, groups, kl_ref, step_cfg);
            for (std::size_t k = 0; k < trainee.logits.size(); ++k)
                trainee.logits[k] += lr * grad[k];
        }
        double mean_reward =
            reward_sum.value() / static_cast<double>(items.size() * cfg.group_size);
        log.epochs.push_back({mean_reward, lr});
        if (mean_reward < prev_reward) {
            if (++decreasing >= 3) {
                lr *= 0.5;
                decreasing = 0;
                log.events.push_back(label + ": mean reward fell 3 epochs running at epoch " +
                                     std::to_string(epoch) + ", learning rate halved to " +
                                     fmt_double(lr));
            }
        } else {
            decreasing = 0;
        }
        prev_reward = mean_reward;
    }
    log.final_learning_rate = lr;
    return log;
}

// ---------------------------------------------------------------------------
// Perplexity
// ---------------------------------------------------------------------------

struct EvalPair {
    int x = 0;
    int y = 0;
};

// exp(total NLL / total output symbols); one symbol per response here.
inline double perplexity(const std::function<double(int x, int y)>& logprob,
                         const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw ValidationError("perplexity: empty eval set");
    KahanSum nll;
    for (const auto& p : pairs) {
        double lp = logprob(p.x, p.y);
        if (is_neg_inf(lp))
            throw ValidationError("perplexity: zero-probability target (x=" +
                                  std::to_string(p.x) + ", y=" + std::to_string(p.y) + ")");
        nll.add(-lp);
    }
    return std::exp(nll.value() / static_cast<double>(pairs.size()));
}

inline double perplexity(prov::Provider& provider,
                         const std::vector<std::pair<prov::RenderedContext, prov::Target>>&
                             pairs) {
    if (pairs.empty()) throw ValidationError("perplexity: empty eval set");
    KahanSum nll;
    std::size_t tokens = 0;
    for (const auto& [ctx, tgt] : pairs) {
        auto scored = provider.score(ctx, tgt);
        if (is_neg_inf(scored.total_logprob))
            throw ValidationError("perplexity: zero-probability target");
        nll.add(-scored.total_logprob);
        tokens += scored.token_count;
    }
    return std::exp(nll.value() / static_cast<double>(tokens));
}

// ---------------------------------------------------------------------------
// Co-evolving training
// ---------------------------------------------------------------------------

enum class InitMode { sft, uniform };

struct CorlOptions {
    std::size_t traces_per_context = 2;  // supervised traces drawn per input
    double teacher_accuracy = 0.65;      // chance a trace keeps the true reasoning id
    double smoothing_alpha = 0.5;        // add-alpha smoothing for the ML fits
    bool q2_routes_on_reasoning = true;  // q2 context = r (shared across inputs) vs (x, r)
    std::size_t eval_pairs = 512;
    std::uint64_t eval_seed = 999;
};

struct Trace {
    int x = 0;
    int teacher_r = 0;
    int y = 0;
};

struct HistoryRow {
    std::string phase;
    std::size_t epoch = 0;
    double mean_reward = 0.0;
    double perplexity = 0.0;
};

struct CorlResult {
    TabularPolicy q1;
    TabularPolicy q2;
    TabularPolicy reference;  // frozen sft q2 snapshot used by the response reward
    std::vector<HistoryRow> history;
    std::vector<Trace> traces;
    std::vector<EvalPair> eval_pairs;
};

namespace detail {

inline std::size_t q2_context(const world::SyntheticWorld& w, const CorlOptions& opt, int x,
                              int r) {
    return opt.q2_routes_on_reasoning
               ? static_cast<std::size_t>(r)
               : static_cast<std::size_t>(x) * static_cast<std::size_t>(w.nr) +
                     static_cast<std::size_t>(r);
}

inline std::size_t q2_contexts_total(const world::SyntheticWorld& w, const CorlOptions& opt) {
    return opt.q2_routes_on_reasoning ? static_cast<std::size_t>(w.nr)
                                      : static_cast<std::size_t>(w.nx()) *
                                            static_cast<std::size_t>(w.nr);
}

// Supervised traces: the golden y comes from the world's true process; the
// recorded reasoning id is a noisy teacher label around the true one.
inline std::vector<Trace> draw_traces(const world::SyntheticWorld& w, const CorlOptions& opt,
                                      std::uint64_t seed) {
    auto rng = make_rng(seed, 61);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Trace> traces;
    for (int x = 0; x < w.nx(); ++x) {
        std::vector<double> rrow(w.reasoning.begin() + static_cast<size_t>(x) * w.nr,
                                 w.reasoning.begin() + (static_cast<size_t>(x) + 1) * w.nr);
        for (std::size_t t = 0; t < opt.traces_per_context; ++t) {
            Trace tr;
            tr.x = x;
            int r_true = world::sample_categorical(rrow, rng);
            tr.y = world::sample_categorical(w.cond_row(world::Table::gold, x, r_true), rng);
            if (w.nr > 1 && unif(rng) > opt.teacher_accuracy) {
                int wrong = static_cast<int>(rng() % static_cast<std::uint64_t>(w.nr - 1));
                tr.teacher_r = wrong >= r_true ? wrong + 1 : wrong;
            } else {
                tr.teacher_r = r_true;
            }
            traces.push_back(tr);
        }
    }
    return traces;
}

inline std::vector<EvalPair> draw_eval_pairs(const world::SyntheticWorld& w, std::size_t n,
                                             std::uint64_t seed) {
    auto rng = make_rng(seed, 67);
    std::vector<EvalPair> pairs;
    pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        int u = world::sample_categorical(w.p_u, rng);
        int a = world::sample_categorical(w.p_a, rng);
        int d = world::sample_categorical(w.p_d, rng);
        int x = w.x_index(u, a, d);
        std::vector<double> rrow(w.reasoning.begin() + static_cast<size_t>(x) * w.nr,
                                 w.reasoning.begin() + (static_cast<size_t>(x) + 1) * w.nr);
        int r = world::sample_categorical(rrow, rng);
        int y = world::sample_categorical(w.cond_row(world::Table::gold, x, r), rng);
        pairs.push_back({x, y});
    }
    return pairs;
}

inline TabularPolicy fit_counts(std::size_t nc, std::size_t no,
                                const std::vector<std::pair<std::size_t, int>>& obs,
                                double alpha) {
    std::vector<double> counts(nc * no, alpha);
    std::vector<double> totals(nc, alpha * static_cast<double>(no));
    for (const auto& [c, o] : obs) {
        counts[c * no + static_cast<std::size_t>(o)] += 1.0;
        totals[c] += 1.0;
    }
    TabularPolicy p = TabularPolicy::uniform(nc, no);
    for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t o = 0; o < no; ++o)
            p.logits[c * no + o] = std::log(counts[c * no + o] / totals[c]);
    return p;
}

}  // namespace detail

// Marginalized density of the (q1, q2) pair: ln sum_r q1(r|x) q2(y|ctx(x,r)).
inline std::function<double(int, int)> composed_scorer(const world::SyntheticWorld& w,
                                                       const CorlOptions& opt,
                                                       const TabularPolicy& q1,
                                                       const TabularPolicy& q2) {
    return [&w, opt, q1, q2](int x, int y) {
        KahanSum total;
        auto r_probs = q1.row_probs(static_cast<std::size_t>(x));
        for (int r = 0; r < w.nr; ++r)
            total.add(r_probs[static_cast<std::size_t>(r)] *
                      q2.prob(detail::q2_context(w, opt, x, r), static_cast<std::size_t>(y)));
        double p = total.value();
        return p > 0.0 ? std::log(p) : kNegInf;
    };
}

inline std::function<double(int, int)> policy_scorer(const TabularPolicy& p) {
    return [p](int x, int y) {
        return p.logprob(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    };
}

inline CorlResult corl_train(const world::SyntheticWorld& w, const GrpoConfig& cfg,
                             InitMode init, const CorlOptions& opt = {}) {
    validate_config(cfg);
    CorlResult result;
    result.traces = detail::draw_traces(w, opt, cfg.seed);
    result.eval_pairs = detail::draw_eval_pairs(w, opt.eval_pairs, opt.eval_seed);

    const std::size_t nx = static_cast<std::size_t>(w.nx());
    const std::size_t nq2 = detail::q2_contexts_total(w, opt);
    if (init == InitMode::sft) {
        std::vector<std::pair<std::size_t, int>> q1_obs, q2_obs;
        for (const auto& t : result.traces) {
            q1_obs.emplace_back(static_cast<std::size_t>(t.x), t.teacher_r);
            q2_obs.emplace_back(detail::q2_context(w, opt, t.x, t.teacher_r), t.y);
        }
        result.q1 = detail::fit_counts(nx, static_cast<std::size_t>(w.nr), q1_obs,
                                       opt.smoothing_alpha);
        result.q2 = detail::fit_counts(nq2, static_cast<std::size_t>(w.ny), q2_obs,
                                       opt.smoothing_alpha);
    } else {
        result.q1 = TabularPolicy::uniform(nx, static_cast<std::size_t>(w.nr));
        result.q2 = TabularPolicy::uniform(nq2, static_cast<std::size_t>(w.ny));
    }
    result.reference = result.q2;
    TabularPolicy q1_init = result.q1;

    auto record_phase = [&](const PhaseLog& log) {
        double ppl = perplexity(composed_scorer(w, opt, result.q1, result.q2),
                                result.eval_pairs);
        for (std::size_t e = 0; e < log.epochs.size(); ++e)
            result.history.push_back(
                {log.label, e, log.epochs[e].mean_reward,
                 e + 1 == log.epochs.size() ? ppl : 0.0});
    };

    for (std::size_t alt = 0; alt < cfg.alternations; ++alt) {
        // Reasoning phase: q1 rollouts scored by the current q2's probability
        // of the golden response given the sampled reasoning id.
        {
            std::vector<PhaseItem> items;
            const TabularPolicy& q2_now = result.q2;
            for (const auto& t : result.traces) {
                items.push_back(PhaseItem{
                    static_cast<std::size_t>(t.x), [&w, &opt, &q2_now, t](int r_out) {
                        return reasoning_reward(q2_now,
                                                detail::q2_context(w, opt, t.x, r_out), t.y);
                    }});
            }
            record_phase(grpo_phase(result.q1, items, &q1_init, cfg, 500 + alt * 2,
                                    "q1-alt" + std::to_string(alt)));
        }
        // Response phase: q2 rollouts under reasoning ids drawn from the
        // current q1, rewarded by the frozen reference ratio.
        {
            auto rng = make_rng(cfg.seed, 7700 + alt);
            std::vector<PhaseItem> items;
            const TabularPolicy& ref = result.reference;
            for (const auto& t : result.traces) {
                int r_hat = result.q1.sample(static_cast<std::size_t>(t.x), rng);
                std::size_t ctx = detail::q2_context(w, opt, t.x, r_hat);
                items.push_back(PhaseItem{ctx, [&ref, ctx, t](int y_out) {
                                              return response_reward(ref, ctx, y_out, t.y);
                                          }});
            }
            record_phase(grpo_phase(result.q2, items, &result.reference, cfg, 600 + alt * 2,
                                    "q2-alt" + std::to_string(alt)));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

struct AblationResult {
    double ppl_ours = 0.0;
    double ppl_no_corl = 0.0;
    double ppl_no_reasoning = 0.0;
};

// ours: sft init + co-evolution; no_corl: sft init only; no_reasoning: a
// single policy fit directly to (x, y). All three share the same traces and
// the same eval pairs.
inline AblationResult ablation_suite(const world::SyntheticWorld& w, const GrpoConfig& cfg,
                                     const CorlOptions& opt = {}) {
    AblationResult out;
    auto trained = corl_train(w, cfg, InitMode::sft, opt);
    out.ppl_ours = perplexity(composed_scorer(w, opt, trained.q1, trained.q2),
                              trained.eval_pairs);

    std::vector<std::pair<std::size_t, int>> q1_obs, q2_obs, direct_obs;
    for (const auto& t : trained.traces) {
        q1_obs.emplace_back(static_cast<std::size_t>(t.x), t.teacher_r);
        q2_obs.emplace_back(detail::q2_context(w, opt, t.x, t.teacher_r), t.y);
        direct_obs.emplace_back(static_cast<std::size_t>(t.x), t.y);
    }
    auto q1_sft = detail::fit_counts(static_cast<std::size_t>(w.nx()),
                                     static_cast<std::size_t>(w.nr), q1_obs,
                                     opt.smoothing_alpha);
    auto q2_sft = detail::fit_counts(detail::q2_contexts_total(w, opt),
                                     static_cast<std::size_t>(w.ny), q2_obs,
                                     opt.smoothing_alpha);
    out.ppl_no_corl = perplexity(composed_scorer(w, opt, q1_sft, q2_sft), trained.eval_pairs);

    auto direct = detail::fit_counts(static_cast<std::size_t>(w.nx()),
                                     static_cast<std::size_t>(w.ny), direct_obs,
                                     opt.smoothing_alpha);
    out.ppl_no_reasoning = perplexity(policy_scorer(direct), trained.eval_pairs);
    return out;
}

// Reference configuration for the bundled reasoning-sufficient world: one
// noisy supervised trace per input and add-1 smoothing leave the direct
// p(y|x) table heavily diluted and the reasoning route clearly learnable.
inline std::pair<GrpoConfig, CorlOptions> ablation_reference_config(std::uint64_t seed = 0) {
    GrpoConfig cfg;
    cfg.learning_rate = 2.0;
    cfg.epochs_per_phase = 30;
    cfg.alternations = 2;
    cfg.seed = seed;
    CorlOptions opt;
    opt.traces_per_context = 1;
    opt.teacher_accuracy = 0.65;
    opt.smoothing_alpha = 1.0;
    opt.eval_pairs = 1024;
    return {cfg, opt};
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const TabularPolicy& p) {
    nlohmann::json j;
    j["n_contexts"] = p.n_contexts;
    j["n_outputs"] = p.n_outputs;
    j["temperature"] = p.temperature;
    j["logits"] = p.logits;
    return j;
}

inline std::string history_csv(const std::vector<HistoryRow>& rows) {
    std::string out = "phase,epoch,mean_reward,perplexity\n";
    for (const auto& r : rows)
        out += r.phase + "," + std::to_string(r.epoch) + "," + fmt_double(r.mean_reward) + "," +
               fmt_double(r.perplexity) + "\n";
    return out;
}

}  // namespace remid::corl
