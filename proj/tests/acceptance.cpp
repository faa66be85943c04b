// Acceptance suite: one line per criterion, every tolerance pinned in code.
// Exits nonzero if any criterion fails. Runs entirely offline; the only
// subprocess calls are to the project's own CLI binary.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "remid/analysis.hpp"
#include "remid/corl.hpp"
#include "remid/metrics.hpp"
#include "remid/remote.hpp"
#include "remid/worlds.hpp"

namespace fs = std::filesystem;
using namespace remid;

namespace {

struct Checker {
    std::vector<std::string> failures;

    void require(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

using CriterionFn = std::function<void(Checker&)>;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

mi::ScoredPairSet gold_pairs(const world::SyntheticWorld& w, world::Which which, std::size_t n,
                             std::uint64_t seed) {
    auto split = world::sample_split(w, which, n, seed, "pairs", data::SplitKind::id_test);
    mi::ScoredPairSet pairs;
    pairs.cross_mode = mi::default_cross_mode(n, seed);
    for (const auto& s : split.samples) {
        auto ctx = prov::render_prompt(
            s, prov::Reasoning{"r:" + std::to_string(s.ids->r), s.ids->r},
            prov::PromptTemplate::with_reasoning);
        pairs.entries.push_back({ctx, prov::Target{s.agent_golden_response, s.ids->y}});
    }
    return pairs;
}

// ---------------------------------------------------------------------------

void criterion1_club_oracle(Checker& c) {
    auto family = worlds::bundled_estimation_worlds();
    c.require(family.size() >= 5, "need at least 5 bundled worlds");
    for (const auto& w : family) {
        auto t0 = std::chrono::steady_clock::now();
        prov::OracleProvider oracle(w, world::Table::gold);
        auto pairs = gold_pairs(w, world::Which::P, 10000, 1234);
        auto est = mi::club_mi(pairs, oracle);
        double exact = world::exact_club(w, world::Which::P, world::Table::gold);
        double exact_mi_v = world::exact_mi(w, world::Which::P, world::Table::gold);
        double elapsed = seconds_since(t0);
        c.require(std::abs(est.value - exact) <= 3.0 * est.se,
                  w.name + ": |club-exact| = " + fmt_double(std::abs(est.value - exact)) +
                      " > 3*se = " + fmt_double(3.0 * est.se));
        c.require(est.value >= exact_mi_v - 3.0 * est.se,
                  w.name + ": upper-bound property violated");
        c.require(elapsed < 10.0, w.name + ": runtime " + fmt_double(elapsed) + "s >= 10s");
    }
    auto w22 = worlds::two_by_two();
    c.require(std::abs(world::exact_club(w22, world::Which::P, world::Table::gold) - 0.8789) <
                  1e-4,
              "2x2 exact contrastive value != 0.8789");
    c.require(std::abs(world::exact_mi(w22, world::Which::P, world::Table::gold) - 0.3680) < 1e-4,
              "2x2 exact MI != 0.3680");
}

void criterion2_divergence(Checker& c) {
    auto bern = [](double p1) {
        return div::histogram_from_masses({{"0", 1.0 - p1}, {"1", p1}});
    };
    auto p = div::histogram_from_masses({{"a", 0.5}, {"b", 0.5}});
    auto q = div::histogram_from_masses({{"c", 0.5}, {"d", 0.5}});
    c.require(std::abs(div::js(p, q) - div::kLn2) <= 1e-12, "disjoint supports != ln 2");
    c.require(std::abs(div::js(bern(0.5), bern(0.9)) - 0.1017) <= 1e-4,
              "Bernoulli(0.5)||Bernoulli(0.9) != 0.1017 +- 1e-4");

    auto rng = make_rng(99);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const char* keys[] = {"a", "b", "c", "d", "e", "f", "g"};
    auto random_hist = [&]() {
        std::map<std::string, double> masses;
        double total = 0.0;
        for (const char* k : keys) {
            double m = unif(rng) < 0.3 ? 0.0 : unif(rng);
            if (m > 0) masses[k] = m;
            total += m;
        }
        if (masses.empty()) masses["a"] = total = 1.0;
        for (auto& [k, v] : masses) v /= total;
        return div::histogram_from_masses(masses);
    };
    std::size_t violations = 0;
    for (int i = 0; i < 10000; ++i) {
        auto a = random_hist();
        auto b = random_hist();
        double v = div::js(a, b);
        if (div::js(b, a) != v) ++violations;
        if (!(v >= 0.0 && v <= div::kLn2 + 1e-12)) ++violations;
    }
    c.require(violations == 0,
              "js property violations over 10000 random pairs: " + std::to_string(violations));
}

void criterion3_dominance(Checker& c) {
    auto t0 = std::chrono::steady_clock::now();
    std::size_t violations = 0, count = 0;
    // 120 randomized worlds across three shapes, preconditions satisfied by
    // construction (shared golden conditional, valid marginals).
    std::vector<worlds::RandomWorldSpec> specs(3);
    specs[1].nu = 4;
    specs[1].na = 3;
    specs[1].nd = 2;
    specs[1].nr = 3;
    specs[1].ny = 6;
    specs[2].nu = 2;
    specs[2].na = 2;
    specs[2].nd = 2;
    specs[2].nr = 1;
    specs[2].ny = 8;
    for (std::size_t si = 0; si < specs.size(); ++si) {
        for (std::uint64_t seed = 1; seed <= 40; ++seed) {
            auto w = worlds::random_world(seed + 1000 * si, specs[si]);
            double drop = world::exact_true_remid(w);
            double bound = world::exact_bound(w).bound;
            ++count;
            if (!(bound >= drop - 1e-12)) ++violations;
        }
    }
    c.require(count >= 100, "fewer than 100 randomized worlds");
    c.require(violations == 0, std::to_string(violations) + "/" + std::to_string(count) +
                                   " exact dominance violations");

    // estimated route on a subset, with the sampling cushion
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto w = worlds::random_world(seed);
        auto bundle = metrics::make_oracle_bundle(w, 400, seed);
        auto id = world::sample_split(w, world::Which::P, 400, seed * 7 + 1, "id",
                                      data::SplitKind::id_test);
        auto ood = world::sample_split(w, world::Which::Q, 400, seed * 7 + 2, "ood",
                                       data::SplitKind::user_shift);
        auto drop = metrics::remid(id, ood, bundle);
        auto bound = metrics::drop_bound(id, ood, bundle, div::ExactCategorical{});
        if (!(bound.bound >= drop.remid_value - 3.0 * drop.se)) ++violations;
    }
    c.require(violations == 0, "estimated-route dominance violated");
    c.require(seconds_since(t0) < 300.0, "criterion 3 exceeded 5 minutes");
}

void criterion4_shift_monotonicity(Checker& c) {
    const std::vector<double> lambdas = {0.1, 0.3, 0.5, 0.7, 0.9};
    const std::size_t n = 1200;
    stats::PairedSeries drop_series, bound_series;
    for (double lambda : lambdas) {
        auto w = worlds::user_shift_world(lambda);
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            auto bundle = metrics::make_oracle_bundle(w, n, seed * 31 + 7);
            auto id = world::sample_split(w, world::Which::P, n, seed * 97 + 1, "id",
                                          data::SplitKind::id_test);
            auto ood = world::sample_split(w, world::Which::Q, n, seed * 97 + 2, "ood",
                                           data::SplitKind::user_shift);
            auto drop = metrics::remid(id, ood, bundle);
            auto bound = metrics::drop_bound(id, ood, bundle, div::ExactCategorical{});
            drop_series.xs.push_back(lambda);
            drop_series.ys.push_back(drop.remid_value);
            bound_series.xs.push_back(lambda);
            bound_series.ys.push_back(bound.bound);
        }
    }
    double rho_drop = stats::spearman(drop_series).value;
    double rho_bound = stats::spearman(bound_series).value;
    c.require(rho_drop >= 0.9,
              "spearman(lambda, drop) = " + fmt_double(rho_drop) + " < 0.9");
    c.require(rho_bound >= 0.9,
              "spearman(lambda, bound) = " + fmt_double(rho_bound) + " < 0.9");
}

void criterion5_null_calibration(Checker& c) {
    auto w = worlds::user_shift_world(0.5);
    std::vector<double> drops;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto bundle = metrics::make_oracle_bundle(w, 256, seed * 13 + 1);
        auto id = world::sample_split(w, world::Which::P, 256, seed * 17 + 1, "id",
                                      data::SplitKind::id_test);
        auto ood = world::sample_split(w, world::Which::P, 256, seed * 17 + 2, "ood",
                                       data::SplitKind::id_test);
        drops.push_back(metrics::remid(id, ood, bundle).remid_value);
    }
    double mean = mean_of(drops);
    double se = sample_std_of(drops) / std::sqrt(static_cast<double>(drops.size()));
    c.require(std::abs(mean) <= 3.0 * se,
              "null drop mean " + fmt_double(mean) + " exceeds 3*se " + fmt_double(3.0 * se));

    for (double lambda : {0.3, 0.9}) {
        auto ws = worlds::user_shift_world(lambda);
        auto bundle = metrics::make_oracle_bundle(ws, 600, 77);
        bundle.rpm = std::make_shared<prov::OracleProvider>(ws, world::Table::gold,
                                                            metrics::derive_seed(77, 9009));
        auto id = world::sample_split(ws, world::Which::P, 600, 101, "id",
                                      data::SplitKind::id_test);
        auto ood = world::sample_split(ws, world::Which::Q, 600, 103, "ood",
                                       data::SplitKind::user_shift);
        auto rep = metrics::remid(id, ood, bundle);
        c.require(std::abs(rep.remid_value) <= 3.0 * rep.se,
                  "perfect-model drop at lambda " + fmt_double(lambda) + " is " +
                      fmt_double(rep.remid_value) + " with se " + fmt_double(rep.se));
    }
}

void criterion6_ablation_ordering(Checker& c) {
    auto w = worlds::reasoning_sufficient_world();
    int ordered = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto [cfg, opt] = corl::ablation_reference_config(seed);
        auto res = corl::ablation_suite(w, cfg, opt);
        if (res.ppl_ours < res.ppl_no_corl && res.ppl_no_corl < res.ppl_no_reasoning) ++ordered;
    }
    c.require(ordered >= 9, "perplexity ordering held in only " + std::to_string(ordered) +
                                "/10 seeds");
}

void criterion7_grpo_microchecks(Checker& c) {
    auto adv = corl::grpo_advantages({1, 2, 3});
    c.require(std::abs(adv[0] + 1.2247) <= 1e-4 && std::abs(adv[1]) <= 1e-4 &&
                  std::abs(adv[2] - 1.2247) <= 1e-4,
              "advantages of [1,2,3] are off");
    auto adv2 = corl::grpo_advantages({0, 1});
    c.require(std::abs(adv2[0] + 1.0) <= 1e-12 && std::abs(adv2[1] - 1.0) <= 1e-12,
              "advantages of [0,1] are off");
    auto zeros = corl::grpo_advantages({5, 5, 5, 5});
    c.require(zeros == std::vector<double>(4, 0.0), "zero-variance group not zeroed");

    corl::TabularPolicy ref = corl::TabularPolicy::uniform(1, 4);
    ref.logits = {std::log(0.1), std::log(0.2), std::log(0.3), std::log(0.4)};
    c.require(std::abs(corl::response_reward(ref, 0, 0, 1) - 0.5) <= 1e-12,
              "response reward ratio 0.1/0.2 != 0.5");
    c.require(corl::response_reward(ref, 0, 2, 0) == 1.0, "response reward clamp failed");
    c.require(corl::response_reward(ref, 0, 1, 1) == 1.0, "gold rollout reward != 1");

    // gradient vs central differences, 100 random instances
    auto rng = make_rng(41);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 1);
    const double h = 1e-5;
    int checked = 0, attempts = 0, bad = 0;
    while (checked < 100 && attempts < 2000) {
        ++attempts;
        const std::size_t nc = 2, no = 5, g = 4;
        corl::TabularPolicy trainee = corl::TabularPolicy::uniform(nc, no);
        corl::TabularPolicy old = corl::TabularPolicy::uniform(nc, no);
        corl::TabularPolicy ref2 = corl::TabularPolicy::uniform(nc, no);
        for (auto& l : trainee.logits) l = normal(rng);
        for (auto& l : old.logits) l = normal(rng);
        for (auto& l : ref2.logits) l = normal(rng);
        corl::GrpoConfig cfg;
        cfg.kl_coeff = coin(rng) ? 0.0 : 0.25;
        std::vector<corl::RolloutGroup> groups;
        bool near_kink = false;
        for (std::size_t cx = 0; cx < nc; ++cx) {
            corl::RolloutGroup grp;
            grp.context = cx;
            auto old_probs = old.row_probs(cx);
            auto new_probs = trainee.row_probs(cx);
            for (std::size_t i = 0; i < g; ++i) {
                auto r2 = make_rng(attempts * 1000 + cx * 10 + i);
                int o = world::sample_categorical(old_probs, r2);
                grp.outputs.push_back(o);
                grp.old_logprobs.push_back(std::log(old_probs[(std::size_t)o]));
                grp.rewards.push_back(normal(rng));
                double ratio = new_probs[(std::size_t)o] / old_probs[(std::size_t)o];
                if (std::abs(ratio - (1.0 - cfg.clip_epsilon)) < 50 * h ||
                    std::abs(ratio - (1.0 + cfg.clip_epsilon)) < 50 * h)
                    near_kink = true;
            }
            grp.advantages = corl::grpo_advantages(grp.rewards);
            groups.push_back(std::move(grp));
        }
        if (near_kink) continue;
        auto analytic = corl::clipped_surrogate_gradient(trainee, groups, &ref2, cfg);
        double num = 0.0, diff = 0.0;
        for (std::size_t k = 0; k < trainee.logits.size(); ++k) {
            corl::TabularPolicy up = trainee, down = trainee;
            up.logits[k] += h;
            down.logits[k] -= h;
            double fd = (corl::clipped_surrogate(up, groups, &ref2, cfg) -
                         corl::clipped_surrogate(down, groups, &ref2, cfg)) /
                        (2 * h);
            diff += (fd - analytic[k]) * (fd - analytic[k]);
            num += fd * fd;
        }
        if (std::sqrt(diff) / std::max(1e-12, std::sqrt(num)) > 1e-5) ++bad;
        ++checked;
    }
    c.require(checked == 100, "could not assemble 100 gradient-check instances");
    c.require(bad == 0, std::to_string(bad) + " gradient checks exceeded 1e-5 relative error");
}

void criterion8_bound_convergence(Checker& c) {
    std::vector<world::SyntheticWorld> family;
    for (int i = 0; i < 16; ++i) family.push_back(worlds::user_shift_world(0.10 + 0.05 * i));
    stats::ConvergenceOptions opt;
    opt.sample_sizes = {8, 32, 96, 256};
    opt.seeds_per_size = 12;
    opt.seed = 0;
    auto rows = stats::bound_convergence(family, opt);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        c.require(rows[i].pearson_r >= rows[i - 1].pearson_r - 0.02,
                  "pearson fell from " + fmt_double(rows[i - 1].pearson_r) + " to " +
                      fmt_double(rows[i].pearson_r) + " at n=" + std::to_string(rows[i].n));
        c.require(rows[i].spearman_rho >= rows[i - 1].spearman_rho - 0.02,
                  "spearman fell from " + fmt_double(rows[i - 1].spearman_rho) + " to " +
                      fmt_double(rows[i].spearman_rho) + " at n=" + std::to_string(rows[i].n));
    }
    c.require(rows.back().pearson_r > rows.front().pearson_r,
              "no overall upward trend in the correlation");
}

void criterion9_statistics_oracle(Checker& c) {
    stats::PairedSeries s1;
    s1.xs = {1, 2, 3, 4};
    s1.ys = {3, 5, 7, 9};
    c.require(std::abs(stats::pearson(s1).value - 1.0) <= 1e-9, "exact linearity r != 1");
    stats::PairedSeries s2;
    s2.xs = {1, 2, 3};
    s2.ys = {3, 2, 1};
    c.require(std::abs(stats::pearson(s2).value + 1.0) <= 1e-9, "reversal r != -1");
    stats::PairedSeries s3;
    s3.xs = {1, 2, 3, 4};
    s3.ys = {2, 1, 4, 3};
    c.require(std::abs(stats::pearson(s3).value - 0.6) <= 1e-9, "documented vector r != 0.6");
    c.require(std::abs(stats::spearman(s3).value - 0.6) <= 1e-9, "documented vector rho != 0.6");

    auto rng = make_rng(43);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    std::uniform_real_distribution<double> scale(0.5, 4.0);
    std::size_t violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n = 5 + static_cast<std::size_t>(trial % 8);
        std::vector<double> xs(n), ys(n);
        for (std::size_t i = 0; i < n; ++i) {
            xs[i] = unif(rng);
            ys[i] = unif(rng);
        }
        double a = scale(rng), b = unif(rng);
        stats::PairedSeries base, moved;
        base.xs = xs;
        base.ys = ys;
        moved.xs.resize(n);
        for (std::size_t i = 0; i < n; ++i) moved.xs[i] = a * xs[i] + b;
        moved.ys = ys;
        if (std::abs(stats::pearson(base).value - stats::pearson(moved).value) > 1e-12)
            ++violations;
        if (stats::spearman(base).value != stats::spearman(moved).value) ++violations;
    }
    c.require(violations == 0,
              std::to_string(violations) + " affine-invariance violations in 1000 series");
}

void criterion10_wire_conformance(Checker& c) {
    std::ifstream in(fs::path(REMID_FIXTURES_DIR) / "remote_fixture.json");
    if (!in) {
        c.require(false, "remote fixture missing");
        return;
    }
    nlohmann::json fx;
    in >> fx;
    remote::RemoteConfig cfg;
    cfg.endpoint = fx["config"]["endpoint"].get<std::string>();
    cfg.model = fx["config"]["model"].get<std::string>();
    cfg.logprobs = fx["config"]["logprobs"].get<int>();
    cfg.backoff_ms = 0;
    std::string seen_request;
    std::size_t transport_calls = 0;
    auto transport = [&](const remote::HttpRequest& req) {
        ++transport_calls;
        seen_request = req.body;
        return remote::HttpResult{true, "", 200, fx["response"].dump()};
    };
    remote::RemoteProvider provider(cfg, transport);
    prov::RenderedContext ctx;
    ctx.text = fx["context_text"].get<std::string>();
    auto scored =
        provider.score(ctx, prov::Target{fx["target_text"].get<std::string>(), std::nullopt});
    c.require(seen_request == fx["expected_request_body"].get<std::string>(),
              "request body does not replay byte-for-byte");
    c.require(std::abs(scored.total_logprob - fx["expected"]["total_logprob"].get<double>()) <=
                  1e-12,
              "parsed total logprob differs from the fixture");
    auto expected = fx["expected"]["token_logprobs"].get<std::vector<double>>();
    bool tokens_ok = scored.token_logprobs.size() == expected.size();
    for (std::size_t i = 0; tokens_ok && i < expected.size(); ++i)
        tokens_ok = std::abs(scored.token_logprobs[i] - expected[i]) <= 1e-12;
    c.require(tokens_ok, "parsed token logprobs differ from the fixture");
    c.require(transport_calls == 1, "fixture replay issued more than one request");
}

void criterion11_determinism(Checker& c) {
    auto dir = fs::temp_directory_path() / "remid_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto w = worlds::user_shift_world(0.6);
    auto world_path = dir / "world.json";
    std::ofstream(world_path) << world::to_json(w).dump(2) << "\n";

    auto run = [&](const std::string& args) {
        std::string cmd = std::string(REMID_CLI_PATH) + " " + args + " >/dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    auto slurp = [&](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
    };

    std::string base = "estimate-remid --world " + world_path.string() + " --n 128 --seed 21 --out ";
    c.require(run(base + (dir / "a").string()) == 0, "first cli run failed");
    c.require(run(base + (dir / "b").string()) == 0, "second cli run failed");
    c.require(slurp(dir / "a/reports/remid.json") == slurp(dir / "b/reports/remid.json"),
              "drop reports differ between identical runs");
    c.require(!slurp(dir / "a/reports/remid.json").empty(), "empty drop report");
    c.require(slurp(dir / "a/manifest.json") == slurp(dir / "b/manifest.json"),
              "manifests differ between identical runs");

    std::string abl = "ablation --seed 4 --out ";
    c.require(run(abl + (dir / "c").string()) == 0, "first ablation run failed");
    c.require(run(abl + (dir / "d").string()) == 0, "second ablation run failed");
    c.require(slurp(dir / "c/reports/ablation.csv") == slurp(dir / "d/reports/ablation.csv"),
              "ablation reports differ between identical runs");
    fs::remove_all(dir);
}

}  // namespace

int main() {
    struct Entry {
        int id;
        const char* name;
        CriterionFn fn;
    };
    std::vector<Entry> entries = {
        {1, "club oracle equivalence on bundled worlds (N=10000, <10s/world)",
         criterion1_club_oracle},
        {2, "divergence suite (symmetry, range, ln2, Bernoulli value, 10k property pairs)",
         criterion2_divergence},
        {3, "bound dominance over 100+ randomized worlds (<5min)", criterion3_dominance},
        {4, "shift monotonicity: spearman(lambda, drop) and (lambda, bound) >= 0.9",
         criterion4_shift_monotonicity},
        {5, "null calibration: same-distribution and perfect-model drops center on zero",
         criterion5_null_calibration},
        {6, "co-evolution ablation perplexity ordering in >= 9/10 seeds",
         criterion6_ablation_ordering},
        {7, "grpo micro-checks: advantages, reward clamp, gradient vs finite differences",
         criterion7_grpo_microchecks},
        {8, "bound-vs-drop correlation non-decreasing in N (tolerance 0.02)",
         criterion8_bound_convergence},
        {9, "statistics oracle: documented vectors exact, affine invariance over 1000 series",
         criterion9_statistics_oracle},
        {10, "wire conformance: byte-exact request replay, fixture logprobs, no live network",
         criterion10_wire_conformance},
        {11, "determinism: identical manifests give byte-identical reports",
         criterion11_determinism},
    };

    int failed = 0;
    for (auto& e : entries) {
        Checker checker;
        auto t0 = std::chrono::steady_clock::now();
        try {
            e.fn(checker);
        } catch (const std::exception& ex) {
            checker.failures.push_back(std::string("exception: ") + ex.what());
        }
        double secs = seconds_since(t0);
        if (checker.failures.empty()) {
            std::printf("[PASS] criterion %2d: %s (%.1fs)\n", e.id, e.name, secs);
        } else {
            ++failed;
            std::printf("[FAIL] criterion %2d: %s (%.1fs)\n", e.id, e.name, secs);
            for (const auto& f : checker.failures) std::printf("       - %s\n", f.c_str());
        }
        std::fflush(stdout);
    }
    if (failed == 0) {
        std::printf("acceptance: all %zu criteria passed\n", entries.size());
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", failed);
    return 1;
}
