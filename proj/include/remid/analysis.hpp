#pragma once

// Correlation statistics and the validation studies built on them: Pearson r
// with a two-sided t-transform p-value, Spearman rho on average ranks with an
// exact permutation p-value for n <= 9, judge-score ingestion, deterministic
// SVG scatter plots, and the bound-vs-drop convergence table.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "remid/common.hpp"
#include "remid/metrics.hpp"

namespace remid::stats {

struct PairedSeries {
    std::vector<std::string> labels;
    std::vector<double> xs;
    std::vector<double> ys;
};

inline void validate_series(const PairedSeries& s) {
    if (s.xs.size() != s.ys.size()) throw ValidationError("paired series length mismatch");
    if (s.xs.size() < 3) throw ValidationError("paired series needs n >= 3");
    for (double v : s.xs)
        if (!std::isfinite(v)) throw ValidationError("non-finite value in x series");
    for (double v : s.ys)
        if (!std::isfinite(v)) throw ValidationError("non-finite value in y series");
}

struct CorrelationResult {
    double pearson_r = 0.0;
    double pearson_p = 1.0;
    double spearman_rho = 0.0;
    double spearman_p = 1.0;
    std::size_t n = 0;
};

// ---------------------------------------------------------------------------
// Incomplete beta (continued fraction), for the Student-t tail
// ---------------------------------------------------------------------------

namespace detail {

inline double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double eps = 3e-14, fpmin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

inline double betai(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// Two-sided p for a t statistic with nu degrees of freedom.
inline double t_two_sided_p(double t, double nu) {
    if (!std::isfinite(t)) return 0.0;
    return betai(0.5 * nu, 0.5, nu / (nu + t * t));
}

inline double pearson_r_only(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    double mx = mean_of(xs), my = mean_of(ys);
    KahanSum sxy, sxx, syy;
    for (std::size_t i = 0; i < n; ++i) {
        sxy.add((xs[i] - mx) * (ys[i] - my));
        sxx.add((xs[i] - mx) * (xs[i] - mx));
        syy.add((ys[i] - my) * (ys[i] - my));
    }
    if (sxx.value() <= 0.0 || syy.value() <= 0.0)
        throw ValidationError("correlation undefined: a series is constant");
    double r = sxy.value() / std::sqrt(sxx.value() * syy.value());
    return std::clamp(r, -1.0, 1.0);
}

// Average ranks (ties share the mean of their positions).
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pearson / Spearman
// ---------------------------------------------------------------------------

struct RP {
    double value = 0.0;
    double p = 1.0;
};

inline RP pearson(const PairedSeries& s) {
    validate_series(s);
    RP out;
    out.value = detail::pearson_r_only(s.xs, s.ys);
    const double n = static_cast<double>(s.xs.size());
    if (std::abs(out.value) >= 1.0) {
        out.p = 0.0;
    } else {
        double t = out.value * std::sqrt((n - 2.0) / (1.0 - out.value * out.value));
        out.p = detail::t_two_sided_p(t, n - 2.0);
    }
    return out;
}

// Pearson on average ranks. p-value by exact permutation enumeration for
// n <= 9 and by the t approximation above that.
inline RP spearman(const PairedSeries& s) {
    validate_series(s);
    auto rx = detail::average_ranks(s.xs);
    auto ry = detail::average_ranks(s.ys);
    RP out;
    out.value = detail::pearson_r_only(rx, ry);

    const std::size_t n = s.xs.size();
    if (n <= 9) {
        std::vector<double> perm = ry;
        std::sort(perm.begin(), perm.end());
        std::size_t total = 0, at_least = 0;
        const double observed = std::abs(out.value) - 1e-12;
        do {
            ++total;
            if (std::abs(detail::pearson_r_only(rx, perm)) >= observed) ++at_least;
        } while (std::next_permutation(perm.begin(), perm.end()));
        out.p = static_cast<double>(at_least) / static_cast<double>(total);
    } else {
        if (std::abs(out.value) >= 1.0) {
            out.p = 0.0;
        } else {
            double nd = static_cast<double>(n);
            double t = out.value * std::sqrt((nd - 2.0) / (1.0 - out.value * out.value));
            out.p = detail::t_two_sided_p(t, nd - 2.0);
        }
    }
    return out;
}

inline CorrelationResult correlate(const PairedSeries& s) {
    CorrelationResult res;
    auto pr = pearson(s);
    auto sp = spearman(s);
    res.pearson_r = pr.value;
    res.pearson_p = pr.p;
    res.spearman_rho = sp.value;
    res.spearman_p = sp.p;
    res.n = s.xs.size();
    return res;
}

// ---------------------------------------------------------------------------
// Judge score ingestion
// ---------------------------------------------------------------------------

// CSV with header model,split,score. Scores on a [0,100] scale are divided
// by 100 when any entry exceeds 1.
inline std::map<std::pair<std::string, std::string>, double> ingest_judge_scores(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open judge score file: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("judge score file is empty");
    ++lineno;
    if (normalize_ws(line) != "model,split,score")
        throw ParseError("judge score header must be 'model,split,score', got: " + line);
    std::map<std::pair<std::string, std::string>, double> out;
    double max_score = 0.0;
    while (std::getline(in, line)) {
        ++lineno;
        if (normalize_ws(line).empty()) continue;
        std::size_t c1 = line.find(',');
        std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ParseError("judge scores line " + std::to_string(lineno) +
                             ": expected model,split,score");
        std::string model = line.substr(0, c1);
        std::string split = line.substr(c1 + 1, c2 - c1 - 1);
        char* end = nullptr;
        std::string score_text = line.substr(c2 + 1);
        double score = std::strtod(score_text.c_str(), &end);
        if (end == score_text.c_str() || !std::isfinite(score))
            throw ParseError("judge scores line " + std::to_string(lineno) +
                             ": unparseable score '" + score_text + "'");
        if (score < 0.0 || score > 100.0)
            throw ParseError("judge scores line " + std::to_string(lineno) +
                             ": score out of [0,100]");
        auto key = std::make_pair(model, split);
        if (out.count(key))
            throw ParseError("judge scores line " + std::to_string(lineno) +
                             ": duplicate key (" + model + ", " + split + ")");
        out[key] = score;
        max_score = std::max(max_score, score);
    }
    if (max_score > 1.0)
        for (auto& [k, v] : out) v /= 100.0;
    return out;
}

// ---------------------------------------------------------------------------
// Scatter plot (byte-deterministic SVG)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace detail

inline std::string scatter_svg(const PairedSeries& s, bool fit) {
    validate_series(s);
    const double width = 640, height = 480, margin = 48;
    double xmin = s.xs[0], xmax = s.xs[0], ymin = s.ys[0], ymax = s.ys[0];
    for (double v : s.xs) {
        xmin = std::min(xmin, v);
        xmax = std::max(xmax, v);
    }
    for (double v : s.ys) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
    }
    double xpad = (xmax - xmin) * 0.05 + 1e-9;
    double ypad = (ymax - ymin) * 0.05 + 1e-9;
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;
    auto sx = [&](double x) {
        return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin);
    };
    auto sy = [&](double y) {
        return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin);
    };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
           "viewBox=\"0 0 640 480\">\n";
    out += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
    out += "<line x1=\"" + detail::svg_num(margin) + "\" y1=\"" + detail::svg_num(height - margin) +
           "\" x2=\"" + detail::svg_num(width - margin) + "\" y2=\"" +
           detail::svg_num(height - margin) + "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + detail::svg_num(margin) + "\" y1=\"" + detail::svg_num(margin) +
           "\" x2=\"" + detail::svg_num(margin) + "\" y2=\"" + detail::svg_num(height - margin) +
           "\" stroke=\"black\"/>\n";

    if (fit) {
        // least squares line drawn across the padded x range
        double mx = mean_of(s.xs), my = mean_of(s.ys);
        KahanSum sxy, sxx;
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            sxy.add((s.xs[i] - mx) * (s.ys[i] - my));
            sxx.add((s.xs[i] - mx) * (s.xs[i] - mx));
        }
        if (sxx.value() > 0.0) {
            double slope = sxy.value() / sxx.value();
            double y0 = my + slope * (xmin - mx);
            double y1 = my + slope * (xmax - mx);
            out += "<line x1=\"" + detail::svg_num(sx(xmin)) + "\" y1=\"" +
                   detail::svg_num(sy(y0)) + "\" x2=\"" + detail::svg_num(sx(xmax)) + "\" y2=\"" +
                   detail::svg_num(sy(y1)) + "\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n";
        }
    }
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
        out += "<circle cx=\"" + detail::svg_num(sx(s.xs[i])) + "\" cy=\"" +
               detail::svg_num(sy(s.ys[i])) + "\" r=\"3\" fill=\"#d62728\"/>\n";
    }
    auto corr = correlate(s);
    char ann[128];
    std::snprintf(ann, sizeof(ann), "r=%.3f (p=%.3g), rho=%.3f (p=%.3g), n=%zu", corr.pearson_r,
                  corr.pearson_p, corr.spearman_rho, corr.spearman_p, corr.n);
    out += "<text x=\"" + detail::svg_num(margin + 6) + "\" y=\"" + detail::svg_num(margin - 12) +
           "\" font-family=\"monospace\" font-size=\"13\">" + ann + "</text>\n";
    out += "</svg>\n";
    return out;
}

inline void emit_scatter(const PairedSeries& s, bool fit, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write scatter file: " + path.string());
    out << scatter_svg(s, fit);
}

// ---------------------------------------------------------------------------
// Bound-convergence study
// ---------------------------------------------------------------------------

struct ConvergenceRow {
    std::size_t n = 0;
    double pearson_r = 0.0;
    double spearman_rho = 0.0;
    std::size_t n_worlds = 0;
};

struct ConvergenceOptions {
    std::vector<std::size_t> sample_sizes = {16, 32, 64, 128};
    std::size_t seeds_per_size = 5;  // replicates averaged per (world, N)
    std::uint64_t seed = 0;
    std::size_t entropy_samples = 32;
};

// For each sample size N: estimate the drop and its bound on every world from
// one N-sample replicate, correlate bound vs drop across the world family,
// and average that correlation over seed replicates. Replicates stabilize the
// reported number without erasing the N-dependence: a single N-sample
// estimate is what the correlation at size N is about.
inline std::vector<ConvergenceRow> bound_convergence(
    const std::vector<world::SyntheticWorld>& family, const ConvergenceOptions& opt) {
    if (family.size() < 3)
        throw ValidationError("bound_convergence needs at least 3 worlds to correlate");
    std::vector<ConvergenceRow> rows;
    for (std::size_t size_idx = 0; size_idx < opt.sample_sizes.size(); ++size_idx) {
        const std::size_t n = opt.sample_sizes[size_idx];
        KahanSum pearson_acc, spearman_acc;
        for (std::size_t rep = 0; rep < opt.seeds_per_size; ++rep) {
            PairedSeries series;
            for (std::size_t wi = 0; wi < family.size(); ++wi) {
                const auto& w = family[wi];
                std::uint64_t rep_seed = metrics::derive_seed(
                    opt.seed, (size_idx * 1009 + wi) * 7919 + rep + 1);
                auto id_split = world::sample_split(w, world::Which::P, n, rep_seed, "id",
                                                    data::SplitKind::id_test);
                auto ood_split = world::sample_split(w, world::Which::Q, n,
                                                     metrics::derive_seed(rep_seed, 2),
                                                     "ood", data::SplitKind::user_shift);
                auto bundle = metrics::make_oracle_bundle(w, n, rep_seed, true,
                                                          opt.entropy_samples);
                auto drop = metrics::remid(id_split, ood_split, bundle);
                auto bound = metrics::drop_bound(id_split, ood_split, bundle,
                                                     div::ExactCategorical{});
                series.labels.push_back(w.name);
                series.xs.push_back(bound.bound);
                series.ys.push_back(drop.remid_value);
            }
            auto corr = correlate(series);
            pearson_acc.add(corr.pearson_r);
            spearman_acc.add(corr.spearman_rho);
        }
        const double reps = static_cast<double>(opt.seeds_per_size);
        rows.push_back({n, pearson_acc.value() / reps, spearman_acc.value() / reps,
                        family.size()});
    }
    return rows;
}

inline std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
    std::string out = "n,pearson,spearman,n_worlds\n";
    for (const auto& r : rows)
        out += std::to_string(r.n) + "," + fmt_double(r.pearson_r) + "," +
               fmt_double(r.spearman_rho) + "," + std::to_string(r.n_worlds) + "\n";
    return out;
}

}  // namespace remid::stats
