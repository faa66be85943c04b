#pragma once

// Shared numeric and string utilities used across the library.
// All log-probabilities and divergences in this project are natural-log (nats).

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace remid {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline bool is_neg_inf(double x) { return std::isinf(x) && x < 0; }

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Retryable transport-level failure (connection reset, timeout, 5xx).
struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-retryable wire failure (bad status, malformed body).
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Compensated summation (Neumaier). Accumulation of long score sums must not
// depend on magnitude ordering beyond fp noise; tests freeze exact values.
// ---------------------------------------------------------------------------

class KahanSum {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double kahan_total(const std::vector<double>& xs) {
    KahanSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

// ---------------------------------------------------------------------------
// Stable seeded hashing (FNV-1a 64-bit). Used for cache keys and hash-bucket
// discretization; must be identical across platforms and runs.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0) {
    std::uint64_t h = 1469598103934665603ull ^ (seed * 0x9e3779b97f4a7c15ull);
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

// splitmix64: derive independent RNG streams from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t s = seed ^ (0xd1b54a32d192ed03ull * (stream + 1));
    std::uint64_t x = splitmix64(s);
    return std::mt19937_64(x);
}

// ---------------------------------------------------------------------------
// Whitespace normalization: trim ends, collapse internal runs to one space.
// Uniqueness and text binning key off this form.
// ---------------------------------------------------------------------------

inline std::string normalize_ws(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_space = true;  // leading spaces dropped
    for (char c : text) {
        bool sp = (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v');
        if (sp) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out.push_back(' ');
            out.push_back(c);
            in_space = false;
        }
    }
    return out;
}

// Deterministic shortest-roundtrip double formatting for reports.
inline std::string fmt_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    double back = std::strtod(buf, nullptr);
    if (back == x) {
        for (int prec = 1; prec <= 16; ++prec) {
            char shorter[64];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, x);
            if (std::strtod(shorter, nullptr) == x) return shorter;
        }
    }
    return buf;
}

// Mean / population std over a span of rewards and similar short vectors.
inline double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    KahanSum s;
    for (double x : xs) s.add(x);
    return s.value() / static_cast<double>(xs.size());
}

inline double pop_std_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double m = mean_of(xs);
    KahanSum s;
    for (double x : xs) s.add((x - m) * (x - m));
    return std::sqrt(s.value() / static_cast<double>(xs.size()));
}

inline double sample_std_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double m = mean_of(xs);
    KahanSum s;
    for (double x : xs) s.add((x - m) * (x - m));
    return std::sqrt(s.value() / static_cast<double>(xs.size() - 1));
}

}  // namespace remid
