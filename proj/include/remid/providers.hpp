#pragma once

// Uniform contract for conditional log-probability scoring and response
// sampling. Backends: the exact synthetic-world oracle (used by every
// estimator test), an append-only file cache wrapper, and the remote
// completions client in remote.hpp. All log quantities are nats and sequence
// log-probability is the plain sum of token log-probabilities.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "remid/common.hpp"
#include "remid/dataset.hpp"
#include "remid/world.hpp"

namespace remid::prov {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Contexts and scored text
// ---------------------------------------------------------------------------

// Integer coordinates of a synthetic context; r < 0 means no reasoning id,
// in which case oracle densities marginalize the reasoning table out.
struct OracleRef {
    int u = 0, a = 0, d = 0, r = -1;
};

struct RenderedContext {
    std::string text;
    std::string provenance;
    std::optional<std::size_t> token_budget;
    std::optional<OracleRef> ids;
};

struct Target {
    std::string text;
    std::optional<int> id;
};

struct ScoredText {
    std::string text;
    double total_logprob = 0.0;
    std::vector<double> token_logprobs;
    std::size_t token_count = 0;
    std::optional<int> id;
};

inline ScoredText make_scored(std::string text, std::vector<double> token_logprobs,
                              std::optional<int> id = std::nullopt) {
    ScoredText s;
    s.text = std::move(text);
    s.token_logprobs = std::move(token_logprobs);
    s.token_count = s.token_logprobs.size();
    KahanSum total;
    bool neg_inf = false;
    for (double lp : s.token_logprobs) {
        if (lp > 0.0) throw ValidationError("token log-probability above zero: " + fmt_double(lp));
        if (is_neg_inf(lp)) neg_inf = true;
        total.add(lp);
    }
    s.total_logprob = neg_inf ? kNegInf : total.value();
    s.id = id;
    return s;
}

// ---------------------------------------------------------------------------
// Prompt rendering
// ---------------------------------------------------------------------------

enum class PromptTemplate { plain, with_reasoning };

struct Reasoning {
    std::string text;
    std::optional<int> id;
};

// Byte-deterministic; the golden response never appears in the context.
inline RenderedContext render_prompt(const data::Sample& sample,
                                     const std::optional<Reasoning>& reasoning,
                                     PromptTemplate tmpl) {
    if (tmpl == PromptTemplate::with_reasoning && (!reasoning || reasoning->text.empty()))
        throw ConfigError("with_reasoning template requires reasoning text (sample " +
                          sample.sample_id + ")");
    RenderedContext ctx;
    std::string out;
    out += "<User Persona>" + sample.user_persona + "</User Persona>\n\n";
    out += "<Agent Character>" + sample.agent_character.serialized() + "</Agent Character>\n\n";
    out += "<Dialogue Context>" + sample.dialogue_serialized() + "</Dialogue Context>";
    if (tmpl == PromptTemplate::with_reasoning) {
        out += "\n\n<Core Features of the Golden Response>" + reasoning->text +
               "</Core Features of the Golden Response>";
    }
    ctx.text = std::move(out);
    ctx.provenance = std::string(tmpl == PromptTemplate::plain ? "plain:" : "with_reasoning:") +
                     sample.sample_id;
    if (sample.ids) {
        OracleRef ref;
        ref.u = sample.ids->u;
        ref.a = sample.ids->a;
        ref.d = sample.ids->d;
        ref.r = (reasoning && reasoning->id) ? *reasoning->id : -1;
        ctx.ids = ref;
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Provider contract
// ---------------------------------------------------------------------------

class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string backend_id() const = 0;

    // Deterministic for fixed (context, target) within one backend session.
    virtual ScoredText score(const RenderedContext& ctx, const Target& target) = 0;

    // k draws at the given temperature. A seed makes the draw reproducible on
    // oracle and cache backends; remote backends ignore it.
    virtual std::vector<ScoredText> sample(const RenderedContext& ctx, std::size_t k,
                                           double temperature,
                                           std::optional<std::uint64_t> seed = std::nullopt) = 0;

    // Full conditional over the response space when the backend can enumerate
    // it (the oracle can; remote backends cannot).
    virtual std::optional<std::vector<double>> full_conditional(const RenderedContext&) {
        return std::nullopt;
    }
};

// ---------------------------------------------------------------------------
// Exact synthetic oracle
// ---------------------------------------------------------------------------

class OracleProvider final : public Provider {
public:
    OracleProvider(world::SyntheticWorld w, world::Table table, std::uint64_t seed = 0)
        : world_(std::move(w)), table_(table), rng_(make_rng(seed, 29)) {}

    std::string backend_id() const override {
        return "oracle:" + world_.name + ":" +
               (table_ == world::Table::gold ? "gold" : "model");
    }

    ScoredText score(const RenderedContext& ctx, const Target& target) override {
        const auto row = conditional_row(ctx);
        if (!target.id) throw ConfigError("oracle score requires a response id");
        int y = *target.id;
        if (y < 0 || y >= world_.ny)
            throw ConfigError("oracle response id out of range: " + std::to_string(y));
        double p = row[static_cast<size_t>(y)];
        double lp = p > 0.0 ? std::log(p) : kNegInf;
        return make_scored(target.text.empty() ? "y:" + std::to_string(y) : target.text, {lp}, y);
    }

    std::vector<ScoredText> sample(const RenderedContext& ctx, std::size_t k, double temperature,
                                   std::optional<std::uint64_t> seed) override {
        auto row = conditional_row(ctx);
        std::vector<double> draw_probs = row;
        if (temperature != 1.0) {
            if (temperature <= 0.0) throw ConfigError("temperature must be positive");
            KahanSum z;
            for (auto& p : draw_probs) {
                p = p > 0.0 ? std::pow(p, 1.0 / temperature) : 0.0;
                z.add(p);
            }
            for (auto& p : draw_probs) p /= z.value();
        }
        std::vector<ScoredText> out;
        out.reserve(k);
        auto draw = [&](std::mt19937_64& rng) {
            int y = world::sample_categorical(draw_probs, rng);
            double p = row[static_cast<size_t>(y)];
            // Reported log-probabilities are always the temperature-1 table's.
            out.push_back(make_scored("y:" + std::to_string(y),
                                      {p > 0.0 ? std::log(p) : kNegInf}, y));
        };
        if (seed) {
            auto rng = make_rng(*seed, 31);
            for (std::size_t i = 0; i < k; ++i) draw(rng);
        } else {
            std::lock_guard<std::mutex> lock(mu_);
            for (std::size_t i = 0; i < k; ++i) draw(rng_);
        }
        return out;
    }

    std::optional<std::vector<double>> full_conditional(const RenderedContext& ctx) override {
        return conditional_row(ctx);
    }

    const world::SyntheticWorld& world() const { return world_; }

private:
    std::vector<double> conditional_row(const RenderedContext& ctx) const {
        if (!ctx.ids) throw ConfigError("oracle provider requires synthetic context ids");
        const auto& ref = *ctx.ids;
        if (ref.u < 0 || ref.u >= world_.nu || ref.a < 0 || ref.a >= world_.na || ref.d < 0 ||
            ref.d >= world_.nd || ref.r >= world_.nr)
            throw ConfigError("oracle context id out of range (u=" + std::to_string(ref.u) +
                              " a=" + std::to_string(ref.a) + " d=" + std::to_string(ref.d) +
                              " r=" + std::to_string(ref.r) + ")");
        int x = world_.x_index(ref.u, ref.a, ref.d);
        return world_.cond_row(table_, x, ref.r);
    }

    world::SyntheticWorld world_;
    world::Table table_;
    std::mutex mu_;
    std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Reasoning generation
// ---------------------------------------------------------------------------

class Reasoner {
public:
    virtual ~Reasoner() = default;
    virtual Reasoning reason(const data::Sample& sample) = 0;
};

// Identity backend: empty reasoning. Scoring then conditions on the input
// alone, which recovers the plain (non-reasoning) metric variant.
class NullReasoner final : public Reasoner {
public:
    Reasoning reason(const data::Sample&) override { return Reasoning{"", std::nullopt}; }
};

// Draws a reasoning id from the world's reasoning table (or the argmax id
// when deterministic = true).
class WorldReasoner final : public Reasoner {
public:
    WorldReasoner(world::SyntheticWorld w, std::uint64_t seed, bool deterministic = false)
        : world_(std::move(w)), rng_(make_rng(seed, 37)), deterministic_(deterministic) {}

    Reasoning reason(const data::Sample& sample) override {
        if (!sample.ids) throw ConfigError("world reasoner requires synthetic ids");
        int x = world_.x_index(sample.ids->u, sample.ids->a, sample.ids->d);
        std::vector<double> row(world_.reasoning.begin() + static_cast<size_t>(x) * world_.nr,
                                world_.reasoning.begin() +
                                    (static_cast<size_t>(x) + 1) * world_.nr);
        int r;
        if (deterministic_) {
            r = 0;
            for (int i = 1; i < world_.nr; ++i)
                if (row[static_cast<size_t>(i)] > row[static_cast<size_t>(r)]) r = i;
        } else {
            std::lock_guard<std::mutex> lock(mu_);
            r = world::sample_categorical(row, rng_);
        }
        return Reasoning{"r:" + std::to_string(r), r};
    }

private:
    world::SyntheticWorld world_;
    std::mutex mu_;
    std::mt19937_64 rng_;
    bool deterministic_;
};

// Asks a sampling-capable backend for one reasoning text per call. The
// optional budget truncates the generated trace to that many whitespace
// words before it enters any scoring prompt (token boundaries belong to the
// endpoint, so the budget is approximate by design); default is unbounded.
class ProviderReasoner final : public Reasoner {
public:
    ProviderReasoner(std::shared_ptr<Provider> backend, double temperature = 1.0,
                     std::optional<std::size_t> word_budget = std::nullopt)
        : backend_(std::move(backend)), temperature_(temperature), word_budget_(word_budget) {}

    Reasoning reason(const data::Sample& sample) override {
        auto ctx = render_prompt(sample, std::nullopt, PromptTemplate::plain);
        auto out = backend_->sample(ctx, 1, temperature_);
        if (out.empty()) throw ProtocolError("reasoning backend returned no samples");
        std::string text = out.front().text;
        if (word_budget_) text = truncate_words(text, *word_budget_);
        return Reasoning{text, out.front().id};
    }

    static std::string truncate_words(const std::string& text, std::size_t budget) {
        std::size_t words = 0;
        bool in_word = false;
        for (std::size_t i = 0; i < text.size(); ++i) {
            bool sp = std::isspace(static_cast<unsigned char>(text[i])) != 0;
            if (!sp && !in_word) {
                if (++words > budget) {
                    std::size_t end = i;
                    while (end > 0 && std::isspace(static_cast<unsigned char>(text[end - 1])))
                        --end;
                    return text.substr(0, end);
                }
            }
            in_word = !sp;
        }
        return text;
    }

private:
    std::shared_ptr<Provider> backend_;
    double temperature_;
    std::optional<std::size_t> word_budget_;
};

// ---------------------------------------------------------------------------
// Append-only score cache
// ---------------------------------------------------------------------------

// One JSON record per line: {key, context_hash, target, total_logprob,
// token_logprobs, checksum}. Records with a bad checksum are skipped and
// counted, never trusted.
class CachingProvider final : public Provider {
public:
    CachingProvider(std::shared_ptr<Provider> inner, std::filesystem::path path)
        : inner_(std::move(inner)), path_(std::move(path)) {
        load();
    }

    std::string backend_id() const override { return inner_->backend_id(); }

    ScoredText score(const RenderedContext& ctx, const Target& target) override {
        const std::string key = score_key(ctx, target);
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = scores_.find(key);
            if (it != scores_.end()) {
                ++hits_;
                return it->second;
            }
        }
        ScoredText result = inner_->score(ctx, target);
        std::lock_guard<std::mutex> lock(mu_);
        if (scores_.emplace(key, result).second) append_score(key, ctx, result);
        return result;
    }

    std::vector<ScoredText> sample(const RenderedContext& ctx, std::size_t k, double temperature,
                                   std::optional<std::uint64_t> seed) override {
        const std::string key = sample_key(ctx, k, temperature, seed);
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = samples_.find(key);
            if (it != samples_.end()) {
                ++hits_;
                return it->second;
            }
        }
        auto result = inner_->sample(ctx, k, temperature, seed);
        std::lock_guard<std::mutex> lock(mu_);
        if (samples_.emplace(key, result).second) append_samples(key, ctx, result);
        return result;
    }

    std::optional<std::vector<double>> full_conditional(const RenderedContext& ctx) override {
        return inner_->full_conditional(ctx);
    }

    std::size_t hits() const { return hits_; }
    std::size_t corrupt_records() const { return corrupt_; }

private:
    static std::string target_token(const Target& t) {
        return t.id ? ("#" + std::to_string(*t.id)) : t.text;
    }

    std::string score_key(const RenderedContext& ctx, const Target& t) const {
        return hash_hex(fnv1a64(inner_->backend_id() + "\x1f" + ctx.text + "\x1f" +
                                (ctx.ids ? ref_token(*ctx.ids) : std::string()) + "\x1f" +
                                target_token(t) + "\x1fscore"));
    }

    std::string sample_key(const RenderedContext& ctx, std::size_t k, double temperature,
                           std::optional<std::uint64_t> seed) const {
        return hash_hex(fnv1a64(inner_->backend_id() + "\x1f" + ctx.text + "\x1f" +
                                (ctx.ids ? ref_token(*ctx.ids) : std::string()) + "\x1fsample\x1f" +
                                std::to_string(k) + "\x1f" + fmt_double(temperature) + "\x1f" +
                                (seed ? std::to_string(*seed) : "unseeded")));
    }

    static std::string ref_token(const OracleRef& r) {
        return std::to_string(r.u) + "," + std::to_string(r.a) + "," + std::to_string(r.d) + "," +
               std::to_string(r.r);
    }

    static json scored_to_json(const ScoredText& s) {
        json j;
        j["text"] = s.text;
        j["total_logprob"] = is_neg_inf(s.total_logprob) ? json("-inf") : json(s.total_logprob);
        json lps = json::array();
        for (double lp : s.token_logprobs) lps.push_back(is_neg_inf(lp) ? json("-inf") : json(lp));
        j["token_logprobs"] = std::move(lps);
        if (s.id) j["id"] = *s.id;
        return j;
    }

    static ScoredText scored_from_json(const json& j) {
        std::vector<double> lps;
        for (const auto& v : j.at("token_logprobs"))
            lps.push_back(v.is_string() ? kNegInf : v.get<double>());
        std::optional<int> id;
        if (j.contains("id")) id = j.at("id").get<int>();
        return make_scored(j.at("text").get<std::string>(), std::move(lps), id);
    }

    static std::string record_checksum(const json& payload) {
        return hash_hex(fnv1a64(payload.dump()));
    }

    void append_score(const std::string& key, const RenderedContext& ctx, const ScoredText& s) {
        json payload;
        payload["key"] = key;
        payload["kind"] = "score";
        payload["context_hash"] = hash_hex(fnv1a64(ctx.text));
        payload["target"] = scored_to_json(s);
        write_record(payload);
    }

    void append_samples(const std::string& key, const RenderedContext& ctx,
                        const std::vector<ScoredText>& ss) {
        json payload;
        payload["key"] = key;
        payload["kind"] = "sample";
        payload["context_hash"] = hash_hex(fnv1a64(ctx.text));
        json arr = json::array();
        for (const auto& s : ss) arr.push_back(scored_to_json(s));
        payload["samples"] = std::move(arr);
        write_record(payload);
    }

    void write_record(json payload) {
        const std::string checksum = record_checksum(payload);
        payload["checksum"] = checksum;
        std::ofstream out(path_, std::ios::app);
        if (!out) throw ConfigError("cache path not writable: " + path_.string());
        out << payload.dump() << "\n";
    }

    void load() {
        std::ifstream in(path_);
        if (!in) return;  // no cache yet
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line, nullptr, false);
            if (rec.is_discarded() || !rec.is_object() || !rec.contains("checksum")) {
                ++corrupt_;
                continue;
            }
            std::string checksum = rec["checksum"].get<std::string>();
            rec.erase("checksum");
            if (record_checksum(rec) != checksum) {
                ++corrupt_;
                continue;
            }
            try {
                const std::string key = rec.at("key").get<std::string>();
                const std::string kind = rec.at("kind").get<std::string>();
                if (kind == "score") {
                    scores_[key] = scored_from_json(rec.at("target"));
                } else if (kind == "sample") {
                    std::vector<ScoredText> ss;
                    for (const auto& sj : rec.at("samples")) ss.push_back(scored_from_json(sj));
                    samples_[key] = std::move(ss);
                } else {
                    ++corrupt_;
                }
            } catch (const std::exception&) {
                ++corrupt_;
            }
        }
    }

    std::shared_ptr<Provider> inner_;
    std::filesystem::path path_;
    std::mutex mu_;
    std::map<std::string, ScoredText> scores_;
    std::map<std::string, std::vector<ScoredText>> samples_;
    std::size_t hits_ = 0;
    std::size_t corrupt_ = 0;
};

}  // namespace remid::prov
