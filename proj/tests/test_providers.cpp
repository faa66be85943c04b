#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "remid/providers.hpp"
#include "remid/worlds.hpp"

using namespace remid;
using namespace remid::prov;

static data::Sample synth_sample(int u, int a, int d, int y) {
    data::SyntheticIds ids{u, a, d, -1, y};
    return data::detail::synth_sample_from_ids(ids, "S");
}

TEST_CASE("render_prompt emits the three tag-delimited blocks in order") {
    data::Sample s;
    s.sample_id = "S1";
    s.user_persona = "persona text";
    s.agent_character.character_name = "Name";
    s.dialogue_context = {{data::Role::user, "hi"},
                          {data::Role::agent, "hello"},
                          {data::Role::user, "how are you?"}};
    s.agent_golden_response = "SECRET GOLDEN";

    auto ctx = render_prompt(s, std::nullopt, PromptTemplate::plain);
    auto p1 = ctx.text.find("<User Persona>persona text</User Persona>");
    auto p2 = ctx.text.find("<Agent Character>");
    auto p3 = ctx.text.find("<Dialogue Context>");
    REQUIRE(p1 != std::string::npos);
    REQUIRE(p2 != std::string::npos);
    REQUIRE(p3 != std::string::npos);
    CHECK(p1 < p2);
    CHECK(p2 < p3);
    CHECK(ctx.text.find("user: hi") != std::string::npos);
    CHECK(ctx.text.find("agent: hello") != std::string::npos);
    CHECK(ctx.text.find("SECRET GOLDEN") == std::string::npos);

    auto again = render_prompt(s, std::nullopt, PromptTemplate::plain);
    CHECK(again.text == ctx.text);  // byte-deterministic

    auto with_r = render_prompt(s, Reasoning{"RRR", std::nullopt},
                                PromptTemplate::with_reasoning);
    auto pr = with_r.text.find("<Core Features of the Golden Response>RRR");
    REQUIRE(pr != std::string::npos);
    CHECK(pr > p3);

    CHECK_THROWS_AS(render_prompt(s, std::nullopt, PromptTemplate::with_reasoning), ConfigError);
}

TEST_CASE("oracle score reads the table entry back in nats") {
    auto w = worlds::two_by_two();  // gold: p(y=u|u) = 0.9
    OracleProvider oracle(w, world::Table::gold);
    auto s = synth_sample(0, 0, 0, 0);
    auto ctx = render_prompt(s, std::nullopt, PromptTemplate::plain);

    auto hit = oracle.score(ctx, Target{"", 0});
    CHECK(hit.total_logprob == doctest::Approx(std::log(0.9)).epsilon(1e-15));
    CHECK(hit.token_count == 1);

    auto miss = oracle.score(ctx, Target{"", 1});
    CHECK(miss.total_logprob == doctest::Approx(std::log(0.1)).epsilon(1e-15));

    // entry 0.25 -> ln 0.25; deterministic row -> 0; zero row -> -inf
    auto quarter = worlds::two_by_two(0.75);
    OracleProvider model(quarter, world::Table::model);
    CHECK(model.score(ctx, Target{"", 1}).total_logprob ==
          doctest::Approx(std::log(0.25)).epsilon(1e-15));

    auto bij = worlds::bijection_world();
    OracleProvider det(bij, world::Table::gold);
    auto dctx = render_prompt(synth_sample(2, 0, 0, 2), std::nullopt, PromptTemplate::plain);
    CHECK(det.score(dctx, Target{"", 2}).total_logprob == 0.0);
    CHECK(is_neg_inf(det.score(dctx, Target{"", 3}).total_logprob));

    CHECK_THROWS_AS(oracle.score(ctx, Target{"", 7}), ConfigError);
}

TEST_CASE("oracle scores exponentiate back to the table and rows normalize") {
    auto w = worlds::random_world(5);
    OracleProvider oracle(w, world::Table::gold);
    for (int u = 0; u < w.nu; ++u) {
        auto ctx = render_prompt(synth_sample(u, 0, 0, 0), std::nullopt, PromptTemplate::plain);
        int x = w.x_index(u, 0, 0);
        KahanSum total;
        for (int y = 0; y < w.ny; ++y) {
            double lp = oracle.score(ctx, Target{"", y}).total_logprob;
            double expected = 0.0;
            for (int r = 0; r < w.nr; ++r)
                expected += w.p_r(x, r) * w.cond(world::Table::gold, x, r, y);
            CHECK(std::abs(std::exp(lp) - expected) < 1e-12);
            total.add(std::exp(lp));
        }
        CHECK(std::abs(total.value() - 1.0) < 1e-9);
    }
}

TEST_CASE("seeded oracle sampling matches row frequencies within 0.01") {
    world::SyntheticWorld w;
    w.name = "freq";
    w.nu = 1;
    w.na = 1;
    w.nd = 1;
    w.nr = 1;
    w.ny = 3;
    w.p_u = w.q_u = {1.0};
    w.p_a = w.q_a = {1.0};
    w.p_d = w.q_d = {1.0};
    w.reasoning = {1.0};
    w.gold = {0.7, 0.2, 0.1};
    w.model = w.gold;
    world::validate_world(w);

    OracleProvider oracle(w, world::Table::gold);
    auto ctx = render_prompt(synth_sample(0, 0, 0, 0), std::nullopt, PromptTemplate::plain);
    auto draws = oracle.sample(ctx, 100000, 1.0, 42);
    std::vector<std::size_t> counts(3, 0);
    for (const auto& d : draws) counts[static_cast<std::size_t>(*d.id)]++;
    CHECK(std::abs(counts[0] / 1e5 - 0.7) < 0.01);
    CHECK(std::abs(counts[1] / 1e5 - 0.2) < 0.01);
    CHECK(std::abs(counts[2] / 1e5 - 0.1) < 0.01);

    auto again = oracle.sample(ctx, 100, 1.0, 42);
    auto first = oracle.sample(ctx, 100, 1.0, 42);
    for (std::size_t i = 0; i < 100; ++i) CHECK(again[i].id == first[i].id);
}

TEST_CASE("cache: two identical score calls issue exactly one inner request") {
    struct CountingProvider final : Provider {
        std::size_t calls = 0;
        std::string backend_id() const override { return "counting"; }
        ScoredText score(const RenderedContext&, const Target& t) override {
            ++calls;
            return make_scored(t.text.empty() ? "t" : t.text, {-0.5, -0.25});
        }
        std::vector<ScoredText> sample(const RenderedContext&, std::size_t k, double,
                                       std::optional<std::uint64_t>) override {
            ++calls;
            return std::vector<ScoredText>(k, make_scored("s", {-1.0}));
        }
    };

    auto path = std::filesystem::temp_directory_path() / "remid_cache_test.jsonl";
    std::filesystem::remove(path);
    auto inner = std::make_shared<CountingProvider>();
    CachingProvider cache(inner, path);

    RenderedContext ctx;
    ctx.text = "some context";
    Target tgt{"target text", std::nullopt};
    auto a = cache.score(ctx, tgt);
    auto b = cache.score(ctx, tgt);
    CHECK(inner->calls == 1);
    CHECK(a.total_logprob == b.total_logprob);
    CHECK(cache.hits() == 1);

    auto s1 = cache.sample(ctx, 3, 1.0, 9);
    auto s2 = cache.sample(ctx, 3, 1.0, 9);
    CHECK(inner->calls == 2);
    CHECK(s1.size() == s2.size());

    // a fresh cache over the same file replays without touching the inner
    auto inner2 = std::make_shared<CountingProvider>();
    CachingProvider replay(inner2, path);
    auto c = replay.score(ctx, tgt);
    CHECK(inner2->calls == 0);
    CHECK(c.total_logprob == doctest::Approx(a.total_logprob));
    CHECK(c.token_logprobs.size() == 2);
    std::filesystem::remove(path);
}

TEST_CASE("cache: corrupt records are skipped and counted") {
    struct OneProvider final : Provider {
        std::string backend_id() const override { return "one"; }
        ScoredText score(const RenderedContext&, const Target&) override {
            return make_scored("x", {-1.0});
        }
        std::vector<ScoredText> sample(const RenderedContext&, std::size_t, double,
                                       std::optional<std::uint64_t>) override {
            return {make_scored("x", {-1.0})};
        }
    };
    auto path = std::filesystem::temp_directory_path() / "remid_cache_corrupt.jsonl";
    {
        std::ofstream out(path);
        out << "{\"key\":\"k\",\"kind\":\"score\",\"checksum\":\"deadbeefdeadbeef\","
               "\"target\":{\"text\":\"x\",\"total_logprob\":-1.0,\"token_logprobs\":[-1.0]}}\n";
        out << "not json at all\n";
    }
    CachingProvider cache(std::make_shared<OneProvider>(), path);
    CHECK(cache.corrupt_records() == 2);
    std::filesystem::remove(path);
}

TEST_CASE("world reasoner draws ids from the reasoning table") {
    auto w = worlds::user_shift_world(0.5);  // one-hot reasoning rows
    WorldReasoner reasoner(w, 3);
    auto s = synth_sample(1, 1, 0, 0);
    auto r = reasoner.reason(s);
    REQUIRE(r.id.has_value());
    int x = w.x_index(1, 1, 0);
    CHECK(w.p_r(x, *r.id) == 1.0);
    CHECK(r.text == "r:" + std::to_string(*r.id));
}

TEST_CASE("null reasoner yields the plain variant") {
    NullReasoner null;
    auto r = null.reason(synth_sample(0, 0, 0, 0));
    CHECK(r.text.empty());
    CHECK_FALSE(r.id.has_value());
}

TEST_CASE("provider reasoner truncates to the word budget when one is set") {
    struct TalkyProvider final : Provider {
        std::string backend_id() const override { return "talky"; }
        ScoredText score(const RenderedContext&, const Target&) override {
            return make_scored("x", {-1.0});
        }
        std::vector<ScoredText> sample(const RenderedContext&, std::size_t, double,
                                       std::optional<std::uint64_t>) override {
            return {make_scored("alpha beta  gamma delta", {-1.0})};
        }
    };
    auto backend = std::make_shared<TalkyProvider>();
    ProviderReasoner unbounded(backend);
    CHECK(unbounded.reason(synth_sample(0, 0, 0, 0)).text == "alpha beta  gamma delta");
    ProviderReasoner budgeted(backend, 1.0, 2);
    CHECK(budgeted.reason(synth_sample(0, 0, 0, 0)).text == "alpha beta");
    CHECK(ProviderReasoner::truncate_words("one two three", 5) == "one two three");
}

TEST_CASE("synthetic corpora validate ids against a declared world") {
    auto w = worlds::two_by_two();
    nlohmann::json root;
    root["world"] = world::to_json(w);
    root["splits"] = nlohmann::json::array();
    nlohmann::json split;
    split["name"] = "s";
    split["kind"] = "id_train";
    split["samples"] = nlohmann::json::array({{{"u", 0}, {"a", 0}, {"d", 0}, {"y", 1}}});
    root["splits"].push_back(split);
    CHECK_NOTHROW(data::parse_corpus(root, data::CorpusSchema::synthetic, "ok"));

    root["splits"][0]["samples"][0]["y"] = 9;  // outside |Y| = 2
    CHECK_THROWS_AS(data::parse_corpus(root, data::CorpusSchema::synthetic, "bad"),
                    ValidationError);
}
