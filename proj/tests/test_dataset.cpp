#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "remid/dataset.hpp"

using namespace remid;
using namespace remid::data;

static std::filesystem::path fixture(const char* name) {
    return std::filesystem::path(REMID_FIXTURES_DIR) / name;
}

TEST_CASE("bundled fixture loads with one split of six samples") {
    auto corpus = load_corpus(fixture("rpgbench_fixture.json"), CorpusSchema::rpgbench_json);
    REQUIRE(corpus.splits.size() == 1);
    CHECK(corpus.splits[0].samples.size() == 6);
    CHECK(corpus.splits[0].samples[0].sample_id == "FIX-001");
    CHECK(corpus.splits[0].samples[1].dialogue_context.size() == 3);
    CHECK(corpus.splits[0].samples[1].dialogue_context[0].role == Role::user);
    CHECK(corpus.splits[0].samples[1].dialogue_context[1].role == Role::agent);
}

TEST_CASE("empty sample list loads as an empty corpus") {
    auto corpus = parse_corpus(nlohmann::json::array(), CorpusSchema::rpgbench_json, "empty");
    REQUIRE(corpus.splits.size() == 1);
    CHECK(corpus.splits[0].samples.empty());
    auto stats = corpus_stats(corpus.splits[0]);
    CHECK(stats.total_samples == 0);
    CHECK(stats.unique_user_personas == 0);
    CHECK(stats.unique_agent_characters == 0);
    CHECK(stats.turn_count_histogram.empty());
}

TEST_CASE("dialogue starting with an agent turn is rejected, naming the sample") {
    nlohmann::json rec = {
        {"sample_ID", "BAD-1"},
        {"user_persona", "p"},
        {"agent_character",
         {{"character_name", "N"},
          {"character_domain", ""},
          {"character_source", ""},
          {"basic_character_information", ""},
          {"character_background", ""},
          {"character_personality", ""}}},
        {"dialogue_context", nlohmann::json::array({{{"agent_response", "hello"}},
                                                    {{"user_query", "hi"}}})},
        {"agent_golden_response", "ok"}};
    try {
        parse_corpus(nlohmann::json::array({rec}), CorpusSchema::rpgbench_json, "t");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("BAD-1") != std::string::npos);
        CHECK(std::string(e.what()).find("user turn") != std::string::npos);
    }
}

TEST_CASE("dialogue ending with an agent turn is rejected rather than truncated") {
    nlohmann::json rec = {
        {"sample_ID", "BAD-2"},
        {"user_persona", "p"},
        {"agent_character",
         {{"character_name", "N"},
          {"character_domain", ""},
          {"character_source", ""},
          {"basic_character_information", ""},
          {"character_background", ""},
          {"character_personality", ""}}},
        {"dialogue_context", nlohmann::json::array({{{"user_query", "hi"}},
                                                    {{"agent_response", "hello"}}})},
        {"agent_golden_response", "ok"}};
    CHECK_THROWS_AS(parse_corpus(nlohmann::json::array({rec}), CorpusSchema::rpgbench_json, "t"),
                    ValidationError);
}

TEST_CASE("duplicate sample ids are rejected corpus-wide") {
    auto corpus = load_corpus(fixture("rpgbench_fixture.json"), CorpusSchema::rpgbench_json);
    auto j = to_json(corpus);
    j["splits"].push_back(j["splits"][0]);
    j["splits"][1]["name"] = "again";
    CHECK_THROWS_AS(parse_corpus(j, CorpusSchema::rpgbench_json, "dup"), ValidationError);
}

TEST_CASE("malformed record reports its index") {
    nlohmann::json root = nlohmann::json::array({{{"sample_ID", 42}}});
    try {
        parse_corpus(root, CorpusSchema::rpgbench_json, "t");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("record 0") != std::string::npos);
    }
}

TEST_CASE("fixture stats: 6 samples, 3 personas, 2 characters") {
    auto corpus = load_corpus(fixture("rpgbench_fixture.json"), CorpusSchema::rpgbench_json);
    auto stats = corpus_stats(corpus.splits[0]);
    CHECK(stats.total_samples == 6);
    CHECK(stats.unique_user_personas == 3);     // whitespace-normalized match
    CHECK(stats.unique_agent_characters == 2);  // full serialized sheet
    CHECK(stats.turn_count_histogram.at(1) == 2);
    CHECK(stats.turn_count_histogram.at(3) == 3);
    CHECK(stats.turn_count_histogram.at(5) == 1);
}

TEST_CASE("stats are invariant under sample reordering") {
    auto corpus = load_corpus(fixture("rpgbench_fixture.json"), CorpusSchema::rpgbench_json);
    auto split = corpus.splits[0];
    auto before = corpus_stats(split);
    std::reverse(split.samples.begin(), split.samples.end());
    auto after = corpus_stats(split);
    CHECK(before.total_samples == after.total_samples);
    CHECK(before.unique_user_personas == after.unique_user_personas);
    CHECK(before.unique_agent_characters == after.unique_agent_characters);
    CHECK(before.turn_count_histogram == after.turn_count_histogram);
}

TEST_CASE("serialize/parse round-trips to a structurally equal corpus") {
    auto corpus = load_corpus(fixture("rpgbench_fixture.json"), CorpusSchema::rpgbench_json);
    auto j = to_json(corpus);
    auto again = parse_corpus(j, CorpusSchema::rpgbench_json, "rt");
    REQUIRE(again.splits.size() == corpus.splits.size());
    CHECK(to_json(again) == j);
}

TEST_CASE("synthetic schema round-trips and carries ids") {
    nlohmann::json root;
    root["splits"] = nlohmann::json::array();
    nlohmann::json split;
    split["name"] = "synth";
    split["kind"] = "id_train";
    split["samples"] = nlohmann::json::array(
        {{{"u", 0}, {"a", 1}, {"d", 0}, {"r", 1}, {"y", 3}},
         {{"u", 1}, {"a", 0}, {"d", 1}, {"y", 2}}});
    root["splits"].push_back(split);
    auto corpus = parse_corpus(root, CorpusSchema::synthetic, "synth");
    REQUIRE(corpus.splits[0].samples.size() == 2);
    const auto& s0 = corpus.splits[0].samples[0];
    REQUIRE(s0.ids.has_value());
    CHECK(s0.ids->u == 0);
    CHECK(s0.ids->r == 1);
    CHECK(s0.ids->y == 3);
    CHECK(s0.user_persona == "u:0");
    CHECK(corpus.splits[0].samples[1].ids->r == -1);
    auto j = to_json(corpus);
    auto again = parse_corpus(j, CorpusSchema::synthetic, "rt");
    CHECK(to_json(again) == j);
}

TEST_CASE("partition_by_shift separates id and ood samples deterministically") {
    auto corpus = load_corpus(fixture("rpgbench_fixture.json"), CorpusSchema::rpgbench_json);
    Split ood;
    ood.name = "user-ood";
    ood.kind = SplitKind::user_shift;
    ood.subset = "german";
    ood.samples = {corpus.splits[0].samples[1]};
    ood.samples[0].sample_id = "OOD-1";
    corpus.splits.push_back(ood);

    auto part = partition_by_shift(corpus, {SplitKind::user_shift, std::nullopt});
    CHECK(part.id_samples.size() == 6);
    CHECK(part.ood_samples.size() == 1);
    CHECK(part.ood_samples[0].sample_id == "OOD-1");

    CHECK_THROWS_AS(partition_by_shift(corpus, {SplitKind::character_shift, std::nullopt}),
                    ValidationError);
    CHECK_THROWS_AS(partition_by_shift(corpus, {SplitKind::user_shift, std::string("korean")}),
                    ValidationError);
}
