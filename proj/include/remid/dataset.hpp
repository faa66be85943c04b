#pragma once

// Typed in-memory model for role-play corpora: samples carry a user persona,
// an agent character sheet, an alternating dialogue context, and the golden
// agent response. Two on-disk schemas are supported: the text benchmark
// layout (one JSON object per sample) and a synthetic layout whose records
// are integer ids into a finite world.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "remid/common.hpp"

namespace remid::data {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct AgentCharacter {
    std::string character_name;
    std::string character_domain;
    std::string character_source;
    std::string basic_character_information;
    std::string character_background;
    std::string character_personality;

    // One deterministic text rendering, used for uniqueness and binning.
    std::string serialized() const {
        return character_name + "\n" + character_domain + "\n" + character_source + "\n" +
               basic_character_information + "\n" + character_background + "\n" +
               character_personality;
    }
};

enum class Role { user, agent };

struct DialogueTurn {
    Role role;
    std::string text;
};

// Integer coordinates for samples drawn from a SyntheticWorld. r < 0 means
// the record carries no reasoning id.
struct SyntheticIds {
    int u = 0;
    int a = 0;
    int d = 0;
    int r = -1;
    int y = 0;
};

struct Sample {
    std::string sample_id;
    std::string user_persona;
    AgentCharacter agent_character;
    std::vector<DialogueTurn> dialogue_context;
    std::string agent_golden_response;
    std::optional<std::string> subset_tag;
    std::optional<SyntheticIds> ids;

    std::string dialogue_serialized() const {
        std::string out;
        for (const auto& t : dialogue_context) {
            out += (t.role == Role::user ? "user: " : "agent: ");
            out += t.text;
            out += "\n";
        }
        return out;
    }
};

enum class SplitKind { id_train, id_test, user_shift, character_shift, dialogue_shift };

inline std::string to_string(SplitKind k) {
    switch (k) {
        case SplitKind::id_train: return "id_train";
        case SplitKind::id_test: return "id_test";
        case SplitKind::user_shift: return "user_shift";
        case SplitKind::character_shift: return "character_shift";
        case SplitKind::dialogue_shift: return "dialogue_shift";
    }
    return "id_train";
}

inline SplitKind split_kind_from_string(const std::string& s) {
    if (s == "id_train") return SplitKind::id_train;
    if (s == "id_test") return SplitKind::id_test;
    if (s == "user_shift") return SplitKind::user_shift;
    if (s == "character_shift") return SplitKind::character_shift;
    if (s == "dialogue_shift") return SplitKind::dialogue_shift;
    throw ParseError("unknown split kind: " + s);
}

struct Split {
    std::string name;
    SplitKind kind = SplitKind::id_train;
    std::optional<std::string> subset;
    std::vector<Sample> samples;
};

struct Corpus {
    std::vector<Split> splits;
    // Raw world block for synthetic corpora; decoded by the providers layer.
    std::optional<json> world;
};

struct CorpusStats {
    std::size_t total_samples = 0;
    std::size_t unique_user_personas = 0;
    std::size_t unique_agent_characters = 0;
    std::map<std::size_t, std::size_t> turn_count_histogram;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline void validate_sample(const Sample& s) {
    if (s.sample_id.empty()) throw ValidationError("sample has empty sample_ID");
    if (s.agent_character.character_name.empty())
        throw ValidationError("sample " + s.sample_id + ": character_name is empty");
    if (s.dialogue_context.empty())
        throw ValidationError("sample " + s.sample_id + ": dialogue_context is empty");
    if (s.dialogue_context.front().role != Role::user)
        throw ValidationError("sample " + s.sample_id + ": dialogue must start with a user turn");
    if (s.dialogue_context.back().role != Role::user)
        throw ValidationError("sample " + s.sample_id +
                              ": dialogue must end with a user turn (golden response answers it)");
    for (std::size_t i = 0; i < s.dialogue_context.size(); ++i) {
        const auto& t = s.dialogue_context[i];
        if (t.text.empty())
            throw ValidationError("sample " + s.sample_id + ": turn " + std::to_string(i) +
                                  " has empty text");
        if (i > 0 && t.role == s.dialogue_context[i - 1].role)
            throw ValidationError("sample " + s.sample_id + ": roles do not alternate at turn " +
                                  std::to_string(i));
    }
    if (s.agent_golden_response.empty())
        throw ValidationError("sample " + s.sample_id + ": agent_golden_response is empty");
}

inline void validate_corpus(const Corpus& c) {
    std::set<std::string> seen;
    for (const auto& split : c.splits) {
        for (const auto& s : split.samples) {
            validate_sample(s);
            if (!seen.insert(s.sample_id).second)
                throw ValidationError("duplicate sample_ID: " + s.sample_id);
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

enum class CorpusSchema { rpgbench_json, synthetic };

namespace detail {

inline std::string require_string(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
        throw ParseError(where + ": missing or non-string field '" + key + "'");
    return it->get<std::string>();
}

inline AgentCharacter parse_character(const json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where + ": agent_character is not an object");
    AgentCharacter c;
    c.character_name = require_string(j, "character_name", where);
    c.character_domain = require_string(j, "character_domain", where);
    c.character_source = require_string(j, "character_source", where);
    c.basic_character_information = require_string(j, "basic_character_information", where);
    c.character_background = require_string(j, "character_background", where);
    c.character_personality = require_string(j, "character_personality", where);
    return c;
}

inline Sample parse_rpgbench_sample(const json& j, std::size_t record_index) {
    std::string where = "record " + std::to_string(record_index);
    if (!j.is_object()) throw ParseError(where + ": sample is not an object");
    Sample s;
    s.sample_id = require_string(j, "sample_ID", where);
    where += " (" + s.sample_id + ")";
    s.user_persona = require_string(j, "user_persona", where);
    auto itc = j.find("agent_character");
    if (itc == j.end()) throw ParseError(where + ": missing agent_character");
    s.agent_character = parse_character(*itc, where);
    auto itd = j.find("dialogue_context");
    if (itd == j.end() || !itd->is_array())
        throw ParseError(where + ": missing or non-array dialogue_context");
    for (const auto& turn : *itd) {
        if (!turn.is_object() || turn.size() != 1)
            throw ParseError(where + ": dialogue turn must be a single-key object");
        const auto& item = turn.items().begin();
        const std::string key = item.key();
        if (!item.value().is_string())
            throw ParseError(where + ": dialogue turn value must be a string");
        DialogueTurn t;
        if (key == "user_query")
            t.role = Role::user;
        else if (key == "agent_response")
            t.role = Role::agent;
        else
            throw ParseError(where + ": unknown dialogue turn key '" + key + "'");
        t.text = item.value().get<std::string>();
        s.dialogue_context.push_back(std::move(t));
    }
    s.agent_golden_response = require_string(j, "agent_golden_response", where);
    if (auto it = j.find("subset_tag"); it != j.end() && it->is_string())
        s.subset_tag = it->get<std::string>();
    return s;
}

// Synthetic records are rendered into the same Sample shape so that every
// downstream operation (stats, severity, prompts) works uniformly on text.
inline Sample synth_sample_from_ids(const SyntheticIds& ids, const std::string& sample_id) {
    Sample s;
    s.sample_id = sample_id;
    s.ids = ids;
    s.user_persona = "u:" + std::to_string(ids.u);
    s.agent_character.character_name = "a:" + std::to_string(ids.a);
    s.agent_character.character_domain = "synthetic";
    s.agent_character.character_source = "synthetic";
    s.dialogue_context.push_back({Role::user, "d:" + std::to_string(ids.d)});
    s.agent_golden_response = "y:" + std::to_string(ids.y);
    return s;
}

inline Sample parse_synthetic_sample(const json& j, std::size_t record_index,
                                     const std::string& split_name) {
    std::string where = "record " + std::to_string(record_index);
    if (!j.is_object()) throw ParseError(where + ": sample is not an object");
    SyntheticIds ids;
    auto geti = [&](const char* key, bool required, int fallback) {
        auto it = j.find(key);
        if (it == j.end()) {
            if (required) throw ParseError(where + ": missing integer field '" + std::string(key) + "'");
            return fallback;
        }
        if (!it->is_number_integer()) throw ParseError(where + ": field '" + std::string(key) + "' is not an integer");
        return it->get<int>();
    };
    ids.u = geti("u", true, 0);
    ids.a = geti("a", true, 0);
    ids.d = geti("d", true, 0);
    ids.r = geti("r", false, -1);
    ids.y = geti("y", true, 0);
    std::string sid = split_name + "-" + std::to_string(record_index);
    if (auto it = j.find("sample_ID"); it != j.end() && it->is_string())
        sid = it->get<std::string>();
    return synth_sample_from_ids(ids, sid);
}

inline Split parse_split(const json& j, CorpusSchema schema, std::size_t split_index) {
    if (!j.is_object()) throw ParseError("split " + std::to_string(split_index) + " is not an object");
    Split split;
    split.name = require_string(j, "name", "split " + std::to_string(split_index));
    split.kind = split_kind_from_string(
        require_string(j, "kind", "split " + std::to_string(split_index)));
    if (auto it = j.find("subset"); it != j.end() && it->is_string())
        split.subset = it->get<std::string>();
    auto its = j.find("samples");
    if (its == j.end() || !its->is_array())
        throw ParseError("split '" + split.name + "': missing or non-array samples");
    std::size_t idx = 0;
    for (const auto& rec : *its) {
        split.samples.push_back(schema == CorpusSchema::rpgbench_json
                                    ? parse_rpgbench_sample(rec, idx)
                                    : parse_synthetic_sample(rec, idx, split.name));
        ++idx;
    }
    return split;
}

}  // namespace detail

inline Corpus parse_corpus(const json& root, CorpusSchema schema,
                           const std::string& default_name) {
    Corpus corpus;
    if (root.is_array()) {
        Split split;
        split.name = default_name;
        split.kind = SplitKind::id_train;
        std::size_t idx = 0;
        for (const auto& rec : root) {
            split.samples.push_back(schema == CorpusSchema::rpgbench_json
                                        ? detail::parse_rpgbench_sample(rec, idx)
                                        : detail::parse_synthetic_sample(rec, idx, split.name));
            ++idx;
        }
        corpus.splits.push_back(std::move(split));
    } else if (root.is_object()) {
        if (auto it = root.find("world"); it != root.end()) corpus.world = *it;
        auto its = root.find("splits");
        if (its == root.end() || !its->is_array())
            throw ParseError("corpus object must contain a 'splits' array");
        std::size_t idx = 0;
        for (const auto& js : *its) corpus.splits.push_back(detail::parse_split(js, schema, idx++));
    } else {
        throw ParseError("corpus root must be a JSON array or object");
    }
    validate_corpus(corpus);
    if (schema == CorpusSchema::synthetic && corpus.world) {
        // ids must reference the declared world
        auto geti = [&](const char* key) {
            auto it = corpus.world->find("sizes");
            if (it == corpus.world->end() || !it->contains(key)) return -1;
            return (*it)[key].get<int>();
        };
        int nu = geti("u"), na = geti("a"), nd = geti("d"), nr = geti("r"), ny = geti("y");
        if (nu > 0) {
            for (const auto& split : corpus.splits) {
                for (const auto& s : split.samples) {
                    if (!s.ids) continue;
                    if (s.ids->u >= nu || s.ids->a >= na || s.ids->d >= nd || s.ids->y >= ny ||
                        s.ids->r >= nr || s.ids->u < 0 || s.ids->a < 0 || s.ids->d < 0 ||
                        s.ids->y < 0)
                        throw ValidationError("sample " + s.sample_id +
                                              ": id out of range for the declared world");
                }
            }
        }
    }
    return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& path, CorpusSchema schema) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open corpus file: " + path.string());
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw ParseError("malformed JSON in " + path.string() + ": " + e.what());
    }
    return parse_corpus(root, schema, path.stem().string());
}

// ---------------------------------------------------------------------------
// Serialization (inverse of parsing; round-trips structurally)
// ---------------------------------------------------------------------------

inline json to_json(const Sample& s) {
    if (s.ids) {
        json j;
        j["sample_ID"] = s.sample_id;
        j["u"] = s.ids->u;
        j["a"] = s.ids->a;
        j["d"] = s.ids->d;
        if (s.ids->r >= 0) j["r"] = s.ids->r;
        j["y"] = s.ids->y;
        return j;
    }
    json j;
    j["sample_ID"] = s.sample_id;
    j["user_persona"] = s.user_persona;
    j["agent_character"] = {
        {"character_name", s.agent_character.character_name},
        {"character_domain", s.agent_character.character_domain},
        {"character_source", s.agent_character.character_source},
        {"basic_character_information", s.agent_character.basic_character_information},
        {"character_background", s.agent_character.character_background},
        {"character_personality", s.agent_character.character_personality},
    };
    json turns = json::array();
    for (const auto& t : s.dialogue_context) {
        json turn;
        turn[t.role == Role::user ? "user_query" : "agent_response"] = t.text;
        turns.push_back(std::move(turn));
    }
    j["dialogue_context"] = std::move(turns);
    j["agent_golden_response"] = s.agent_golden_response;
    if (s.subset_tag) j["subset_tag"] = *s.subset_tag;
    return j;
}

inline json to_json(const Corpus& c) {
    json root;
    if (c.world) root["world"] = *c.world;
    json splits = json::array();
    for (const auto& split : c.splits) {
        json js;
        js["name"] = split.name;
        js["kind"] = to_string(split.kind);
        if (split.subset) js["subset"] = *split.subset;
        json samples = json::array();
        for (const auto& s : split.samples) samples.push_back(to_json(s));
        js["samples"] = std::move(samples);
        splits.push_back(std::move(js));
    }
    root["splits"] = std::move(splits);
    return root;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

// Uniqueness is whitespace-normalized exact string match; characters compare
// on the full serialized sheet, not just the name.
inline CorpusStats corpus_stats(const Split& split) {
    CorpusStats stats;
    stats.total_samples = split.samples.size();
    std::set<std::string> personas;
    std::set<std::string> characters;
    for (const auto& s : split.samples) {
        personas.insert(normalize_ws(s.user_persona));
        characters.insert(normalize_ws(s.agent_character.serialized()));
        stats.turn_count_histogram[s.dialogue_context.size()] += 1;
    }
    stats.unique_user_personas = personas.size();
    stats.unique_agent_characters = characters.size();
    return stats;
}

inline json to_json(const CorpusStats& st) {
    json j;
    j["total_samples"] = st.total_samples;
    j["unique_user_personas"] = st.unique_user_personas;
    j["unique_agent_characters"] = st.unique_agent_characters;
    json hist = json::object();
    for (const auto& [turns, freq] : st.turn_count_histogram)
        hist[std::to_string(turns)] = freq;
    j["turn_count_histogram"] = std::move(hist);
    return j;
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

struct ShiftKey {
    SplitKind kind = SplitKind::user_shift;
    std::optional<std::string> subset;  // restrict OOD side to one subset tag
};

struct Partition {
    std::vector<Sample> id_samples;
    std::vector<Sample> ood_samples;
};

inline Partition partition_by_shift(const Corpus& corpus, const ShiftKey& key) {
    Partition out;
    bool saw_id = false, saw_ood = false;
    for (const auto& split : corpus.splits) {
        if (split.kind == SplitKind::id_train || split.kind == SplitKind::id_test) {
            saw_id = true;
            out.id_samples.insert(out.id_samples.end(), split.samples.begin(),
                                  split.samples.end());
        } else if (split.kind == key.kind) {
            if (key.subset && split.subset != key.subset) continue;
            saw_ood = true;
            out.ood_samples.insert(out.ood_samples.end(), split.samples.begin(),
                                   split.samples.end());
        }
    }
    if (!saw_id) throw ValidationError("corpus has no id_train/id_test split");
    if (!saw_ood)
        throw ValidationError("corpus has no split of kind " + to_string(key.kind) +
                              (key.subset ? (" subset " + *key.subset) : std::string()));
    return out;
}

}  // namespace remid::data
