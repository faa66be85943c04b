// Command-line front end: every pipeline in the library as a subcommand.
// Outputs land under a run directory (--out) with a manifest that pins the
// effective options, seed, code version, and cache digest so a run can be
// replayed byte-for-byte. Secrets never appear in configs or manifests; the
// API key is read from an environment variable at request time.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "remid/analysis.hpp"
#include "remid/corl.hpp"
#include "remid/dataset.hpp"
#include "remid/divergence.hpp"
#include "remid/metrics.hpp"
#include "remid/remote.hpp"
#include "remid/worlds.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace remid;

namespace {

constexpr const char* kVersion = "0.1.0";

struct RunDir {
    fs::path root;

    explicit RunDir(fs::path p) : root(std::move(p)) {
        fs::create_directories(root / "reports");
        fs::create_directories(root / "plots");
        fs::create_directories(root / "logs");
    }

    void write_text(const fs::path& rel, const std::string& text) const {
        std::ofstream out(root / rel, std::ios::binary);
        if (!out) throw ConfigError("cannot write " + (root / rel).string());
        out << text;
    }

    void write_json(const fs::path& rel, const json& j) const {
        write_text(rel, j.dump(2) + "\n");
    }
};

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "none";
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return hash_hex(fnv1a64(data));
}

void write_manifest(const RunDir& run, const std::string& command, const json& options,
                    std::uint64_t seed, const std::string& cache_digest) {
    json m;
    m["command"] = command;
    m["options"] = options;
    m["seed"] = seed;
    m["code_version"] = kVersion;
    m["cache_digest"] = cache_digest;
    run.write_json("manifest.json", m);
}

data::CorpusSchema schema_from(const std::string& s) {
    if (s == "rpgbench") return data::CorpusSchema::rpgbench_json;
    if (s == "synthetic") return data::CorpusSchema::synthetic;
    throw ConfigError("unknown schema: " + s + " (expected rpgbench or synthetic)");
}

div::DiscretizeStrategy strategy_from(const std::string& s) {
    if (s == "exact") return div::ExactCategorical{};
    if (s.rfind("hash", 0) == 0) {
        div::HashBuckets hb;
        auto c1 = s.find(':');
        if (c1 != std::string::npos) {
            auto c2 = s.find(':', c1 + 1);
            hb.k = std::stoul(s.substr(c1 + 1, c2 - c1 - 1));
            if (c2 != std::string::npos) hb.seed = std::stoull(s.substr(c2 + 1));
        }
        return hb;
    }
    if (s.rfind("labels:", 0) == 0) return div::ExternalLabels{s.substr(7)};
    throw ConfigError("unknown strategy: " + s + " (expected exact, hash[:K[:SEED]], labels:PATH)");
}

world::SyntheticWorld load_world(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open world file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("malformed world JSON in " + path.string() + ": " + e.what());
    }
    return world::world_from_json(j);
}

data::Split first_split(const fs::path& path) {
    auto corpus = data::load_corpus(path, data::CorpusSchema::synthetic);
    if (corpus.splits.empty() || corpus.splits[0].samples.empty())
        throw ValidationError("corpus " + path.string() + " has no usable split");
    return corpus.splits[0];
}

// Options shared by the estimation subcommands.
struct EvalOpts {
    std::string world_path;
    std::string id_path, ood_path;
    std::size_t n = 512;
    std::uint64_t seed = 0;
    std::size_t entropy_samples = 64;
    bool no_reasoning = false;
    std::string strategy = "exact";
    // remote wiring; oracle backends are used when endpoints stay empty
    std::string rpm_endpoint, rpm_model;
    std::string est_endpoint, est_model;
    std::string api_key_env = "REMID_API_KEY";
    std::string cache_path;
    std::size_t max_in_flight = 4;
};

void add_eval_flags(CLI::App* cmd, EvalOpts& o, bool needs_ood) {
    cmd->add_option("--world", o.world_path, "synthetic world JSON")->required();
    cmd->add_option("--id", o.id_path, "synthetic corpus file for the ID split");
    if (needs_ood) cmd->add_option("--ood", o.ood_path, "synthetic corpus file for the OOD split");
    cmd->add_option("--n", o.n, "sample budget per split");
    cmd->add_option("--seed", o.seed, "run seed");
    cmd->add_option("--entropy-samples", o.entropy_samples, "K for Monte-Carlo entropies");
    cmd->add_flag("--no-reasoning", o.no_reasoning, "score without reasoning traces");
    cmd->add_option("--strategy", o.strategy, "discretization: exact, hash[:K[:SEED]], labels:PATH");
    cmd->add_option("--rpm-endpoint", o.rpm_endpoint, "remote completions URL for the model");
    cmd->add_option("--rpm-model", o.rpm_model, "remote model name");
    cmd->add_option("--estimator-endpoint", o.est_endpoint, "remote completions URL for the estimator");
    cmd->add_option("--estimator-model", o.est_model, "remote estimator model name");
    cmd->add_option("--api-key-env", o.api_key_env, "env var holding the API key");
    cmd->add_option("--cache", o.cache_path, "append-only score cache file");
    cmd->add_option("--max-in-flight", o.max_in_flight, "max concurrent remote requests");
}

struct BuiltBundle {
    metrics::EvalBundle bundle;
    world::SyntheticWorld world;
    std::string cache_digest = "none";
};

BuiltBundle build_bundle(const EvalOpts& o) {
    BuiltBundle out;
    out.world = load_world(o.world_path);
    std::shared_ptr<prov::Provider> rpm, est;
    if (!o.rpm_endpoint.empty()) {
        remote::RemoteConfig rc;
        rc.endpoint = o.rpm_endpoint;
        rc.model = o.rpm_model;
        rc.api_key_env = o.api_key_env;
        rc.max_in_flight = o.max_in_flight;
        rpm = std::make_shared<remote::RemoteProvider>(rc);
    } else {
        rpm = std::make_shared<prov::OracleProvider>(out.world, world::Table::model,
                                                     metrics::derive_seed(o.seed, 7001));
    }
    if (!o.est_endpoint.empty()) {
        remote::RemoteConfig rc;
        rc.endpoint = o.est_endpoint;
        rc.model = o.est_model;
        rc.api_key_env = o.api_key_env;
        rc.max_in_flight = o.max_in_flight;
        est = std::make_shared<remote::RemoteProvider>(rc);
    } else {
        est = std::make_shared<prov::OracleProvider>(out.world, world::Table::gold,
                                                     metrics::derive_seed(o.seed, 7002));
    }
    if (!o.cache_path.empty()) {
        rpm = std::make_shared<prov::CachingProvider>(rpm, fs::path(o.cache_path));
        est = std::make_shared<prov::CachingProvider>(est, fs::path(o.cache_path + ".est"));
        out.cache_digest = file_digest(o.cache_path);
    }
    out.bundle.rpm = std::move(rpm);
    out.bundle.estimator = std::move(est);
    if (!o.no_reasoning)
        out.bundle.reasoner =
            std::make_shared<prov::WorldReasoner>(out.world, metrics::derive_seed(o.seed, 7003));
    out.bundle.sample_budget = o.n;
    out.bundle.entropy_samples = o.entropy_samples;
    out.bundle.seed = o.seed;
    return out;
}

data::Split id_split_of(const EvalOpts& o, const world::SyntheticWorld& w) {
    if (!o.id_path.empty()) return first_split(o.id_path);
    return world::sample_split(w, world::Which::P, o.n, metrics::derive_seed(o.seed, 11),
                               "id", data::SplitKind::id_test);
}

data::Split ood_split_of(const EvalOpts& o, const world::SyntheticWorld& w) {
    if (!o.ood_path.empty()) return first_split(o.ood_path);
    return world::sample_split(w, world::Which::Q, o.n, metrics::derive_seed(o.seed, 13),
                               "ood", data::SplitKind::user_shift);
}

json eval_options_json(const EvalOpts& o, const BuiltBundle& built,
                       const std::string& extra_key = "", const json& extra = {}) {
    json j;
    j["world"] = o.world_path;
    j["id"] = o.id_path;
    j["ood"] = o.ood_path;
    j["n"] = o.n;
    j["entropy_samples"] = o.entropy_samples;
    j["no_reasoning"] = o.no_reasoning;
    j["strategy"] = o.strategy;
    j["rpm_backend"] = built.bundle.rpm->backend_id();
    j["estimator_backend"] = built.bundle.estimator->backend_id();
    j["cache"] = o.cache_path;
    if (!extra_key.empty()) j[extra_key] = extra;
    return j;
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        auto comma = csv.find(',', pos);
        out.push_back(std::stoul(csv.substr(pos, comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw ConfigError("empty size list");
    return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        auto comma = csv.find(',', pos);
        out.push_back(std::stod(csv.substr(pos, comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw ConfigError("empty value list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generalization-drop metrics for conditional text generators"};
    app.set_config("--config", "", "key=value config file; flags override file values");
    app.require_subcommand(1);

    std::string out_dir = "run";
    app.add_option("--out", out_dir, "run directory for manifests, reports, and plots")
        ->capture_default_str();

    // --- validate-data ------------------------------------------------------
    auto* c_validate = app.add_subcommand("validate-data", "parse and validate a corpus file");
    std::string v_input, v_schema = "rpgbench";
    c_validate->add_option("--input", v_input, "corpus file")->required();
    c_validate->add_option("--schema", v_schema, "rpgbench or synthetic");

    // --- stats --------------------------------------------------------------
    auto* c_stats = app.add_subcommand("stats", "per-split corpus statistics");
    std::string s_input, s_schema = "rpgbench";
    c_stats->add_option("--input", s_input, "corpus file")->required();
    c_stats->add_option("--schema", s_schema, "rpgbench or synthetic");

    // --- shift-severity -----------------------------------------------------
    auto* c_sev = app.add_subcommand("shift-severity", "component JS severities between splits");
    std::string sev_input, sev_schema = "rpgbench", sev_kind = "user_shift", sev_strategy = "hash:512:0";
    std::string sev_subset;
    c_sev->add_option("--input", sev_input, "corpus file with id and shift splits")->required();
    c_sev->add_option("--schema", sev_schema, "rpgbench or synthetic");
    c_sev->add_option("--kind", sev_kind, "user_shift, character_shift, or dialogue_shift");
    c_sev->add_option("--subset", sev_subset, "restrict the OOD side to one subset tag");
    c_sev->add_option("--strategy", sev_strategy, "exact, hash[:K[:SEED]], labels:PATH");

    // --- world-gen ----------------------------------------------------------
    auto* c_gen = app.add_subcommand("world-gen", "emit randomized synthetic worlds");
    std::size_t g_count = 5;
    std::uint64_t g_seed = 0;
    std::string g_sizes = "3,2,2,2,5";
    c_gen->add_option("--count", g_count, "number of worlds");
    c_gen->add_option("--seed", g_seed, "generator seed");
    c_gen->add_option("--sizes", g_sizes, "u,a,d,r,y space sizes");

    // --- estimate-remi ------------------------------------------------------
    auto* c_remi = app.add_subcommand("estimate-remi", "reasoning-aware drop metric on one split");
    EvalOpts remi_opts;
    std::string remi_which = "P";
    add_eval_flags(c_remi, remi_opts, false);
    c_remi->add_option("--which", remi_which, "P (train side) or Q (test side)");

    // --- estimate-remid -----------------------------------------------------
    auto* c_remid = app.add_subcommand("estimate-remid", "drop difference between id and ood splits");
    EvalOpts remid_opts;
    add_eval_flags(c_remid, remid_opts, true);

    // --- bound --------------------------------------------------------------
    auto* c_bound = app.add_subcommand("bound", "worst-case drop bound");
    EvalOpts bound_opts;
    bool bound_exact = false;
    add_eval_flags(c_bound, bound_opts, true);
    c_bound->add_flag("--exact", bound_exact, "enumerate the bound from world tables");

    // --- corl-train ---------------------------------------------------------
    auto* c_corl = app.add_subcommand("corl-train", "co-evolving tabular GRPO training");
    std::string corl_world_path;
    corl::GrpoConfig corl_cfg;
    corl::CorlOptions corl_opt;
    bool corl_uniform_init = false;
    {
        auto [rc, ro] = corl::ablation_reference_config(0);
        corl_cfg = rc;
        corl_opt = ro;
    }
    c_corl->add_option("--world", corl_world_path, "world JSON (default: bundled reasoning world)");
    c_corl->add_option("--seed", corl_cfg.seed, "training seed");
    c_corl->add_option("--group-size", corl_cfg.group_size, "rollouts per sample");
    c_corl->add_option("--clip-epsilon", corl_cfg.clip_epsilon, "surrogate clip width");
    c_corl->add_option("--kl-coeff", corl_cfg.kl_coeff, "KL penalty weight");
    c_corl->add_option("--lr", corl_cfg.learning_rate, "learning rate");
    c_corl->add_option("--epochs", corl_cfg.epochs_per_phase, "epochs per phase");
    c_corl->add_option("--alternations", corl_cfg.alternations, "co-evolution rounds");
    c_corl->add_option("--traces", corl_opt.traces_per_context, "supervised traces per input");
    c_corl->add_option("--teacher-accuracy", corl_opt.teacher_accuracy, "trace label accuracy");
    c_corl->add_option("--smoothing-alpha", corl_opt.smoothing_alpha, "add-alpha for ML fits");
    c_corl->add_flag("--uniform-init", corl_uniform_init, "skip the supervised init");

    // --- ablation -----------------------------------------------------------
    auto* c_abl = app.add_subcommand("ablation", "perplexity ablation rows");
    std::string abl_world_path;
    std::uint64_t abl_seed = 0;
    c_abl->add_option("--world", abl_world_path, "world JSON (default: bundled reasoning world)");
    c_abl->add_option("--seed", abl_seed, "seed");

    // --- correlate ----------------------------------------------------------
    auto* c_corr = app.add_subcommand("correlate", "pearson/spearman with p-values");
    std::string corr_pairs, corr_judge, corr_metrics;
    bool corr_scatter = false;
    c_corr->add_option("--pairs", corr_pairs, "CSV with header label,x,y");
    c_corr->add_option("--judge", corr_judge, "judge score CSV (model,split,score)");
    c_corr->add_option("--metrics", corr_metrics, "metric CSV (model,split,value) joined with --judge");
    c_corr->add_flag("--scatter", corr_scatter, "emit an SVG scatter plot");

    // --- convergence --------------------------------------------------------
    auto* c_conv = app.add_subcommand("convergence", "bound-vs-drop correlation as N grows");
    std::string conv_sizes = "12,24,48,96";
    std::string conv_lambdas = "0.15,0.25,0.35,0.45,0.55,0.65,0.75,0.85";
    std::string conv_worlds_dir;
    std::size_t conv_reps = 5;
    std::uint64_t conv_seed = 0;
    c_conv->add_option("--sizes", conv_sizes, "comma-separated sample sizes");
    c_conv->add_option("--reps", conv_reps, "seed replicates per size");
    c_conv->add_option("--seed", conv_seed, "seed");
    c_conv->add_option("--lambdas", conv_lambdas, "user-shift sweep defining the world family");
    c_conv->add_option("--worlds-dir", conv_worlds_dir, "directory of world JSON files (overrides --lambdas)");

    for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunDir run{fs::path(out_dir)};

        if (*c_validate) {
            auto corpus = data::load_corpus(v_input, schema_from(v_schema));
            std::size_t total = 0;
            for (const auto& s : corpus.splits) total += s.samples.size();
            json rep;
            rep["splits"] = corpus.splits.size();
            rep["samples"] = total;
            rep["valid"] = true;
            run.write_json("reports/validate.json", rep);
            write_manifest(run, "validate-data",
                           {{"input", v_input}, {"schema", v_schema}}, 0, "none");
            std::cout << "ok: " << corpus.splits.size() << " split(s), " << total
                      << " sample(s)\n";
        } else if (*c_stats) {
            auto corpus = data::load_corpus(s_input, schema_from(s_schema));
            std::string csv = "split,total_samples,unique_user_personas,unique_agent_characters\n";
            json rep = json::array();
            for (const auto& split : corpus.splits) {
                auto st = data::corpus_stats(split);
                csv += split.name + "," + std::to_string(st.total_samples) + "," +
                       std::to_string(st.unique_user_personas) + "," +
                       std::to_string(st.unique_agent_characters) + "\n";
                json row = data::to_json(st);
                row["split"] = split.name;
                rep.push_back(row);
            }
            run.write_text("reports/stats.csv", csv);
            run.write_json("reports/stats.json", rep);
            write_manifest(run, "stats", {{"input", s_input}, {"schema", s_schema}}, 0, "none");
            std::cout << csv;
        } else if (*c_sev) {
            auto corpus = data::load_corpus(sev_input, schema_from(sev_schema));
            data::ShiftKey key;
            key.kind = data::split_kind_from_string(sev_kind);
            if (!sev_subset.empty()) key.subset = sev_subset;
            auto part = data::partition_by_shift(corpus, key);
            data::Split id_side{"id", data::SplitKind::id_test, std::nullopt, part.id_samples};
            data::Split ood_side{"ood", key.kind, key.subset, part.ood_samples};
            auto sev = div::shift_severity(id_side, ood_side, strategy_from(sev_strategy));
            run.write_json("reports/severity.json", div::to_json(sev));
            run.write_text("reports/severity.csv", div::severity_csv_header() + "\n" +
                                                       div::severity_csv_row("id", sev_kind, sev) +
                                                       "\n");
            write_manifest(run, "shift-severity",
                           {{"input", sev_input},
                            {"kind", sev_kind},
                            {"subset", sev_subset},
                            {"strategy", sev_strategy}},
                           0, "none");
            std::cout << div::to_json(sev).dump(2) << "\n";
        } else if (*c_gen) {
            auto sizes = parse_size_list(g_sizes);
            if (sizes.size() != 5) throw ConfigError("--sizes needs five entries: u,a,d,r,y");
            worlds::RandomWorldSpec spec;
            spec.nu = static_cast<int>(sizes[0]);
            spec.na = static_cast<int>(sizes[1]);
            spec.nd = static_cast<int>(sizes[2]);
            spec.nr = static_cast<int>(sizes[3]);
            spec.ny = static_cast<int>(sizes[4]);
            fs::create_directories(run.root / "worlds");
            json index = json::array();
            for (std::size_t i = 0; i < g_count; ++i) {
                auto w = worlds::random_world(metrics::derive_seed(g_seed, i + 1), spec);
                auto rel = fs::path("worlds") / ("world-" + std::to_string(i) + ".json");
                run.write_json(rel, world::to_json(w));
                index.push_back(rel.string());
            }
            run.write_json("reports/worlds.json", index);
            write_manifest(run, "world-gen",
                           {{"count", g_count}, {"sizes", g_sizes}}, g_seed, "none");
            std::cout << "wrote " << g_count << " world(s) under " << (run.root / "worlds").string()
                      << "\n";
        } else if (*c_remi) {
            auto built = build_bundle(remi_opts);
            auto which = remi_which == "Q" ? world::Which::Q : world::Which::P;
            auto split = which == world::Which::P ? id_split_of(remi_opts, built.world)
                                                  : ood_split_of(remi_opts, built.world);
            auto rep = metrics::remi(split, built.bundle);
            run.write_json("reports/remi.json", metrics::to_json(rep));
            write_manifest(run, "estimate-remi",
                           eval_options_json(remi_opts, built, "which", remi_which), remi_opts.seed,
                           built.cache_digest);
            std::cout << metrics::to_json(rep).dump(2) << "\n";
        } else if (*c_remid) {
            auto built = build_bundle(remid_opts);
            auto rep = metrics::remid(id_split_of(remid_opts, built.world),
                                      ood_split_of(remid_opts, built.world), built.bundle);
            run.write_json("reports/remid.json", metrics::to_json(rep));
            write_manifest(run, "estimate-remid", eval_options_json(remid_opts, built),
                           remid_opts.seed, built.cache_digest);
            std::cout << metrics::to_json(rep).dump(2) << "\n";
        } else if (*c_bound) {
            auto built = build_bundle(bound_opts);
            json rep;
            if (bound_exact) {
                auto b = world::exact_bound(built.world, !bound_opts.no_reasoning);
                rep["bound"] = b.bound;
                rep["entropy_hat"] = b.entropy_hat;
                rep["delta_p"] = b.delta_p;
                rep["delta_q"] = b.delta_q;
                rep["severity"] = {{"js_user", b.js_u},
                                   {"js_character", b.js_a},
                                   {"js_dialogue", b.js_d}};
                rep["mode"] = "exact";
            } else {
                auto b = metrics::drop_bound(id_split_of(bound_opts, built.world),
                                                 ood_split_of(bound_opts, built.world),
                                                 built.bundle,
                                                 strategy_from(bound_opts.strategy));
                rep = metrics::to_json(b);
                rep["mode"] = "estimated";
            }
            run.write_json("reports/bound.json", rep);
            write_manifest(run, "bound",
                           eval_options_json(bound_opts, built, "exact", bound_exact),
                           bound_opts.seed, built.cache_digest);
            std::cout << rep.dump(2) << "\n";
        } else if (*c_corl) {
            auto w = corl_world_path.empty() ? worlds::reasoning_sufficient_world()
                                             : load_world(corl_world_path);
            auto res = corl::corl_train(w, corl_cfg,
                                        corl_uniform_init ? corl::InitMode::uniform
                                                          : corl::InitMode::sft,
                                        corl_opt);
            run.write_text("reports/history.csv", corl::history_csv(res.history));
            json policies;
            policies["q1"] = corl::to_json(res.q1);
            policies["q2"] = corl::to_json(res.q2);
            run.write_json("reports/policies.json", policies);
            double final_ppl =
                corl::perplexity(corl::composed_scorer(w, corl_opt, res.q1, res.q2),
                                 res.eval_pairs);
            write_manifest(run, "corl-train",
                           {{"world", corl_world_path},
                            {"group_size", corl_cfg.group_size},
                            {"lr", corl_cfg.learning_rate},
                            {"epochs", corl_cfg.epochs_per_phase},
                            {"alternations", corl_cfg.alternations}},
                           corl_cfg.seed, "none");
            std::cout << "final perplexity " << fmt_double(final_ppl) << " over "
                      << res.eval_pairs.size() << " eval pairs\n";
        } else if (*c_abl) {
            auto w = abl_world_path.empty() ? worlds::reasoning_sufficient_world()
                                            : load_world(abl_world_path);
            auto [cfg, opt] = corl::ablation_reference_config(abl_seed);
            auto res = corl::ablation_suite(w, cfg, opt);
            std::string csv = "variant,perplexity\n";
            csv += "ours," + fmt_double(res.ppl_ours) + "\n";
            csv += "no_corl," + fmt_double(res.ppl_no_corl) + "\n";
            csv += "no_reasoning," + fmt_double(res.ppl_no_reasoning) + "\n";
            run.write_text("reports/ablation.csv", csv);
            write_manifest(run, "ablation", {{"world", abl_world_path}}, abl_seed, "none");
            std::cout << csv;
            bool ordered = res.ppl_ours < res.ppl_no_corl && res.ppl_no_corl < res.ppl_no_reasoning;
            std::cout << (ordered ? "ordering holds\n" : "ordering violated\n");
        } else if (*c_corr) {
            stats::PairedSeries series;
            if (!corr_pairs.empty()) {
                std::ifstream in(corr_pairs);
                if (!in) throw ConfigError("cannot open " + corr_pairs);
                std::string line;
                std::getline(in, line);
                if (normalize_ws(line) != "label,x,y")
                    throw ParseError("pairs header must be label,x,y");
                std::size_t lineno = 1;
                while (std::getline(in, line)) {
                    ++lineno;
                    if (normalize_ws(line).empty()) continue;
                    auto c1 = line.find(',');
                    auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
                    if (c2 == std::string::npos)
                        throw ParseError("pairs line " + std::to_string(lineno) +
                                         ": expected label,x,y");
                    series.labels.push_back(line.substr(0, c1));
                    series.xs.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
                    series.ys.push_back(std::stod(line.substr(c2 + 1)));
                }
            } else if (!corr_judge.empty() && !corr_metrics.empty()) {
                auto judge = stats::ingest_judge_scores(corr_judge);
                std::ifstream in(corr_metrics);
                if (!in) throw ConfigError("cannot open " + corr_metrics);
                std::string line;
                std::getline(in, line);
                if (normalize_ws(line) != "model,split,value")
                    throw ParseError("metrics header must be model,split,value");
                while (std::getline(in, line)) {
                    if (normalize_ws(line).empty()) continue;
                    auto c1 = line.find(',');
                    auto c2 = line.find(',', c1 + 1);
                    std::string model = line.substr(0, c1);
                    std::string split = line.substr(c1 + 1, c2 - c1 - 1);
                    auto it = judge.find({model, split});
                    if (it == judge.end())
                        throw ValidationError("no judge score for (" + model + ", " + split + ")");
                    series.labels.push_back(model + "/" + split);
                    series.xs.push_back(std::stod(line.substr(c2 + 1)));
                    series.ys.push_back(it->second);
                }
            } else {
                throw ConfigError("correlate needs --pairs, or --judge together with --metrics");
            }
            auto corr = stats::correlate(series);
            json rep;
            rep["pearson_r"] = corr.pearson_r;
            rep["pearson_p"] = corr.pearson_p;
            rep["spearman_rho"] = corr.spearman_rho;
            rep["spearman_p"] = corr.spearman_p;
            rep["n"] = corr.n;
            run.write_json("reports/correlation.json", rep);
            if (corr_scatter)
                run.write_text("plots/scatter.svg", stats::scatter_svg(series, true));
            write_manifest(run, "correlate",
                           {{"pairs", corr_pairs}, {"judge", corr_judge},
                            {"metrics", corr_metrics}},
                           0, "none");
            std::cout << rep.dump(2) << "\n";
        } else if (*c_conv) {
            std::vector<world::SyntheticWorld> family;
            if (!conv_worlds_dir.empty()) {
                std::vector<fs::path> paths;
                for (const auto& entry : fs::directory_iterator(conv_worlds_dir))
                    if (entry.path().extension() == ".json") paths.push_back(entry.path());
                std::sort(paths.begin(), paths.end());
                for (const auto& p : paths) family.push_back(load_world(p));
            } else {
                for (double lambda : parse_double_list(conv_lambdas))
                    family.push_back(worlds::user_shift_world(lambda));
            }
            stats::ConvergenceOptions opt;
            opt.sample_sizes = parse_size_list(conv_sizes);
            opt.seeds_per_size = conv_reps;
            opt.seed = conv_seed;
            auto rows = stats::bound_convergence(family, opt);
            run.write_text("reports/convergence.csv", stats::convergence_csv(rows));
            write_manifest(run, "convergence",
                           {{"sizes", conv_sizes}, {"reps", conv_reps},
                            {"lambdas", conv_lambdas}, {"worlds_dir", conv_worlds_dir}},
                           conv_seed, "none");
            std::cout << stats::convergence_csv(rows);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
