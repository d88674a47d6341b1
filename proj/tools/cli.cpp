#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "reflcausal/cesr.hpp"
#include "reflcausal/dataset.hpp"
#include "reflcausal/errors.hpp"
#include "reflcausal/ges.hpp"
#include "reflcausal/graph.hpp"
#include "reflcausal/icp.hpp"
#include "reflcausal/intervention.hpp"
#include "reflcausal/parallel.hpp"
#include "reflcausal/report.hpp"
#include "reflcausal/rng.hpp"
#include "reflcausal/synthetic.hpp"

namespace reflcausal::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char *kBackendEnv = "REFLCAUSAL_BACKEND_URL";

// Keys that may appear in a config file under any subcommand.
const std::set<std::string> kAllKeys = {
    "data",          "schema",     "outcome",   "k",        "scores",      "alpha",
    "seed",          "max_parents", "candidates", "stability_folds", "stability_groups", "parents",
    "outcomes",      "queries",    "backend",   "t_max",    "resample_count", "similarity_threshold",
    "prompts",       "model",      "factors",   "mode",     "interventions", "matcher",
    "rounds",        "patterns",   "density",   "n",        "environments", "shift",
    "score"};

bool is_prefixed_key(const std::string &k) { return k.rfind("definition.", 0) == 0 || k.rfind("keywords.", 0) == 0; }

struct Command {
    CLI::App *app = nullptr;
    std::map<std::string, std::string> defaults;
    std::map<std::string, std::string> storage;
    std::map<std::string, CLI::Option *> options;
    bool prefixed_keys = false; // accepts definition.* / keywords.*
    bool design = false;

    std::string config_path;
    std::string design_path;
    std::string out_dir = ".";
    std::size_t jobs = 1;
};

void add(Command &c, const std::string &key, const std::string &def, const std::string &help) {
    if (!def.empty()) c.defaults[key] = def;
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    c.options[key] = c.app->add_option(flag, c.storage[key], help + (def.empty() ? "" : " [" + def + "]"));
}

void add_common(Command &c) {
    c.app->add_option("--config", c.config_path, "flat key = value config file; flags override it");
    c.app->add_option("--out", c.out_dir, "output directory [.]");
    c.app->add_option("--jobs", c.jobs, "worker threads, 0 = all cores [1]")->check(CLI::NonNegativeNumber);
}

RunConfig effective_config(const Command &c) {
    RunConfig cfg;
    for (const auto &[k, v] : c.defaults) cfg.set(k, v);
    auto overlay = [&](const RunConfig &src, const std::string &origin) {
        for (const auto &[k, v] : src.values()) {
            if (c.options.count(k) || (c.prefixed_keys && is_prefixed_key(k))) {
                cfg.set(k, v);
            } else if (!kAllKeys.count(k) && !is_prefixed_key(k)) {
                throw ValidationError(fmt::format("{}: unknown key '{}'", origin, k));
            }
        }
    };
    if (c.design && !c.design_path.empty()) overlay(RunConfig::load(c.design_path), c.design_path);
    if (!c.config_path.empty()) overlay(RunConfig::load(c.config_path), c.config_path);
    if (c.options.count("backend")) {
        if (const char *env = std::getenv(kBackendEnv); env && *env) cfg.set("backend", env);
    }
    for (const auto &[k, opt] : c.options) {
        if (opt->count() > 0) cfg.set(k, c.storage.at(k));
    }
    return cfg;
}

std::string require(const RunConfig &cfg, const std::string &key) {
    auto v = cfg.get(key, "");
    if (v.empty()) {
        std::string flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        throw ValidationError("missing required setting '" + key + "' (flag --" + flag + ")");
    }
    return v;
}

std::optional<std::size_t> optional_size(const RunConfig &cfg, const std::string &key) {
    if (cfg.get(key, "").empty()) return std::nullopt;
    return static_cast<std::size_t>(cfg.get_uint(key, 0));
}

std::string file_hash(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return hex64(fnv1a64(ss.str()));
}

json envelope(const std::string &command, const RunConfig &cfg, json seeds, json inputs, json result) {
    return {{"command", command}, {"config", cfg.to_json()}, {"config_hash", cfg.hash()},
            {"seeds", std::move(seeds)}, {"inputs", std::move(inputs)}, {"result", std::move(result)}};
}

void write_output(const Command &c, const std::string &name, const std::string &content) {
    fs::create_directories(c.out_dir);
    write_file_atomic(fs::path(c.out_dir) / name, content);
}

// ---------------------------------------------------------------- data

struct LoadedData {
    PatternSchema schema;
    std::vector<Trajectory> trajectories;
    BinaryDataset data;
    json inputs;
};

LoadedData load_data(const RunConfig &cfg) {
    LoadedData d;
    const std::string path = require(cfg, "data");
    const std::string schema_path = cfg.get("schema", "");
    d.schema = schema_path.empty() ? infer_schema(path) : PatternSchema::load(schema_path);
    d.trajectories = ingest_trajectories(path, d.schema);
    std::string outcome = cfg.get("outcome", "");
    if (outcome.empty()) {
        if (d.schema.outcomes.size() != 1) throw ValidationError("--outcome is required when the schema has several outcomes");
        outcome = d.schema.outcomes.front();
    }
    d.data = flatten(d.trajectories, outcome);
    d.inputs = {{"data", file_hash(path)}};
    if (!schema_path.empty()) d.inputs["schema"] = file_hash(schema_path);
    return d;
}

NodeSet parse_label_set(const BinaryDataset &data, const std::string &text) {
    NodeSet out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        item = item.substr(b, e - b + 1);
        auto idx = data.index_of(item);
        if (!idx) throw ValidationError("unknown variable '" + item + "'");
        if (*idx == data.outcome_index()) throw ValidationError("the outcome cannot be its own parent");
        out.push_back(*idx);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::string> labels_of(const BinaryDataset &data, const NodeSet &s) {
    std::vector<std::string> out;
    for (auto v : s) out.push_back(data.variable(v).label());
    return out;
}

std::vector<ScoreFn> parse_scores(const RunConfig &cfg, double alpha) {
    std::vector<ScoreFn> out;
    for (const auto &name : cfg.get_list("scores", {})) out.push_back({parse_score_kind(name), alpha});
    if (out.empty()) throw ValidationError("--scores needs at least one score");
    return out;
}

Factor parse_factor(const std::string &text) {
    const auto at = text.rfind('@');
    if (at == std::string::npos || at == 0) throw ValidationError("factor '" + text + "' must look like NAME@ROUND");
    try {
        std::size_t pos = 0;
        const int round = std::stoi(text.substr(at + 1), &pos);
        if (pos + at + 1 == text.size()) return {text.substr(0, at), round};
    } catch (const std::exception &) {
    }
    throw ValidationError("factor '" + text + "' has a bad round");
}

std::map<std::string, std::string> definitions_of(const RunConfig &cfg) {
    std::map<std::string, std::string> out;
    for (const auto &[k, v] : cfg.values()) {
        if (k.rfind("definition.", 0) == 0) out[k.substr(11)] = v;
    }
    return out;
}

struct Query {
    std::string id;
    std::string query;
    std::optional<std::string> ground_truth;
    std::string task_id;
};

std::vector<Query> read_queries(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open queries file " + path);
    std::vector<Query> out;
    std::set<std::string> seen;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            Query q;
            q.id = j.contains("id") ? j.at("id").get<std::string>() : fmt::format("q{}", out.size());
            q.query = j.at("query").get<std::string>();
            if (j.contains("ground_truth") && !j["ground_truth"].is_null()) {
                const auto &g = j["ground_truth"];
                q.ground_truth = g.is_string() ? g.get<std::string>() : g.dump();
            }
            q.task_id = j.value("task_id", "");
            if (!seen.insert(q.id).second) throw MalformedRecord(n, "duplicate query id '" + q.id + "'");
            out.push_back(std::move(q));
        } catch (const json::exception &e) {
            throw MalformedRecord(n, e.what());
        }
    }
    if (out.empty()) throw ValidationError("queries file " + path + " has no records");
    return out;
}

SelfRefineConfig refine_config(const RunConfig &cfg) {
    SelfRefineConfig rc;
    rc.t_max = static_cast<int>(cfg.get_int("t_max", 5));
    rc.resample_count = cfg.get_uint("resample_count", 20);
    rc.similarity_threshold = cfg.get_double("similarity_threshold", 0.5);
    const auto prompts = cfg.get("prompts", "");
    if (!prompts.empty()) {
        if (!fs::is_directory(prompts)) throw ValidationError("prompt directory " + prompts + " does not exist");
        rc.prompts = PromptSet::load(prompts);
    }
    rc.definitions = definitions_of(cfg);
    rc.validate();
    return rc;
}

// ---------------------------------------------------------------- subcommands

int cmd_ingest(const Command &c, std::ostream &out) {
    const auto cfg = effective_config(c);
    auto d = load_data(cfg);
    std::ostringstream csv;
    write_csv(csv, d.data);
    std::size_t positives = 0;
    for (auto b : d.data.column(d.data.outcome_index())) positives += b;
    const json result = {{"rows", d.data.n_rows()},
                         {"columns", d.data.labels()},
                         {"outcome", d.data.variable(d.data.outcome_index()).label()},
                         {"outcome_positives", positives},
                         {"schema", d.schema.to_json()}};
    write_output(c, "dataset.csv", csv.str());
    write_output(c, "schema.json", dump_report(d.schema.to_json()));
    write_output(c, "ingest.json", dump_report(envelope("ingest", cfg, json::object(), d.inputs, result)));
    out << fmt::format("{} trajectories, {} columns, outcome {} ({} positive)\n", d.data.n_rows(), d.data.n_cols(),
                       result["outcome"].get<std::string>(), positives);
    return kOk;
}

int cmd_discover(const Command &c, std::ostream &out) {
    const auto cfg = effective_config(c);
    GesConfig g;
    g.score = {parse_score_kind(cfg.get("score", "BDs")), cfg.get_double("alpha", 1.0)};
    g.max_parents = optional_size(cfg, "max_parents");
    g.seed = cfg.get_uint("seed", 0);
    auto d = load_data(cfg);
    g.mask = temporal_mask(d.data.variables());
    const auto r = ges(d.data, g);
    const auto p = parents_of(r.graph, d.data.outcome_index());
    json steps = json::array();
    for (const auto &s : r.trace.steps) {
        steps.push_back({{"phase", s.phase == GesPhase::FES ? "FES" : "BES"}, {"op", s.op}, {"delta", s.score_delta}});
    }
    const json result = {{"graph", serialize(r.graph, d.data.labels())},
                         {"outcome_parents", labels_of(d.data, p.parents)},
                         {"outcome_ambiguous", labels_of(d.data, p.ambiguous)},
                         {"score", to_string(g.score.kind)},
                         {"final_score", r.trace.final_score},
                         {"steps", steps}};
    write_output(c, "discover.json", dump_report(envelope("discover", cfg, {{"seed", g.seed}}, d.inputs, result)));
    out << serialize(r.graph, d.data.labels());
    out << fmt::format("outcome parents: {{{}}}\n", fmt::join(labels_of(d.data, p.parents), ", "));
    return kOk;
}

int cmd_verify(const Command &c, std::ostream &out) {
    const auto cfg = effective_config(c);
    PipelineConfig pc;
    pc.k = cfg.get_uint("k", 5);
    pc.alpha = cfg.get_double("alpha", 1.0);
    pc.scores = parse_scores(cfg, pc.alpha);
    pc.seed = cfg.get_uint("seed", 0);
    pc.stability_folds = cfg.get_uint("stability_folds", 20);
    pc.stability_groups = cfg.get_uint("stability_groups", 4);
    pc.max_parents = optional_size(cfg, "max_parents");
    pc.jobs = c.jobs;
    auto d = load_data(cfg);

    PipelineResult r;
    const auto cand_text = cfg.get("candidates", "");
    if (cand_text.empty()) {
        r = run_pipeline(d.data, pc);
    } else {
        std::vector<CandidateParentSet> cands;
        std::stringstream ss(cand_text);
        std::string item;
        while (std::getline(ss, item, ';')) cands.push_back({parse_label_set(d.data, item), {}});
        r = verify_candidates(d.data, std::move(cands), pc);
    }
    const json seeds = {{"seed", pc.seed}};
    std::string text;
    if (r.stage1) {
        write_output(c, "cvll.json", dump_report(envelope("verify", cfg, seeds, d.inputs, to_json(*r.stage1, d.data))));
        text += "Stage 1: candidate parent sets\n" + render_cvll_table(*r.stage1, d.data) + "\n";
    }
    if (r.stage2) {
        write_output(c, "uniqueness.json", dump_report(envelope("verify", cfg, seeds, d.inputs, to_json(*r.stage2))));
        text += "Stage 2: uniqueness\n" + render_uniqueness_table(*r.stage2) + "\n";
    }
    if (r.stage3) {
        write_output(c, "stability.json", dump_report(envelope("verify", cfg, seeds, d.inputs, to_json(*r.stage3))));
        text += "Stage 3: stability\n" + render_stability_table(*r.stage3) + "\n";
    }
    for (const auto &w : r.warnings) text += "warning: " + w + "\n";
    text += fmt::format("winner: {{{}}}\nH_a {}{}\n", fmt::join(labels_of(d.data, r.winner), ", "),
                        r.ha_supported ? "supported" : "not supported",
                        r.moderate_flagged ? " (moderate instability flagged)" : "");
    write_output(c, "pipeline.json", dump_report(envelope("verify", cfg, seeds, d.inputs, to_json(r, d.data))));
    write_output(c, "verify.txt", text);
    out << text;
    return kOk;
}

int cmd_stability(const Command &c, std::ostream &out) {
    const auto cfg = effective_config(c);
    const auto folds = cfg.get_uint("stability_folds", 20);
    const auto groups = cfg.get_uint("stability_groups", 4);
    const auto seed = cfg.get_uint("seed", 0);
    auto d = load_data(cfg);
    const auto parents = parse_label_set(d.data, require(cfg, "parents"));
    const auto r = stage3_stability(d.data, parents, folds, groups, seed, c.jobs);
    write_output(c, "stability.json", dump_report(envelope("stability", cfg, {{"seed", seed}}, d.inputs, to_json(r))));
    const auto text = render_stability_table(r);
    write_output(c, "stability.txt", text);
    out << text;
    return kOk;
}

std::vector<Observation> read_observations(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open outcomes file " + path);
    std::vector<Observation> obs;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            Observation o;
            o.subject = j.at("subject").get<std::string>();
            o.model = j.value("model", "");
            o.condition = j.at("condition").get<std::string>();
            const auto &v = j.at("outcome");
            const long long b = v.is_boolean() ? v.get<bool>() : v.get<long long>();
            if (b != 0 && b != 1) throw MalformedRecord(n, "outcome must be 0 or 1");
            o.outcome = static_cast<std::uint8_t>(b);
            obs.push_back(std::move(o));
        } catch (const json::exception &e) {
            throw MalformedRecord(n, e.what());
        }
    }
    return obs;
}

int cmd_intervene(const Command &c, std::ostream &out) {
    const auto cfg = effective_config(c);
    std::vector<Factor> factors;
    for (const auto &f : cfg.get_list("factors", {})) factors.push_back(parse_factor(f));
    auto design = build_conditions(factors);
    const auto mode = parse_intervention_mode(cfg.get("mode", "emphasize"));
    for (auto &cond : design.conditions)
        for (auto &t : cond.spec.targets) t.mode = mode;

    json inputs = json::object();
    if (!c.design_path.empty()) inputs["design"] = file_hash(c.design_path);
    std::vector<Observation> obs;
    json seeds = json::object();
    const auto outcomes_path = cfg.get("outcomes", "");
    if (!outcomes_path.empty()) {
        obs = read_observations(outcomes_path);
        inputs["outcomes"] = file_hash(outcomes_path);
    } else {
        // Live: one CESR trajectory per (query, condition), scored by exact match.
        const auto queries_path = require(cfg, "queries");
        const auto queries = read_queries(queries_path);
        inputs["queries"] = file_hash(queries_path);
        const auto rc = refine_config(cfg);
        for (const auto &cond : design.conditions) cond.spec.validate(rc.t_max);
        auto backend = make_backend(cfg.get("backend", "mock"));
        const auto model = cfg.get("model", backend->name());
        const auto seed = cfg.get_uint("seed", 0);
        seeds["seed"] = seed;
        const std::size_t n_cond = design.conditions.size();
        std::vector<RawTrajectory> raws(queries.size() * n_cond);
        parallel_for(raws.size(), c.jobs, [&](std::size_t i) {
            const auto &q = queries[i / n_cond];
            const auto &cond = design.conditions[i % n_cond];
            RefineRequest req{q.query, q.ground_truth, q.id + "/" + cond.name, model, q.task_id};
            // Conditions share the subject's seed so they differ only by the intervention.
            raws[i] = run_self_refine(req, rc, *backend, cond.spec, derive_seed(seed, i / n_cond));
        });
        const std::vector<OutcomeRule> rule{{"correct", OutcomeKind::ExactMatch, MetricDirection::HigherBetter}};
        for (std::size_t i = 0; i < raws.size(); ++i) {
            const auto score = score_outcome(raws[i], rule);
            obs.push_back({queries[i / n_cond].id, model, design.conditions[i % n_cond].name,
                           static_cast<std::uint8_t>(score.at("correct"))});
        }
        std::ostringstream raw_out;
        write_raw_trajectories(raw_out, raws);
        write_output(c, "raw.jsonl", raw_out.str());
        std::ostringstream obs_out;
        for (const auto &o : obs) {
            obs_out << json{{"subject", o.subject}, {"model", o.model}, {"condition", o.condition}, {"outcome", o.outcome}}
                           .dump()
                    << '\n';
        }
        write_output(c, "outcomes.jsonl", obs_out.str());
    }
    const auto r = analyze(design.condition_names(), obs);
    json result = to_json(r);
    result["mode"] = to_string(mode);
    write_output(c, "intervention.json", dump_report(envelope("intervene", cfg, seeds, inputs, result)));
    const auto text = render_intervention_table(r);
    write_output(c, "intervention.txt", text);
    out << text;
    return kOk;
}

int cmd_synth(const Command &c, std::ostream &out) {
    const auto cfg = effective_config(c);
    const int rounds = static_cast<int>(cfg.get_int("rounds", 5));
    const int patterns = static_cast<int>(cfg.get_int("patterns", 4));
    const double density = cfg.get_double("density", 0.3);
    const auto n = cfg.get_uint("n", 2000);
    const auto seed = cfg.get_uint("seed", 0);
    const auto envs = cfg.get_uint("environments", 1);
    const double shift = cfg.get_double("shift", 0.0);
    SampleOptions opts;
    opts.max_parents = cfg.get_uint("max_parents", 3);
    if (rounds < 1 || patterns < 1) throw ValidationError("--rounds and --patterns must be at least 1");
    if (envs < 1) throw ValidationError("--environments must be at least 1");
    if (n < 1) throw ValidationError("--n must be at least 1");

    auto model = sample_model(rounds, patterns, density, seed, opts);
    for (std::uint64_t e = 1; e < envs; ++e) {
        if (shift > 0.0) {
            if (model.outcome_parents.empty()) throw ValidationError("cannot shift: the sampled outcome has no parents");
            add_shifted_environment(model, model.outcome_parents.front(), shift);
        } else {
            add_invariant_environment(model, derive_seed(seed, 100 + e), opts);
        }
    }
    const auto data = sample_environments(model, n, derive_seed(seed, 1));
    PatternSchema schema;
    for (int p = 1; p <= patterns; ++p) schema.patterns.push_back(fmt::format("P{}", p));
    schema.rounds = rounds;
    schema.outcomes = {model.variables[model.outcome].name};

    std::ostringstream traj, csv;
    write_trajectories(traj, to_trajectories(data));
    write_csv(csv, data);
    std::vector<std::string> labels;
    for (const auto &v : model.variables) labels.push_back(v.label());
    const auto cpdag = true_cpdag(model, temporal_mask(model.variables));
    const json result = {{"model", to_json(model)},
                         {"true_cpdag", serialize(cpdag, labels)},
                         {"outcome_parents", labels_of(data, model.outcome_parents)},
                         {"rows", data.n_rows()}};
    write_output(c, "model.json", dump_report(to_json(model)));
    write_output(c, "schema.json", dump_report(schema.to_json()));
    write_output(c, "trajectories.jsonl", traj.str());
    write_output(c, "dataset.csv", csv.str());
    write_output(c, "synth.json", dump_report(envelope("synth", cfg, {{"seed", seed}}, json::object(), result)));
    out << fmt::format("{} variables, {} edges, {} rows; outcome parents {{{}}}\n", model.n_vars(),
                       model.dag.edge_count(), data.n_rows(), fmt::join(labels_of(data, model.outcome_parents), ", "));
    return kOk;
}

InterventionSpec parse_interventions(const RunConfig &cfg) {
    InterventionSpec spec;
    for (const auto &item : cfg.get_list("interventions", {})) {
        const auto colon = item.find(':');
        const auto f = parse_factor(item.substr(0, colon));
        const auto mode = colon == std::string::npos ? InterventionMode::Emphasize
                                                     : parse_intervention_mode(item.substr(colon + 1));
        spec.targets.push_back({f.pattern, f.round, mode});
    }
    return spec;
}

std::unique_ptr<PatternMatcher> make_matcher(const RunConfig &cfg, const std::string &kind, GenerationBackend &backend,
                                             const SelfRefineConfig &rc, std::uint64_t seed) {
    if (kind == "keyword") {
        std::map<std::string, std::vector<std::string>> words;
        for (const auto &[k, v] : cfg.values()) {
            if (k.rfind("keywords.", 0) == 0) words[k.substr(9)] = cfg.get_list(k, {});
        }
        if (words.empty()) throw ValidationError("keyword matcher needs keywords.<pattern> = word, ... settings");
        return std::make_unique<KeywordMatcher>(std::move(words));
    }
    if (kind == "backend") return std::make_unique<BackendMatcher>(backend, rc.prompts.matcher, derive_seed(seed, 7));
    if (kind == "constant:0") return std::make_unique<ConstantMatcher>(0);
    if (kind == "constant:1") return std::make_unique<ConstantMatcher>(1);
    throw ValidationError("unknown matcher '" + kind + "' (use none, keyword, backend, constant:0, constant:1)");
}

int cmd_cesr(const Command &c, std::ostream &out) {
    const auto cfg = effective_config(c);
    const auto queries_path = require(cfg, "queries");
    const auto rc = refine_config(cfg);
    const auto spec = parse_interventions(cfg);
    spec.validate(rc.t_max);
    const auto matcher_kind = cfg.get("matcher", "none");
    const auto seed = cfg.get_uint("seed", 0);
    std::optional<PatternSchema> schema;
    if (matcher_kind != "none") {
        schema = PatternSchema::load(require(cfg, "schema"));
        if (schema->rounds != rc.t_max) throw InconsistentSchema("schema rounds must equal --t-max");
        for (const auto &[p, d] : rc.definitions) schema->definitions.emplace(p, d);
    }
    const auto queries = read_queries(queries_path);
    auto backend = make_backend(cfg.get("backend", "mock"));
    const auto model = cfg.get("model", backend->name());

    std::vector<RawTrajectory> raws(queries.size());
    parallel_for(queries.size(), c.jobs, [&](std::size_t i) {
        const auto &q = queries[i];
        raws[i] = run_self_refine({q.query, q.ground_truth, q.id, model, q.task_id}, rc, *backend, spec,
                                  derive_seed(seed, i));
    });
    std::ostringstream raw_out;
    write_raw_trajectories(raw_out, raws);
    write_output(c, "raw.jsonl", raw_out.str());

    json per = json::array();
    for (const auto &t : raws) {
        per.push_back({{"trajectory_id", t.trajectory_id},
                       {"final_answer", extract_final_answer(t.final_response())},
                       {"correct", t.ground_truth ? json(score_outcome(
                                                             t, {{"correct", OutcomeKind::ExactMatch,
                                                                  MetricDirection::HigherBetter}})
                                                             .at("correct"))
                                                  : json(nullptr)}});
    }
    json result = {{"trajectories", per},
                   {"backend", backend->name()},
                   {"backend_calls_expected", expected_backend_calls(rc) * queries.size()}};
    if (auto *mock = dynamic_cast<MockBackend *>(backend.get())) result["backend_calls"] = mock->calls();

    if (schema) {
        auto matcher = make_matcher(cfg, matcher_kind, *backend, rc, seed);
        std::vector<Trajectory> annotated;
        std::ostringstream reasons;
        for (const auto &t : raws) {
            auto a = annotate(t, *schema, *matcher);
            for (const auto &o : schema->outcomes) {
                if (o == "correct" && t.ground_truth) {
                    a.trajectory.outcomes[o] =
                        score_outcome(t, {{o, OutcomeKind::ExactMatch, MetricDirection::HigherBetter}}).at(o);
                }
            }
            for (const auto &m : a.reasons) {
                reasons << json{{"trajectory_id", t.trajectory_id}, {"round", m.round}, {"pattern", m.pattern},
                                {"bit", m.bit}, {"reason", m.reason}}
                               .dump()
                        << '\n';
            }
            annotated.push_back(std::move(a.trajectory));
        }
        std::ostringstream traj;
        write_trajectories(traj, annotated);
        write_output(c, "trajectories.jsonl", traj.str());
        write_output(c, "annotation_reasons.jsonl", reasons.str());
        result["annotated"] = annotated.size();
    }
    write_output(c, "cesr.json",
                 dump_report(envelope("cesr", cfg, {{"seed", seed}}, {{"queries", file_hash(queries_path)}}, result)));
    out << fmt::format("{} trajectories written to {}\n", raws.size(), (fs::path(c.out_dir) / "raw.jsonl").string());
    return kOk;
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Causal analysis of self-reflection trajectories", "reflcausal"};
    app.require_subcommand(1);
    app.footer(fmt::format("Exit codes: 0 success, 1 validation error, 2 runtime failure.\n"
                           "The backend setting can be overridden with ${}.",
                           kBackendEnv));

    std::map<std::string, Command> cmds;
    auto make = [&](const std::string &name, const std::string &desc) -> Command & {
        auto &c = cmds[name];
        c.app = app.add_subcommand(name, desc);
        add_common(c);
        return c;
    };
    auto data_opts = [](Command &c) {
        add(c, "data", "", "trajectory file (JSON lines)");
        add(c, "schema", "", "pattern schema JSON; inferred from the first record when absent");
        add(c, "outcome", "", "outcome name; required when the schema lists several");
    };

    {
        auto &c = make("ingest", "validate trajectories and write the flattened binary dataset");
        data_opts(c);
    }
    {
        auto &c = make("discover", "greedy equivalence search on the full dataset under the temporal mask");
        data_opts(c);
        add(c, "score", "BDs", "BDs, BDeu, BIC or K2");
        add(c, "alpha", "1", "equivalent sample size");
        add(c, "max_parents", "", "parent cap per node");
        add(c, "seed", "0", "seed");
    }
    {
        auto &c = make("verify", "ensemble discovery, then CVLL selection, uniqueness and stability");
        data_opts(c);
        add(c, "k", "5", "folds");
        add(c, "scores", "BDs,BDeu,BIC,K2", "comma-separated scores");
        add(c, "alpha", "1", "equivalent sample size and CVLL pseudo-count");
        add(c, "seed", "0", "seed");
        add(c, "stability_folds", "20", "folds for the stability stage");
        add(c, "stability_groups", "4", "fold groups for the stability stage");
        add(c, "max_parents", "", "parent cap per node during discovery");
        add(c, "candidates", "", "skip discovery; ';'-separated sets of comma-separated labels");
    }
    {
        auto &c = make("stability", "stability analysis of a given parent set");
        data_opts(c);
        add(c, "parents", "", "comma-separated parent labels, e.g. CO@2,Sp@4");
        add(c, "stability_folds", "20", "folds");
        add(c, "stability_groups", "4", "fold groups");
        add(c, "seed", "0", "seed");
    }
    {
        auto &c = make("intervene", "factorial prompt interventions and Cochran's Q");
        c.design = true;
        c.prefixed_keys = true;
        c.app->add_option("--design", c.design_path, "design file (factors = CO@2, Sp@4; mode = emphasize)");
        add(c, "factors", "", "comma-separated NAME@ROUND factors");
        add(c, "mode", "emphasize", "emphasize or suppress");
        add(c, "outcomes", "", "precomputed outcomes (JSON lines: subject, model, condition, outcome)");
        add(c, "queries", "", "queries for live runs (JSON lines: id, query, ground_truth)");
        add(c, "backend", "mock", "mock, mock:echo, mock:fixed=TEXT, http://host:port/path or cmd:COMMAND");
        add(c, "model", "", "model id recorded with outcomes [backend name]");
        add(c, "t_max", "5", "refinement rounds");
        add(c, "resample_count", "20", "samples per step");
        add(c, "similarity_threshold", "0.5", "clustering threshold");
        add(c, "prompts", "", "prompt template directory");
        add(c, "seed", "0", "seed");
    }
    {
        auto &c = make("synth", "sample a planted network and write model and datasets");
        add(c, "rounds", "5", "rounds");
        add(c, "patterns", "4", "patterns per round");
        add(c, "density", "0.3", "edge probability");
        add(c, "n", "2000", "rows per environment");
        add(c, "environments", "1", "environments");
        add(c, "shift", "0", "outcome shift in extra environments; 0 keeps the outcome invariant");
        add(c, "max_parents", "3", "parent cap per node");
        add(c, "seed", "0", "seed");
    }
    {
        auto &c = make("cesr", "consistency-enhanced self-refine runs and optional annotation");
        c.prefixed_keys = true;
        add(c, "queries", "", "queries (JSON lines: id, query, ground_truth)");
        add(c, "backend", "mock", "mock, mock:echo, mock:fixed=TEXT, http://host:port/path or cmd:COMMAND");
        add(c, "model", "", "model id [backend name]");
        add(c, "t_max", "5", "refinement rounds");
        add(c, "resample_count", "20", "samples per step");
        add(c, "similarity_threshold", "0.5", "clustering threshold");
        add(c, "prompts", "", "prompt template directory");
        add(c, "interventions", "", "comma-separated NAME@ROUND[:emphasize|suppress]");
        add(c, "matcher", "none", "none, keyword, backend, constant:0 or constant:1");
        add(c, "schema", "", "pattern schema for annotation");
        add(c, "seed", "0", "seed");
    }

    std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(rest.begin(), rest.end());
    try {
        app.parse(rest);
    } catch (const CLI::CallForHelp &) {
        CLI::App *target = &app;
        for (auto *s : app.get_subcommands()) target = s;
        out << target->help();
        return kOk;
    } catch (const CLI::ParseError &e) {
        CLI::App *target = &app;
        for (auto *s : app.get_subcommands()) target = s;
        err << "error: " << e.what() << "\n\n" << target->help();
        return kValidation;
    }

    try {
        for (auto &[name, c] : cmds) {
            if (!c.app->parsed()) continue;
            if (name == "ingest") return cmd_ingest(c, out);
            if (name == "discover") return cmd_discover(c, out);
            if (name == "verify") return cmd_verify(c, out);
            if (name == "stability") return cmd_stability(c, out);
            if (name == "intervene") return cmd_intervene(c, out);
            if (name == "synth") return cmd_synth(c, out);
            if (name == "cesr") return cmd_cesr(c, out);
        }
    } catch (const ValidationError &e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception &e) {
        err << "failure: " << e.what() << "\n";
        return kRuntime;
    }
    return kRuntime;
}

} // namespace reflcausal::cli
