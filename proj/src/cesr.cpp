#include "reflcausal/cesr.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "reflcausal/rng.hpp"

namespace reflcausal {

std::map<std::string, double> GenerationBackend::measure(const std::string &, const std::string &) { return {}; }

// ---------------------------------------------------------------- clustering

namespace {

std::set<std::string> token_set(const std::string &s) {
    std::set<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) {
        std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) { return std::tolower(c); });
        out.insert(std::move(tok));
    }
    return out;
}

std::size_t find_root(std::vector<std::size_t> &parent, std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
}

} // namespace

double token_jaccard(const std::string &a, const std::string &b) {
    const auto ta = token_set(a), tb = token_set(b);
    if (ta.empty() && tb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto &t : ta) inter += tb.count(t);
    return static_cast<double>(inter) / static_cast<double>(ta.size() + tb.size() - inter);
}

Representative select_representative(const std::vector<std::string> &samples, double threshold,
                                     const SimilarityFn &similarity) {
    const std::size_t n = samples.size();
    if (n == 0) throw DomainError("cannot select a representative from no samples");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw DomainError("similarity threshold must lie in [0, 1]");

    std::vector<double> sim(n * n, 1.0);
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = samples[i] == samples[j] ? 1.0 : similarity(samples[i], samples[j]);
            sim[i * n + j] = sim[j * n + i] = s;
            if (s >= threshold) parent[find_root(parent, i)] = find_root(parent, j);
        }
    }
    std::map<std::size_t, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < n; ++i) clusters[find_root(parent, i)].push_back(i);

    // Mean similarity of a member to the other members of its cluster.
    auto member_mean = [&](const std::vector<std::size_t> &c, std::size_t i) {
        if (c.size() == 1) return 1.0;
        double s = 0.0;
        for (auto j : c) {
            if (j != i) s += sim[i * n + j];
        }
        return s / static_cast<double>(c.size() - 1);
    };
    auto cluster_mean = [&](const std::vector<std::size_t> &c) {
        double s = 0.0;
        for (auto i : c) s += member_mean(c, i);
        return s / static_cast<double>(c.size());
    };

    const std::vector<std::size_t> *best = nullptr;
    double best_mean = 0.0;
    for (const auto &[root, members] : clusters) {
        const double m = cluster_mean(members);
        const bool wins = !best || members.size() > best->size() ||
                          (members.size() == best->size() &&
                           (m > best_mean || (m == best_mean && members.front() < best->front())));
        if (wins) {
            best = &members;
            best_mean = m;
        }
    }
    Representative r;
    r.stats = {clusters.size(), best->size()};
    r.index = best->front();
    double top = member_mean(*best, r.index);
    for (auto i : *best) {
        const double m = member_mean(*best, i);
        if (m > top) {
            top = m;
            r.index = i;
        }
    }
    r.text = samples[r.index];
    return r;
}

// ---------------------------------------------------------------- prompts

PromptSet PromptSet::defaults() {
    PromptSet p;
    p.initial = R"(Work through the task below. Show the reasoning you use and finish with a line that states the final answer.

Task:
{x}
)";
    p.feedback = R"(Read the task and the response to it. List the concrete problems you find: mistakes, missing steps, vague or badly ordered passages. For each one, say briefly how it could be fixed. Do not write a new response yourself.
{constraints}
Task:
{x}

Response:
{history}
)";
    p.refine = R"(Below is a task followed by your earlier responses and the feedback each one received, oldest first. Write an improved response to the task: keep the parts that hold up, repair the points raised in the most recent feedback, and finish with a line that states the final answer.
{constraints}
Task:
{x}

Earlier responses and feedback:
{history}
)";
    p.emphasize = "In this round, pay particular attention to {pattern}: {definition}\n";
    p.suppress = "In this round, steer clear of {pattern}: {definition}\n";
    p.matcher = R"(You will judge one round of a critique-and-revision record for a single behaviour.

Behaviour: {pattern}
What it looks like: {definition}

Task:
{x}

Critique given in round {round}:
{feedback}

Revision written in round {round}:
{response}

Answer 1 if the behaviour is clearly present in this round and 0 if it is not. Put the digit first, then one sentence explaining the decision.
)";
    return p;
}

PromptSet PromptSet::load(const std::filesystem::path &dir) {
    PromptSet p = defaults();
    auto read = [&](const char *file, std::string &into) {
        std::ifstream in(dir / file, std::ios::binary);
        if (!in) return;
        std::ostringstream ss;
        ss << in.rdbuf();
        into = ss.str();
    };
    read("initial.txt", p.initial);
    read("feedback.txt", p.feedback);
    read("refine.txt", p.refine);
    read("emphasize.txt", p.emphasize);
    read("suppress.txt", p.suppress);
    read("matcher.txt", p.matcher);
    return p;
}

std::string render_template(const std::string &tmpl, const std::map<std::string, std::string> &values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i + 1);
            if (close != std::string::npos) {
                auto it = values.find(tmpl.substr(i + 1, close - i - 1));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

// ---------------------------------------------------------------- self-refine

void SelfRefineConfig::validate() const {
    if (t_max < 1) throw ValidationError("t_max must be at least 1");
    if (resample_count < 1) throw ValidationError("resample_count must be at least 1");
    if (!(similarity_threshold >= 0.0 && similarity_threshold <= 1.0)) {
        throw ValidationError("similarity_threshold must lie in [0, 1]");
    }
}

std::size_t expected_backend_calls(const SelfRefineConfig &cfg) {
    return (2 * static_cast<std::size_t>(cfg.t_max) + 1) * cfg.resample_count;
}

BackendFailure::BackendFailure(std::size_t step, const std::string &cause, RawTrajectory partial)
    : Error(fmt::format("backend failed at step {}: {}", step, cause)), step_(step), partial_(std::move(partial)) {}

namespace {

std::string constraint_clauses(const SelfRefineConfig &cfg, const InterventionSpec &spec, int round) {
    std::string out;
    for (const auto *t : spec.at_round(round)) {
        auto it = cfg.definitions.find(t->pattern);
        const std::string def = it == cfg.definitions.end() ? t->pattern : it->second;
        const auto &tmpl = t->mode == InterventionMode::Emphasize ? cfg.prompts.emphasize : cfg.prompts.suppress;
        out += render_template(tmpl, {{"pattern", t->pattern}, {"definition", def}});
    }
    return out;
}

std::string refine_history(const RawTrajectory &t) {
    std::string h = "[response 0]\n" + t.initial + "\n";
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        h += fmt::format("\n[feedback {}]\n{}\n", i, t.steps[i].feedback);
        if (!t.steps[i].response.empty()) h += fmt::format("\n[response {}]\n{}\n", i + 1, t.steps[i].response);
    }
    return h;
}

} // namespace

RawTrajectory run_self_refine(const RefineRequest &request, const SelfRefineConfig &cfg, GenerationBackend &backend,
                              const InterventionSpec &intervention, std::uint64_t seed) {
    cfg.validate();
    intervention.validate(cfg.t_max);

    RawTrajectory t;
    t.trajectory_id = request.trajectory_id;
    t.model_id = request.model_id;
    t.task_id = request.task_id;
    t.query = request.query;
    t.ground_truth = request.ground_truth;

    std::size_t step = 0;
    auto draw = [&](const std::string &prompt) {
        std::vector<std::string> samples;
        samples.reserve(cfg.resample_count);
        const std::uint64_t step_seed = derive_seed(seed, step);
        for (std::size_t i = 0; i < cfg.resample_count; ++i) {
            std::vector<std::string> one;
            try {
                one = backend.generate(prompt, 1, derive_seed(step_seed, i));
            } catch (const std::exception &e) {
                throw BackendFailure(step, e.what(), t);
            }
            if (one.size() != 1) {
                throw BackendFailure(step, fmt::format("expected 1 sample, got {}", one.size()), t);
            }
            samples.push_back(std::move(one.front()));
        }
        ++step;
        return select_representative(samples, cfg.similarity_threshold);
    };
    auto measure = [&](const std::string &prompt, const std::string &response) {
        try {
            return backend.measure(prompt, response);
        } catch (const std::exception &e) {
            throw BackendFailure(step, e.what(), t);
        }
    };

    t.initial_prompt = render_template(cfg.prompts.initial, {{"x", t.query}});
    auto y0 = draw(t.initial_prompt);
    t.initial = y0.text;
    t.initial_stats = y0.stats;
    t.initial_uncertainty = measure(t.initial_prompt, t.initial);

    for (int round = 1; round <= cfg.t_max; ++round) {
        const std::string constraints = constraint_clauses(cfg, intervention, round);
        RefineStep s;
        s.feedback_prompt = render_template(cfg.prompts.feedback, {{"x", t.query},
                                                                   {"history", t.final_response()},
                                                                   {"constraints", constraints}});
        auto fb = draw(s.feedback_prompt);
        s.feedback = fb.text;
        s.feedback_stats = fb.stats;
        t.steps.push_back(s);

        auto &cur = t.steps.back();
        cur.refine_prompt = render_template(cfg.prompts.refine,
                                            {{"x", t.query}, {"history", refine_history(t)}, {"constraints", constraints}});
        auto y = draw(cur.refine_prompt);
        cur.response = y.text;
        cur.response_stats = y.stats;
        cur.uncertainty = measure(cur.refine_prompt, cur.response);
    }
    return t;
}

namespace {

nlohmann::json stats_json(const ClusterStats &s) {
    return {{"n_clusters", s.n_clusters}, {"largest_size", s.largest_size}};
}

ClusterStats stats_from(const nlohmann::json &j) {
    return {j.at("n_clusters").get<std::size_t>(), j.at("largest_size").get<std::size_t>()};
}

} // namespace

nlohmann::json to_json(const RawTrajectory &t) {
    using nlohmann::json;
    json steps = json::array();
    for (const auto &s : t.steps) {
        steps.push_back({{"feedback_prompt", s.feedback_prompt},
                         {"feedback", s.feedback},
                         {"feedback_stats", stats_json(s.feedback_stats)},
                         {"refine_prompt", s.refine_prompt},
                         {"response", s.response},
                         {"response_stats", stats_json(s.response_stats)},
                         {"uncertainty", s.uncertainty}});
    }
    return {{"trajectory_id", t.trajectory_id},
            {"model_id", t.model_id},
            {"task_id", t.task_id},
            {"query", t.query},
            {"ground_truth", t.ground_truth ? json(*t.ground_truth) : json(nullptr)},
            {"initial_prompt", t.initial_prompt},
            {"initial", t.initial},
            {"initial_stats", stats_json(t.initial_stats)},
            {"initial_uncertainty", t.initial_uncertainty},
            {"steps", steps}};
}

RawTrajectory raw_trajectory_from_json(const nlohmann::json &j) {
    RawTrajectory t;
    try {
        t.trajectory_id = j.at("trajectory_id").get<std::string>();
        t.model_id = j.value("model_id", "");
        t.task_id = j.value("task_id", "");
        t.query = j.at("query").get<std::string>();
        if (j.contains("ground_truth") && !j["ground_truth"].is_null()) t.ground_truth = j["ground_truth"].get<std::string>();
        t.initial_prompt = j.value("initial_prompt", "");
        t.initial = j.at("initial").get<std::string>();
        t.initial_stats = stats_from(j.at("initial_stats"));
        t.initial_uncertainty = j.value("initial_uncertainty", std::map<std::string, double>{});
        for (const auto &s : j.at("steps")) {
            RefineStep r;
            r.feedback_prompt = s.value("feedback_prompt", "");
            r.feedback = s.at("feedback").get<std::string>();
            r.feedback_stats = stats_from(s.at("feedback_stats"));
            r.refine_prompt = s.value("refine_prompt", "");
            r.response = s.at("response").get<std::string>();
            r.response_stats = stats_from(s.at("response_stats"));
            r.uncertainty = s.value("uncertainty", std::map<std::string, double>{});
            t.steps.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception &e) {
        throw MalformedRecord(0, e.what());
    }
    return t;
}

void write_raw_trajectories(std::ostream &out, const std::vector<RawTrajectory> &ts) {
    for (const auto &t : ts) out << to_json(t).dump() << '\n';
}

std::vector<RawTrajectory> read_raw_trajectories(std::istream &in) {
    std::vector<RawTrajectory> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(raw_trajectory_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception &e) {
            throw MalformedRecord(n, e.what());
        } catch (const MalformedRecord &e) {
            throw MalformedRecord(n, e.reason());
        }
    }
    return out;
}

// ---------------------------------------------------------------- annotation

MatchResult ConstantMatcher::matches(const MatchContext &, const std::string &, const std::string &) {
    return {bit_, "constant"};
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

} // namespace

KeywordMatcher::KeywordMatcher(std::map<std::string, std::vector<std::string>> keywords) : keywords_(std::move(keywords)) {
    for (auto &[p, words] : keywords_) {
        for (auto &w : words) w = lower(w);
    }
}

MatchResult KeywordMatcher::matches(const MatchContext &ctx, const std::string &pattern, const std::string &) {
    auto it = keywords_.find(pattern);
    if (it == keywords_.end()) return {0, "no keywords"};
    const std::string fb = lower(ctx.feedback), resp = lower(ctx.response);
    for (const auto &w : it->second) {
        if (fb.find(w) != std::string::npos) return {1, "feedback contains '" + w + "'"};
        if (resp.find(w) != std::string::npos) return {1, "response contains '" + w + "'"};
    }
    return {0, "no keyword found"};
}

BackendMatcher::BackendMatcher(GenerationBackend &backend, std::string prompt_template, std::uint64_t seed)
    : backend_(backend), template_(std::move(prompt_template)), seed_(seed) {}

MatchResult BackendMatcher::matches(const MatchContext &ctx, const std::string &pattern, const std::string &definition) {
    const std::string prompt = render_template(template_, {{"pattern", pattern},
                                                           {"definition", definition},
                                                           {"x", ctx.query},
                                                           {"round", std::to_string(ctx.round)},
                                                           {"feedback", ctx.feedback},
                                                           {"response", ctx.response}});
    std::vector<std::string> reply;
    try {
        reply = backend_.generate(prompt, 1, derive_seed(seed_, static_cast<std::uint64_t>(ctx.round)));
    } catch (const std::exception &e) {
        throw MatcherFailure(pattern, ctx.round, e.what());
    }
    if (reply.size() != 1) throw MatcherFailure(pattern, ctx.round, "backend returned no reply");
    std::string text = reply.front();
    const auto start = text.find_first_not_of(" \t\r\n");
    if (start == std::string::npos) throw MatcherFailure(pattern, ctx.round, "empty reply");
    text = text.substr(start);
    const std::string head = lower(text.substr(0, 3));
    auto rest = [&](std::size_t n) {
        auto r = text.substr(n);
        const auto b = r.find_first_not_of(" \t\r\n:.-");
        return b == std::string::npos ? std::string() : r.substr(b);
    };
    if (text[0] == '1') return {1, rest(1)};
    if (text[0] == '0') return {0, rest(1)};
    if (head == "yes") return {1, rest(3)};
    if (head.rfind("no", 0) == 0) return {0, rest(2)};
    throw MatcherFailure(pattern, ctx.round, "reply does not start with 1/0: " + text.substr(0, 40));
}

Annotation annotate(const RawTrajectory &raw, const PatternSchema &schema, PatternMatcher &matcher) {
    if (static_cast<int>(raw.steps.size()) != schema.rounds) {
        throw InconsistentSchema(fmt::format("trajectory '{}' has {} rounds; the schema declares {}",
                                             raw.trajectory_id, raw.steps.size(), schema.rounds));
    }
    Annotation a;
    a.trajectory.trajectory_id = raw.trajectory_id;
    a.trajectory.model_id = raw.model_id;
    a.trajectory.task_id = raw.task_id;
    const std::map<std::string, double> *prev = &raw.initial_uncertainty;
    for (int r = 1; r <= schema.rounds; ++r) {
        const auto &step = raw.steps[static_cast<std::size_t>(r - 1)];
        RoundRecord rec;
        rec.round = r;
        const MatchContext ctx{raw.query, r, step.feedback, step.response};
        for (const auto &p : schema.patterns) {
            MatchResult m;
            try {
                m = matcher.matches(ctx, p, schema.description(p));
            } catch (const MatcherFailure &) {
                throw;
            } catch (const std::exception &e) {
                throw MatcherFailure(p, r, e.what());
            }
            if (m.bit != 0 && m.bit != 1) throw MatcherFailure(p, r, "matcher returned a non-binary value");
            rec.pattern_bits[p] = m.bit;
            a.reasons.push_back({r, p, m.bit, m.reason});
        }
        for (const auto &metric : schema.metrics) {
            auto before = prev->find(metric);
            auto after = step.uncertainty.find(metric);
            if (before == prev->end() || after == step.uncertainty.end()) throw MissingMetricValues(metric);
            rec.uncertainty_bits[metric] = after->second > before->second ? 1 : 0;
        }
        prev = &step.uncertainty;
        a.trajectory.rounds.push_back(std::move(rec));
    }
    return a;
}

// ---------------------------------------------------------------- outcomes

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool unwrap(std::string &s, const std::string &open, const std::string &close) {
    if (s.size() >= open.size() + close.size() && s.compare(0, open.size(), open) == 0 &&
        s.compare(s.size() - close.size(), close.size(), close) == 0) {
        s = trim(s.substr(open.size(), s.size() - open.size() - close.size()));
        return true;
    }
    return false;
}

// Content of the brace group starting at `open` (which must be '{').
std::optional<std::string> brace_group(const std::string &s, std::size_t open) {
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        if (s[i] == '{') ++depth;
        if (s[i] == '}' && --depth == 0) return s.substr(open + 1, i - open - 1);
    }
    return std::nullopt;
}

} // namespace

std::string normalize_answer(const std::string &s) {
    std::string out = trim(s);
    bool changed = true;
    while (changed) {
        changed = false;
        while (!out.empty() && std::string(".,;:!").find(out.back()) != std::string::npos) {
            out.pop_back();
            out = trim(out);
            changed = true;
        }
        changed |= unwrap(out, "$$", "$$") || unwrap(out, "$", "$") || unwrap(out, "\\(", "\\)") ||
                   unwrap(out, "\\[", "\\]");
        if (out.rfind("\\boxed{", 0) == 0) {
            auto inner = brace_group(out, 6);
            if (inner && 7 + inner->size() + 1 == out.size()) {
                out = trim(*inner);
                changed = true;
            }
        }
    }
    return out;
}

std::string extract_final_answer(const std::string &response) {
    const auto boxed = response.rfind("\\boxed{");
    if (boxed != std::string::npos) {
        if (auto inner = brace_group(response, boxed + 6)) return *inner;
    }
    const std::string low = lower(response);
    const auto ans = low.rfind("answer:");
    if (ans != std::string::npos) {
        auto tail = response.substr(ans + 7);
        const auto nl = tail.find('\n', tail.find_first_not_of(" \t"));
        return trim(nl == std::string::npos ? tail : tail.substr(0, nl));
    }
    return trim(response);
}

std::map<std::string, int> score_outcome(const RawTrajectory &raw, const std::vector<OutcomeRule> &rules,
                                         const std::map<std::string, MetricPair> &metric_inputs) {
    std::map<std::string, int> out;
    for (const auto &rule : rules) {
        if (rule.kind == OutcomeKind::ExactMatch) {
            if (!raw.ground_truth) throw MissingGroundTruth();
            out[rule.name] =
                normalize_answer(extract_final_answer(raw.final_response())) == normalize_answer(*raw.ground_truth);
        } else {
            auto it = metric_inputs.find(rule.name);
            if (it == metric_inputs.end()) throw MissingMetricValues(rule.name);
            const auto [initial, final] = it->second;
            out[rule.name] = rule.direction == MetricDirection::HigherBetter ? final > initial : final < initial;
        }
    }
    return out;
}

} // namespace reflcausal
