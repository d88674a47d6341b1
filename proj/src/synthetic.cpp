#include "reflcausal/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "reflcausal/errors.hpp"
#include "reflcausal/rng.hpp"

namespace reflcausal {

namespace {

constexpr double kFloor = 0.05;
constexpr double kSpan = 0.9;

Cpt draw_mechanism(std::size_t n_parents, Rng &rng, const SampleOptions &opts) {
    if (n_parents == 0) return {uniform_real(rng, 0.2, 0.8)};
    std::vector<double> w(n_parents);
    double sum = 0.0;
    for (auto &x : w) {
        x = uniform_real(rng, opts.min_weight, opts.max_weight) * (bernoulli(rng, 0.5) ? 1.0 : -1.0);
        sum += x;
    }
    const double bias = -sum / 2.0 + uniform_real(rng, -0.5, 0.5);
    Cpt cpt(std::size_t{1} << n_parents);
    for (std::size_t j = 0; j < cpt.size(); ++j) {
        double z = bias;
        for (std::size_t i = 0; i < n_parents; ++i) {
            if (j >> i & 1U) z += w[i];
        }
        cpt[j] = kFloor + kSpan / (1.0 + std::exp(-z));
    }
    return cpt;
}

std::vector<std::size_t> topological_order(const Pdag &dag) {
    const std::size_t n = dag.n_vars();
    std::vector<std::size_t> indegree(n, 0), order;
    for (std::size_t v = 0; v < n; ++v) indegree[v] = dag.parents(v).size();
    std::vector<std::uint8_t> done(n, 0);
    while (order.size() < n) {
        std::size_t pick = n;
        for (std::size_t v = 0; v < n; ++v) {
            if (!done[v] && indegree[v] == 0) {
                pick = v;
                break;
            }
        }
        if (pick == n) throw ConstraintViolation("planted graph has a cycle");
        done[pick] = 1;
        order.push_back(pick);
        for (auto c : dag.children(pick)) --indegree[c];
    }
    return order;
}

std::size_t config_of(const NodeSet &parents, const std::vector<std::uint8_t> &values) {
    std::size_t j = 0;
    for (std::size_t i = 0; i < parents.size(); ++i) j |= static_cast<std::size_t>(values[parents[i]]) << i;
    return j;
}

} // namespace

const Cpt &PlantedModel::mechanism(std::size_t v, std::size_t environment) const {
    if (environment >= environments.size()) throw DomainError("environment index out of range");
    const auto &ov = environments[environment].overrides;
    auto it = ov.find(v);
    return it == ov.end() ? cpts.at(v) : it->second;
}

PlantedModel make_model(std::vector<VariableId> variables, const Pdag &dag, std::uint64_t seed,
                        const SampleOptions &opts) {
    if (variables.empty() || variables.back().kind != VariableKind::Outcome) {
        throw DomainError("the last planted variable must be the outcome");
    }
    if (dag.n_vars() != variables.size() || !dag.undirected_edges().empty()) {
        throw DomainError("planted graph must be a DAG over the given variables");
    }
    PlantedModel m;
    m.variables = std::move(variables);
    m.dag = dag;
    m.outcome = m.variables.size() - 1;
    m.outcome_parents = dag.parents(m.outcome);
    if (!dag.children(m.outcome).empty()) throw DomainError("the outcome must be a sink");
    Rng rng(derive_seed(seed, 1));
    for (std::size_t v = 0; v < m.n_vars(); ++v) m.cpts.push_back(draw_mechanism(dag.parents(v).size(), rng, opts));
    return m;
}

PlantedModel sample_model(int n_rounds, int n_patterns, double edge_density, std::uint64_t seed,
                          const SampleOptions &opts) {
    if (n_rounds < 1 || n_patterns < 1) throw DomainError("need at least one round and one pattern");
    if (!(edge_density > 0.0 && edge_density <= 1.0)) throw DomainError("edge density must lie in (0, 1]");
    std::vector<VariableId> vars;
    for (int r = 1; r <= n_rounds; ++r) {
        for (int p = 1; p <= n_patterns; ++p) {
            vars.push_back({VariableKind::SemanticPattern, "P" + std::to_string(p), r});
        }
    }
    std::sort(vars.begin(), vars.end(), column_order_less);
    vars.push_back({VariableKind::Outcome, "Y", std::nullopt});

    Rng rng(derive_seed(seed, 0));
    Pdag dag(vars.size());
    for (std::size_t child = 1; child < vars.size(); ++child) {
        std::vector<std::size_t> candidates;
        for (std::size_t p = 0; p < child; ++p) candidates.push_back(p);
        shuffle(candidates, rng);
        std::size_t taken = 0;
        for (auto p : candidates) {
            const bool edge = bernoulli(rng, edge_density);
            if (edge && taken < opts.max_parents) {
                dag.add_directed(p, child);
                ++taken;
            }
        }
    }
    return make_model(std::move(vars), dag, seed, opts);
}

void add_invariant_environment(PlantedModel &model, std::uint64_t seed, const SampleOptions &opts) {
    Rng rng(derive_seed(seed, 2 + model.environments.size()));
    Environment env;
    for (std::size_t v = 0; v < model.n_vars(); ++v) {
        if (v == model.outcome) continue;
        env.overrides[v] = draw_mechanism(model.dag.parents(v).size(), rng, opts);
    }
    model.environments.push_back(std::move(env));
}

void add_shifted_environment(PlantedModel &model, std::size_t parent, double shift) {
    const NodeSet pa = model.dag.parents(model.outcome);
    auto it = std::find(pa.begin(), pa.end(), parent);
    if (it == pa.end()) throw DomainError("shifted variable is not an outcome parent");
    if (!(shift > 0.0 && shift <= 0.45)) throw DomainError("shift must lie in (0, 0.45]");
    const std::size_t bit = static_cast<std::size_t>(it - pa.begin());
    Cpt cpt = model.cpts[model.outcome];
    for (std::size_t j = 0; j < cpt.size(); ++j) {
        if (!(j >> bit & 1U)) continue;
        cpt[j] += cpt[j] <= 0.5 ? shift : -shift;
    }
    Environment env;
    env.overrides[model.outcome] = std::move(cpt);
    model.environments.push_back(std::move(env));
    model.invariant = false;
}

BinaryDataset forward_sample(const PlantedModel &model, std::size_t n, std::size_t environment, std::uint64_t seed) {
    if (environment >= model.environments.size()) throw DomainError("environment index out of range");
    const std::size_t nv = model.n_vars();
    const auto order = topological_order(model.dag);
    std::vector<NodeSet> parents(nv);
    for (std::size_t v = 0; v < nv; ++v) parents[v] = model.dag.parents(v);
    Rng rng(derive_seed(seed, 100 + environment));
    std::vector<std::vector<std::uint8_t>> cols(nv, std::vector<std::uint8_t>(n));
    std::vector<std::uint8_t> row(nv);
    for (std::size_t r = 0; r < n; ++r) {
        for (auto v : order) {
            const double p = model.mechanism(v, environment)[config_of(parents[v], row)];
            row[v] = bernoulli(rng, p) ? 1 : 0;
            cols[v][r] = row[v];
        }
    }
    return BinaryDataset(model.variables, std::move(cols), model.outcome);
}

BinaryDataset sample_environments(const PlantedModel &model, std::size_t n_per_environment, std::uint64_t seed) {
    std::vector<std::vector<std::uint8_t>> cols(model.n_vars());
    for (std::size_t e = 0; e < model.environments.size(); ++e) {
        const auto part = forward_sample(model, n_per_environment, e, seed);
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const auto col = part.column(c);
            cols[c].insert(cols[c].end(), col.begin(), col.end());
        }
    }
    return BinaryDataset(model.variables, std::move(cols), model.outcome);
}

std::vector<double> exact_joint(const PlantedModel &model, std::size_t environment) {
    const std::size_t nv = model.n_vars();
    if (nv > 20) throw DomainError("exact enumeration is limited to 20 variables");
    std::vector<NodeSet> parents(nv);
    for (std::size_t v = 0; v < nv; ++v) parents[v] = model.dag.parents(v);
    std::vector<double> joint(std::size_t{1} << nv);
    std::vector<std::uint8_t> values(nv);
    for (std::size_t x = 0; x < joint.size(); ++x) {
        for (std::size_t v = 0; v < nv; ++v) values[v] = static_cast<std::uint8_t>(x >> v & 1U);
        double p = 1.0;
        for (std::size_t v = 0; v < nv; ++v) {
            const double p1 = model.mechanism(v, environment)[config_of(parents[v], values)];
            p *= values[v] ? p1 : 1.0 - p1;
        }
        joint[x] = p;
    }
    return joint;
}

Pdag true_cpdag(const PlantedModel &model, const ConstraintMask &mask) {
    const Pdag c = cpdag_of_dag(model.dag);
    return mask.n_vars() == 0 ? c : complete(c, mask);
}

std::size_t structural_hamming(const Pdag &g1, const Pdag &g2) {
    if (g1.n_vars() != g2.n_vars()) throw DomainError("graphs have different variable sets");
    auto mark = [](const Pdag &g, std::size_t a, std::size_t b) {
        if (g.has_directed(a, b)) return 1;
        if (g.has_directed(b, a)) return 2;
        if (g.has_undirected(a, b)) return 3;
        return 0;
    };
    std::size_t d = 0;
    for (std::size_t a = 0; a < g1.n_vars(); ++a) {
        for (std::size_t b = a + 1; b < g1.n_vars(); ++b) d += mark(g1, a, b) != mark(g2, a, b);
    }
    return d;
}

ParentRecovery parent_recovery(const NodeSet &found, const NodeSet &truth) {
    NodeSet hit;
    std::set_intersection(found.begin(), found.end(), truth.begin(), truth.end(), std::back_inserter(hit));
    ParentRecovery r;
    r.precision = found.empty() ? 1.0 : static_cast<double>(hit.size()) / static_cast<double>(found.size());
    r.recall = truth.empty() ? 1.0 : static_cast<double>(hit.size()) / static_cast<double>(truth.size());
    return r;
}

nlohmann::json to_json(const PlantedModel &model) {
    using nlohmann::json;
    json vars = json::array(), edges = json::array(), mechs = json::object(), envs = json::array();
    for (const auto &v : model.variables) vars.push_back(v.label());
    for (auto [a, b] : model.dag.directed_edges()) {
        edges.push_back({model.variables[a].label(), model.variables[b].label()});
    }
    for (std::size_t v = 0; v < model.n_vars(); ++v) mechs[model.variables[v].label()] = model.cpts[v];
    for (std::size_t e = 1; e < model.environments.size(); ++e) {
        json ov = json::object();
        for (const auto &[v, cpt] : model.environments[e].overrides) ov[model.variables[v].label()] = cpt;
        envs.push_back(ov);
    }
    json parents = json::array();
    for (auto p : model.outcome_parents) parents.push_back(model.variables[p].label());
    return {{"variables", vars},
            {"edges", edges},
            {"outcome", model.variables[model.outcome].label()},
            {"outcome_parents", parents},
            {"mechanisms", mechs},
            {"environment_overrides", envs},
            {"invariant", model.invariant}};
}

} // namespace reflcausal
