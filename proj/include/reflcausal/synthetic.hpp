#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "reflcausal/dataset.hpp"
#include "reflcausal/graph.hpp"

namespace reflcausal {

/// P(X = 1 | parent configuration); entry j uses bit i of j for the value of
/// the i-th parent in ascending index order.
using Cpt = std::vector<double>;

struct Environment {
    std::map<std::size_t, Cpt> overrides; // variable -> replacement mechanism
};

/// Binary Bayesian network with known structure. Environment 0 is the
/// baseline; further environments replace selected mechanisms.
struct PlantedModel {
    std::vector<VariableId> variables; // dataset column order, outcome last
    Pdag dag;                          // directed only
    std::vector<Cpt> cpts;
    std::size_t outcome = 0;
    NodeSet outcome_parents;
    std::vector<Environment> environments{Environment{}};
    bool invariant = true; // outcome mechanism identical in every environment

    std::size_t n_vars() const { return variables.size(); }
    const Cpt &mechanism(std::size_t v, std::size_t environment) const;
};

struct SampleOptions {
    std::size_t max_parents = 3;
    double min_weight = 1.5; // |logit weight| range of each parent
    double max_weight = 3.0;
};

/// Layered random network over n_rounds x n_patterns pattern variables and
/// one outcome. Edges run forward in time, or within a round from lower to
/// higher column index, each present with probability edge_density subject
/// to max_parents. Mechanisms are p = 0.05 + 0.9 * logistic(b + w.x), so
/// every entry lies in [0.05, 0.95].
PlantedModel sample_model(int n_rounds, int n_patterns, double edge_density, std::uint64_t seed,
                          const SampleOptions &opts = {});

/// Model over the given structure with mechanisms drawn as in sample_model.
/// The last variable must be the outcome.
PlantedModel make_model(std::vector<VariableId> variables, const Pdag &dag, std::uint64_t seed,
                        const SampleOptions &opts = {});

/// Adds an environment that redraws the mechanism of every non-outcome
/// variable; the outcome mechanism stays fixed.
void add_invariant_environment(PlantedModel &model, std::uint64_t seed, const SampleOptions &opts = {});

/// Adds an environment in which the outcome mechanism moves by `shift` in
/// conditional mean wherever `parent` is 1 (toward the side with room, so
/// entries stay in [0.05, 0.95]). Marks the model as not invariant.
void add_shifted_environment(PlantedModel &model, std::size_t parent, double shift = 0.35);

/// Ancestral sampling of n rows from one environment.
BinaryDataset forward_sample(const PlantedModel &model, std::size_t n, std::size_t environment,
                             std::uint64_t seed);

/// Row-concatenation of n rows from each environment, in environment order.
BinaryDataset sample_environments(const PlantedModel &model, std::size_t n_per_environment, std::uint64_t seed);

/// Exact joint distribution by enumeration (at most 20 variables); entry x
/// has bit v equal to the value of variable v.
std::vector<double> exact_joint(const PlantedModel &model, std::size_t environment);

/// Essential graph of the planted DAG, refined by the mask when one is given.
Pdag true_cpdag(const PlantedModel &model, const ConstraintMask &mask = {});

/// Number of variable pairs whose edge mark (absent, a->b, b->a, a--b)
/// differs between the two graphs.
std::size_t structural_hamming(const Pdag &g1, const Pdag &g2);

struct ParentRecovery {
    double precision = 0.0; // 1 when nothing was found
    double recall = 0.0;    // 1 when there is nothing to find
};

ParentRecovery parent_recovery(const NodeSet &found, const NodeSet &truth);

/// Model as JSON: variables, edges, mechanisms and environments.
nlohmann::json to_json(const PlantedModel &model);

} // namespace reflcausal
