#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reflcausal/dataset.hpp"

namespace reflcausal {

using NodeSet = std::vector<std::size_t>; // always sorted ascending

inline bool contains_node(const NodeSet &s, std::size_t v) {
    return std::binary_search(s.begin(), s.end(), v);
}

/// Partially directed graph over nodes 0..n-1. The directed part is kept
/// acyclic: mutations that would close a directed cycle throw
/// ConstraintViolation.
class Pdag {
  public:
    Pdag() = default;
    explicit Pdag(std::size_t n);

    std::size_t n_vars() const { return n_; }

    bool has_directed(std::size_t from, std::size_t to) const { return dir_[from * n_ + to] != 0; }
    bool has_undirected(std::size_t a, std::size_t b) const { return und_[a * n_ + b] != 0; }
    bool adjacent(std::size_t a, std::size_t b) const {
        return has_directed(a, b) || has_directed(b, a) || has_undirected(a, b);
    }

    void add_directed(std::size_t from, std::size_t to);
    void add_undirected(std::size_t a, std::size_t b);
    /// Turns an undirected a - b into a -> b.
    void orient(std::size_t from, std::size_t to);
    void remove_edge(std::size_t a, std::size_t b);

    NodeSet parents(std::size_t v) const;
    NodeSet children(std::size_t v) const;
    NodeSet neighbors(std::size_t v) const; // undirected
    NodeSet adjacents(std::size_t v) const;

    std::vector<std::pair<std::size_t, std::size_t>> directed_edges() const;
    std::vector<std::pair<std::size_t, std::size_t>> undirected_edges() const; // first < second
    std::size_t edge_count() const;

    /// True if a directed path from -> ... -> to exists.
    bool has_directed_path(std::size_t from, std::size_t to) const;

    bool operator==(const Pdag &) const = default;

  private:
    void check_pair(std::size_t a, std::size_t b) const;

    std::size_t n_ = 0;
    std::vector<std::uint8_t> dir_;
    std::vector<std::uint8_t> und_;
};

/// Forbidden and required orientations. A required a -> b means that the
/// edge is present in every searched graph and oriented a -> b.
class ConstraintMask {
  public:
    ConstraintMask() = default;
    explicit ConstraintMask(std::size_t n);

    std::size_t n_vars() const { return n_; }
    void forbid(std::size_t from, std::size_t to);
    void require(std::size_t from, std::size_t to);
    bool forbidden(std::size_t from, std::size_t to) const { return n_ && forbidden_[from * n_ + to]; }
    bool required(std::size_t from, std::size_t to) const { return n_ && required_[from * n_ + to]; }

    std::vector<std::pair<std::size_t, std::size_t>> forbidden_edges() const;
    std::vector<std::pair<std::size_t, std::size_t>> required_edges() const;

  private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> forbidden_;
    std::vector<std::uint8_t> required_;
};

/// Later rounds may not cause earlier rounds and nothing leaves the outcome.
/// Same-round edges are unconstrained.
ConstraintMask temporal_mask(const std::vector<VariableId> &variables);

/// Insert(x, y, T): add x -> y and orient t -> y for t in T.
struct InsertOp {
    std::size_t x = 0;
    std::size_t y = 0;
    NodeSet t;
    auto operator<=>(const InsertOp &) const = default;
};

/// Delete(x, y, H): remove the x - y / x -> y edge and orient y -> h (and
/// x -> h where x - h) for h in H.
struct DeleteOp {
    std::size_t x = 0;
    std::size_t y = 0;
    NodeSet h;
    auto operator<=>(const DeleteOp &) const = default;
};

std::string describe(const InsertOp &op);
std::string describe(const DeleteOp &op);

/// Ne(y) intersected with Adj(x).
NodeSet na_yx(const Pdag &g, std::size_t y, std::size_t x);

bool is_clique(const Pdag &g, const NodeSet &nodes);

/// True if every semi-directed path from `from` to `to` passes a node of
/// `blockers`.
bool semi_directed_paths_blocked(const Pdag &g, std::size_t from, std::size_t to, const NodeSet &blockers);

/// All Insert operators satisfying the clique and path conditions whose new
/// orientations are allowed by the mask. If max_parents is set, operators
/// leaving y with more parents are dropped.
std::vector<InsertOp> valid_inserts(const Pdag &g, const ConstraintMask &mask,
                                    std::optional<std::size_t> max_parents = std::nullopt);

/// All Delete operators with NA_{y,x} \ H a clique whose orientations are
/// allowed by the mask. Required edges are never deleted.
std::vector<DeleteOp> valid_deletes(const Pdag &g, const ConstraintMask &mask);

/// Parent set y takes in the DAG extension used to score an operator.
NodeSet insert_parents_before(const Pdag &g, const InsertOp &op);
NodeSet delete_parents_after(const Pdag &g, const DeleteOp &op);

/// Consistent DAG extension (Dor-Tarsi). When several sinks qualify the
/// highest-index one is removed first, so free edges point from lower to
/// higher column index. Throws NotExtendable.
Pdag extend_to_dag(const Pdag &g);

/// Essential graph of a DAG: skeleton, v-structures, then Meek rules 1-3.
Pdag cpdag_of_dag(const Pdag &dag);

/// Applies Meek rules 1-4 until no edge changes.
void apply_meek_rules(Pdag &g);

/// Re-completes an arbitrary extendable PDAG into the mask-refined essential
/// graph: extend, take the essential graph, orient undirected edges the mask
/// allows in one direction only, and close under Meek rules. Throws
/// ConstraintViolation when the class forces a forbidden orientation.
Pdag complete(const Pdag &g, const ConstraintMask &mask);

Pdag apply_and_complete(const Pdag &g, const InsertOp &op, const ConstraintMask &mask);
Pdag apply_and_complete(const Pdag &g, const DeleteOp &op, const ConstraintMask &mask);

struct ParentSets {
    NodeSet parents;   // heads of directed edges into v
    NodeSet ambiguous; // undirected neighbours of v
};

ParentSets parents_of(const Pdag &g, std::size_t v);

/// Text form: a "nodes" line with labels, then one edge per line using
/// "->" or "--". Labels must not contain whitespace.
std::string serialize(const Pdag &g, const std::vector<std::string> &labels);
Pdag parse_pdag(const std::string &text, std::vector<std::string> *labels = nullptr);

} // namespace reflcausal
