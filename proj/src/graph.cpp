#include "reflcausal/graph.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "reflcausal/errors.hpp"

namespace reflcausal {

namespace {

NodeSet set_union(const NodeSet &a, const NodeSet &b) {
    NodeSet out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

NodeSet set_difference(const NodeSet &a, const NodeSet &b) {
    NodeSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

NodeSet without(NodeSet s, std::size_t v) {
    auto it = std::lower_bound(s.begin(), s.end(), v);
    if (it != s.end() && *it == v) s.erase(it);
    return s;
}

std::string join(const NodeSet &s) {
    std::string out = "{";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "}";
}

// Subsets of `base` in increasing bitmask order; |base| is small in practice.
template <typename F> void for_each_subset(const NodeSet &base, F &&f) {
    if (base.size() >= 63) throw Error("neighbourhood too large to enumerate subsets");
    const std::uint64_t total = std::uint64_t{1} << base.size();
    NodeSet subset;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        subset.clear();
        for (std::size_t i = 0; i < base.size(); ++i) {
            if (mask >> i & 1U) subset.push_back(base[i]);
        }
        f(subset);
    }
}

} // namespace

// ---------------------------------------------------------------------------
// Pdag

Pdag::Pdag(std::size_t n) : n_(n), dir_(n * n, 0), und_(n * n, 0) {}

void Pdag::check_pair(std::size_t a, std::size_t b) const {
    if (a >= n_ || b >= n_) throw ConstraintViolation("node index out of range");
    if (a == b) throw ConstraintViolation("self-loops are not allowed");
}

void Pdag::add_directed(std::size_t from, std::size_t to) {
    check_pair(from, to);
    if (adjacent(from, to)) throw ConstraintViolation("pair already has an edge");
    if (has_directed_path(to, from)) throw ConstraintViolation("edge would create a directed cycle");
    dir_[from * n_ + to] = 1;
}

void Pdag::add_undirected(std::size_t a, std::size_t b) {
    check_pair(a, b);
    if (adjacent(a, b)) throw ConstraintViolation("pair already has an edge");
    und_[a * n_ + b] = und_[b * n_ + a] = 1;
}

void Pdag::orient(std::size_t from, std::size_t to) {
    check_pair(from, to);
    if (!has_undirected(from, to)) throw ConstraintViolation("orient needs an undirected edge");
    und_[from * n_ + to] = und_[to * n_ + from] = 0;
    if (has_directed_path(to, from)) {
        und_[from * n_ + to] = und_[to * n_ + from] = 1;
        throw ConstraintViolation("orientation would create a directed cycle");
    }
    dir_[from * n_ + to] = 1;
}

void Pdag::remove_edge(std::size_t a, std::size_t b) {
    check_pair(a, b);
    dir_[a * n_ + b] = dir_[b * n_ + a] = 0;
    und_[a * n_ + b] = und_[b * n_ + a] = 0;
}

NodeSet Pdag::parents(std::size_t v) const {
    NodeSet out;
    for (std::size_t u = 0; u < n_; ++u) {
        if (dir_[u * n_ + v]) out.push_back(u);
    }
    return out;
}

NodeSet Pdag::children(std::size_t v) const {
    NodeSet out;
    for (std::size_t u = 0; u < n_; ++u) {
        if (dir_[v * n_ + u]) out.push_back(u);
    }
    return out;
}

NodeSet Pdag::neighbors(std::size_t v) const {
    NodeSet out;
    for (std::size_t u = 0; u < n_; ++u) {
        if (und_[v * n_ + u]) out.push_back(u);
    }
    return out;
}

NodeSet Pdag::adjacents(std::size_t v) const {
    NodeSet out;
    for (std::size_t u = 0; u < n_; ++u) {
        if (u != v && adjacent(u, v)) out.push_back(u);
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> Pdag::directed_edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < n_; ++a) {
        for (std::size_t b = 0; b < n_; ++b) {
            if (dir_[a * n_ + b]) out.emplace_back(a, b);
        }
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> Pdag::undirected_edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < n_; ++a) {
        for (std::size_t b = a + 1; b < n_; ++b) {
            if (und_[a * n_ + b]) out.emplace_back(a, b);
        }
    }
    return out;
}

std::size_t Pdag::edge_count() const { return directed_edges().size() + undirected_edges().size(); }

bool Pdag::has_directed_path(std::size_t from, std::size_t to) const {
    if (from == to) return true;
    std::vector<std::uint8_t> seen(n_, 0);
    std::vector<std::size_t> stack{from};
    seen[from] = 1;
    while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        for (std::size_t w = 0; w < n_; ++w) {
            if (!dir_[u * n_ + w] || seen[w]) continue;
            if (w == to) return true;
            seen[w] = 1;
            stack.push_back(w);
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// ConstraintMask

ConstraintMask::ConstraintMask(std::size_t n) : n_(n), forbidden_(n * n, 0), required_(n * n, 0) {}

void ConstraintMask::forbid(std::size_t from, std::size_t to) {
    if (from >= n_ || to >= n_) throw ConstraintViolation("mask index out of range");
    if (required_[from * n_ + to]) throw ConstraintViolation("edge is both forbidden and required");
    forbidden_[from * n_ + to] = 1;
}

void ConstraintMask::require(std::size_t from, std::size_t to) {
    if (from >= n_ || to >= n_ || from == to) throw ConstraintViolation("mask index out of range");
    if (forbidden_[from * n_ + to]) throw ConstraintViolation("edge is both forbidden and required");
    required_[from * n_ + to] = 1;
}

std::vector<std::pair<std::size_t, std::size_t>> ConstraintMask::forbidden_edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < n_ * n_; ++i) {
        if (forbidden_[i]) out.emplace_back(i / n_, i % n_);
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> ConstraintMask::required_edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < n_ * n_; ++i) {
        if (required_[i]) out.emplace_back(i / n_, i % n_);
    }
    return out;
}

ConstraintMask temporal_mask(const std::vector<VariableId> &variables) {
    const std::size_t n = variables.size();
    ConstraintMask mask(n);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            if (a == b) continue;
            const auto &from = variables[a];
            const auto &to = variables[b];
            if (from.kind == VariableKind::Outcome) {
                mask.forbid(a, b);
            } else if (from.round && to.round && *from.round > *to.round) {
                mask.forbid(a, b);
            }
        }
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Operators

std::string describe(const InsertOp &op) {
    return "Insert(" + std::to_string(op.x) + "," + std::to_string(op.y) + "," + join(op.t) + ")";
}

std::string describe(const DeleteOp &op) {
    return "Delete(" + std::to_string(op.x) + "," + std::to_string(op.y) + "," + join(op.h) + ")";
}

NodeSet na_yx(const Pdag &g, std::size_t y, std::size_t x) {
    NodeSet out;
    for (auto u : g.neighbors(y)) {
        if (g.adjacent(u, x)) out.push_back(u);
    }
    return out;
}

bool is_clique(const Pdag &g, const NodeSet &nodes) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (std::size_t j = i + 1; j < nodes.size(); ++j) {
            if (!g.adjacent(nodes[i], nodes[j])) return false;
        }
    }
    return true;
}

bool semi_directed_paths_blocked(const Pdag &g, std::size_t from, std::size_t to, const NodeSet &blockers) {
    const std::size_t n = g.n_vars();
    std::vector<std::uint8_t> seen(n, 0);
    std::deque<std::size_t> queue{from};
    seen[from] = 1;
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        for (std::size_t w = 0; w < n; ++w) {
            if (seen[w]) continue;
            if (!g.has_directed(u, w) && !g.has_undirected(u, w)) continue;
            if (w == to) return false;
            if (contains_node(blockers, w)) continue;
            seen[w] = 1;
            queue.push_back(w);
        }
    }
    return true;
}

NodeSet insert_parents_before(const Pdag &g, const InsertOp &op) {
    return set_union(set_union(g.parents(op.y), na_yx(g, op.y, op.x)), op.t);
}

NodeSet delete_parents_after(const Pdag &g, const DeleteOp &op) {
    return without(set_union(g.parents(op.y), set_difference(na_yx(g, op.y, op.x), op.h)), op.x);
}

std::vector<InsertOp> valid_inserts(const Pdag &g, const ConstraintMask &mask,
                                    std::optional<std::size_t> max_parents) {
    const std::size_t n = g.n_vars();
    std::vector<InsertOp> out;
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t y = 0; y < n; ++y) {
            if (x == y || g.adjacent(x, y) || mask.forbidden(x, y)) continue;
            const NodeSet na = na_yx(g, y, x);
            NodeSet t_base;
            for (auto t : g.neighbors(y)) {
                if (t != x && !g.adjacent(t, x) && !mask.forbidden(t, y)) t_base.push_back(t);
            }
            const NodeSet pa = g.parents(y);
            for_each_subset(t_base, [&](const NodeSet &t) {
                const NodeSet na_t = set_union(na, t);
                if (!is_clique(g, na_t)) return;
                if (!semi_directed_paths_blocked(g, y, x, na_t)) return;
                if (max_parents && set_union(pa, na_t).size() + 1 > *max_parents) return;
                out.push_back({x, y, t});
            });
        }
    }
    return out;
}

std::vector<DeleteOp> valid_deletes(const Pdag &g, const ConstraintMask &mask) {
    const std::size_t n = g.n_vars();
    std::vector<DeleteOp> out;
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t y = 0; y < n; ++y) {
            if (x == y) continue;
            if (!g.has_directed(x, y) && !g.has_undirected(x, y)) continue;
            if (mask.required(x, y) || mask.required(y, x)) continue;
            const NodeSet na = na_yx(g, y, x);
            for_each_subset(na, [&](const NodeSet &h) {
                if (!is_clique(g, set_difference(na, h))) return;
                for (auto v : h) {
                    if (mask.forbidden(y, v)) return;
                    if (g.has_undirected(x, v) && mask.forbidden(x, v)) return;
                }
                out.push_back({x, y, h});
            });
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Completion

Pdag extend_to_dag(const Pdag &g) {
    const std::size_t n = g.n_vars();
    Pdag dag(n);
    for (auto [a, b] : g.directed_edges()) dag.add_directed(a, b);
    Pdag work = g;
    std::vector<std::uint8_t> removed(n, 0);
    for (std::size_t step = 0; step < n; ++step) {
        std::optional<std::size_t> sink;
        for (std::size_t cand = n; cand-- > 0;) {
            if (removed[cand]) continue;
            if (!work.children(cand).empty()) continue;
            const NodeSet adj = work.adjacents(cand);
            bool ok = true;
            for (auto nb : work.neighbors(cand)) {
                for (auto other : adj) {
                    if (other != nb && !work.adjacent(nb, other)) {
                        ok = false;
                        break;
                    }
                }
                if (!ok) break;
            }
            if (ok) {
                sink = cand;
                break;
            }
        }
        if (!sink) throw NotExtendable("PDAG admits no consistent DAG extension");
        for (auto nb : work.neighbors(*sink)) dag.add_directed(nb, *sink);
        for (auto adj : work.adjacents(*sink)) work.remove_edge(adj, *sink);
        removed[*sink] = 1;
    }
    return dag;
}

namespace {

bool try_orient(Pdag &g, std::size_t a, std::size_t b) {
    if (!g.has_undirected(a, b)) return false;
    g.orient(a, b);
    return true;
}

bool meek_pass(Pdag &g, bool with_rule4) {
    const std::size_t n = g.n_vars();
    bool changed = false;
    for (auto [u, v] : g.undirected_edges()) {
        for (auto [a, b] : {std::pair{u, v}, std::pair{v, u}}) {
            if (!g.has_undirected(a, b)) break;
            bool orient = false;
            // R1: c -> a - b, c and b nonadjacent.
            for (std::size_t c = 0; c < n && !orient; ++c) {
                if (c != b && g.has_directed(c, a) && !g.adjacent(c, b)) orient = true;
            }
            // R2: a -> c -> b.
            for (std::size_t c = 0; c < n && !orient; ++c) {
                if (g.has_directed(a, c) && g.has_directed(c, b)) orient = true;
            }
            // R3: a - c -> b, a - d -> b, c and d nonadjacent.
            for (std::size_t c = 0; c < n && !orient; ++c) {
                if (!g.has_undirected(a, c) || !g.has_directed(c, b)) continue;
                for (std::size_t d = c + 1; d < n && !orient; ++d) {
                    if (g.has_undirected(a, d) && g.has_directed(d, b) && !g.adjacent(c, d)) orient = true;
                }
            }
            // R4: a adj c -> d -> b, a adj d, c and b nonadjacent.
            for (std::size_t c = 0; with_rule4 && c < n && !orient; ++c) {
                if (c == b || !g.adjacent(a, c) || g.adjacent(c, b)) continue;
                for (std::size_t d = 0; d < n && !orient; ++d) {
                    if (g.has_directed(c, d) && g.has_directed(d, b) && g.adjacent(a, d)) orient = true;
                }
            }
            if (orient && try_orient(g, a, b)) {
                changed = true;
                break;
            }
        }
    }
    return changed;
}

} // namespace

void apply_meek_rules(Pdag &g) {
    while (meek_pass(g, true)) {
    }
}

Pdag cpdag_of_dag(const Pdag &dag) {
    const std::size_t n = dag.n_vars();
    if (!dag.undirected_edges().empty()) throw Error("cpdag_of_dag expects a fully directed graph");
    Pdag g(n);
    for (auto [a, b] : dag.directed_edges()) g.add_undirected(a, b);
    for (std::size_t c = 0; c < n; ++c) {
        const NodeSet pa = dag.parents(c);
        for (std::size_t i = 0; i < pa.size(); ++i) {
            for (std::size_t j = i + 1; j < pa.size(); ++j) {
                if (dag.adjacent(pa[i], pa[j])) continue;
                if (g.has_undirected(pa[i], c)) g.orient(pa[i], c);
                if (g.has_undirected(pa[j], c)) g.orient(pa[j], c);
            }
        }
    }
    while (meek_pass(g, false)) {
    }
    return g;
}

Pdag complete(const Pdag &g, const ConstraintMask &mask) {
    Pdag out = cpdag_of_dag(extend_to_dag(g));
    if (mask.n_vars() != 0) {
        if (mask.n_vars() != out.n_vars()) throw ConstraintViolation("mask size does not match graph");
        for (auto [a, b] : out.undirected_edges()) {
            const bool ab_ok = !mask.forbidden(a, b);
            const bool ba_ok = !mask.forbidden(b, a);
            if (!ab_ok && !ba_ok) {
                throw ConstraintViolation("edge " + std::to_string(a) + "-" + std::to_string(b) +
                                          " is forbidden in both directions");
            }
            if (mask.required(a, b) || !ba_ok) {
                out.orient(a, b);
            } else if (mask.required(b, a) || !ab_ok) {
                out.orient(b, a);
            }
        }
        apply_meek_rules(out);
        for (auto [a, b] : out.directed_edges()) {
            if (mask.forbidden(a, b)) {
                throw ConstraintViolation("completion forces forbidden edge " + std::to_string(a) + "->" +
                                          std::to_string(b));
            }
        }
        for (auto [a, b] : mask.required_edges()) {
            if (out.has_directed(b, a)) {
                throw ConstraintViolation("completion reverses required edge " + std::to_string(a) + "->" +
                                          std::to_string(b));
            }
        }
    }
    return out;
}

Pdag apply_and_complete(const Pdag &g, const InsertOp &op, const ConstraintMask &mask) {
    if (g.adjacent(op.x, op.y)) throw ConstraintViolation("insert on adjacent pair " + describe(op));
    if (mask.forbidden(op.x, op.y)) throw ConstraintViolation("insert of forbidden edge " + describe(op));
    Pdag next = g;
    next.add_directed(op.x, op.y);
    for (auto t : op.t) {
        if (!next.has_undirected(t, op.y)) throw ConstraintViolation("T member not a neighbour " + describe(op));
        next.orient(t, op.y);
    }
    return complete(next, mask);
}

Pdag apply_and_complete(const Pdag &g, const DeleteOp &op, const ConstraintMask &mask) {
    if (!g.has_directed(op.x, op.y) && !g.has_undirected(op.x, op.y)) {
        throw ConstraintViolation("delete of missing edge " + describe(op));
    }
    Pdag next = g;
    next.remove_edge(op.x, op.y);
    for (auto h : op.h) {
        if (next.has_undirected(op.y, h)) next.orient(op.y, h);
        if (next.has_undirected(op.x, h)) next.orient(op.x, h);
    }
    return complete(next, mask);
}

ParentSets parents_of(const Pdag &g, std::size_t v) { return {g.parents(v), g.neighbors(v)}; }

// ---------------------------------------------------------------------------
// Serialization

std::string serialize(const Pdag &g, const std::vector<std::string> &labels) {
    if (labels.size() != g.n_vars()) throw Error("label count does not match graph size");
    std::ostringstream out;
    out << "nodes";
    for (const auto &l : labels) out << ' ' << l;
    out << '\n';
    for (auto [a, b] : g.directed_edges()) out << labels[a] << " -> " << labels[b] << '\n';
    for (auto [a, b] : g.undirected_edges()) out << labels[a] << " -- " << labels[b] << '\n';
    return out.str();
}

Pdag parse_pdag(const std::string &text, std::vector<std::string> *labels_out) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> labels;
    bool have_nodes = false;
    Pdag g;
    std::size_t line_no = 0;
    auto index = [&](const std::string &label) {
        auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) throw MalformedRecord(line_no, "unknown node " + label);
        return static_cast<std::size_t>(it - labels.begin());
    };
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first) || first.starts_with('#')) continue;
        if (!have_nodes) {
            if (first != "nodes") throw MalformedRecord(line_no, "graph text must start with 'nodes'");
            for (std::string l; ls >> l;) labels.push_back(l);
            g = Pdag(labels.size());
            have_nodes = true;
            continue;
        }
        std::string mark, second;
        if (!(ls >> mark >> second)) throw MalformedRecord(line_no, "expected '<a> -> <b>' or '<a> -- <b>'");
        if (mark == "->") {
            g.add_directed(index(first), index(second));
        } else if (mark == "--") {
            g.add_undirected(index(first), index(second));
        } else {
            throw MalformedRecord(line_no, "unknown edge marker " + mark);
        }
    }
    if (!have_nodes) throw MalformedRecord(line_no, "missing 'nodes' line");
    if (labels_out) *labels_out = labels;
    return g;
}

} // namespace reflcausal
