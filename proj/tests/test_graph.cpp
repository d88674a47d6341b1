#include <gtest/gtest.h>

#include <map>
#include <set>

#include "reflcausal/errors.hpp"
#include "reflcausal/graph.hpp"
#include "reflcausal/scoring.hpp"
#include "test_util.hpp"

using namespace reflcausal;

namespace {

std::vector<std::string> names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(1, static_cast<char>('A' + i));
    return out;
}

std::string key(const Pdag &g) { return serialize(g, names(g.n_vars())); }

struct ClassIndex {
    std::map<std::string, Pdag> cpdag;
    std::map<std::string, std::vector<Pdag>> members;
};

ClassIndex index_classes(std::size_t n) {
    ClassIndex idx;
    for (const auto &d : testutil::all_dags(n)) {
        const Pdag c = cpdag_of_dag(d);
        const auto k = key(c);
        idx.cpdag.emplace(k, c);
        idx.members[k].push_back(d);
    }
    return idx;
}

} // namespace

TEST(Pdag, BasicMutationAndCycleCheck) {
    Pdag g(3);
    g.add_directed(0, 1);
    g.add_directed(1, 2);
    EXPECT_THROW(g.add_directed(2, 0), ConstraintViolation);
    EXPECT_THROW(g.add_directed(0, 0), ConstraintViolation);
    EXPECT_THROW(g.add_undirected(0, 1), ConstraintViolation);
    g.add_undirected(0, 2);
    EXPECT_THROW(g.orient(2, 0), ConstraintViolation);
    EXPECT_TRUE(g.has_undirected(0, 2));
    g.orient(0, 2);
    EXPECT_TRUE(g.has_directed(0, 2));
    EXPECT_EQ(g.edge_count(), 3U);
    g.remove_edge(1, 2);
    EXPECT_FALSE(g.adjacent(1, 2));
}

TEST(Pdag, SerializationRoundTrips) {
    Pdag g(4);
    g.add_directed(0, 3);
    g.add_undirected(1, 2);
    g.add_directed(2, 3);
    const auto text = serialize(g, {"CO@2", "Sp@1", "Sp@4", "correct"});
    EXPECT_NE(text.find("CO@2 -> correct"), std::string::npos);
    EXPECT_NE(text.find("Sp@1 -- Sp@4"), std::string::npos);
    std::vector<std::string> labels;
    EXPECT_EQ(parse_pdag(text, &labels), g);
    EXPECT_EQ(labels.size(), 4U);
    EXPECT_THROW(parse_pdag("A -> B\n"), MalformedRecord);
    EXPECT_THROW(parse_pdag("nodes A B\nA => B\n"), MalformedRecord);
}

TEST(TemporalMask, TwoRoundsOnePattern) {
    std::vector<VariableId> vars{{VariableKind::SemanticPattern, "P", 1},
                                 {VariableKind::SemanticPattern, "P", 2},
                                 {VariableKind::Outcome, "Y", std::nullopt}};
    const auto mask = temporal_mask(vars);
    const std::vector<std::pair<std::size_t, std::size_t>> expected{{1, 0}, {2, 0}, {2, 1}};
    EXPECT_EQ(mask.forbidden_edges(), expected);
    EXPECT_TRUE(mask.required_edges().empty());
}

TEST(TemporalMask, SingleRoundForbidsOnlyOutcomeEdges) {
    const auto vars = testutil::plain_vars(4, true);
    const auto mask = temporal_mask(vars);
    for (auto [a, b] : mask.forbidden_edges()) EXPECT_EQ(a, 3U);
    EXPECT_EQ(mask.forbidden_edges().size(), 3U);
}

TEST(TemporalMask, OutcomeIsSink) {
    std::vector<VariableId> vars{{VariableKind::SemanticPattern, "CO", 2}, {VariableKind::Outcome, "Y", std::nullopt}};
    const auto mask = temporal_mask(vars);
    EXPECT_FALSE(mask.forbidden(0, 1));
    EXPECT_TRUE(mask.forbidden(1, 0));
}

TEST(Mask, ForbiddenAndRequiredAreDisjoint) {
    ConstraintMask m(3);
    m.forbid(0, 1);
    EXPECT_THROW(m.require(0, 1), ConstraintViolation);
    m.require(1, 0);
    EXPECT_THROW(m.forbid(1, 0), ConstraintViolation);
}

TEST(Inserts, EmptyGraphThreeVars) {
    const auto ops = valid_inserts(Pdag(3), ConstraintMask(3));
    EXPECT_EQ(ops.size(), 6U);
    for (const auto &op : ops) EXPECT_TRUE(op.t.empty());
}

TEST(Inserts, OutcomeSinkMasksReverseEdge) {
    const auto mask = temporal_mask(testutil::plain_vars(2, true));
    const auto ops = valid_inserts(Pdag(2), mask);
    ASSERT_EQ(ops.size(), 1U);
    EXPECT_EQ(ops[0].x, 0U);
    EXPECT_EQ(ops[0].y, 1U);
}

TEST(Inserts, MaxParentsCap) {
    Pdag g(4);
    g.add_directed(0, 3);
    g.add_directed(1, 3);
    for (const auto &op : valid_inserts(g, ConstraintMask(4), 2)) EXPECT_NE(op.y, 3U);
}

TEST(Deletes, EmptyAndSingleEdge) {
    EXPECT_TRUE(valid_deletes(Pdag(3), ConstraintMask(3)).empty());
    Pdag g(2);
    g.add_directed(0, 1);
    const auto ops = valid_deletes(g, ConstraintMask(2));
    ASSERT_EQ(ops.size(), 1U);
    EXPECT_EQ(apply_and_complete(g, ops[0], ConstraintMask(2)), Pdag(2));
}

TEST(Deletes, RequiredEdgesAreKept) {
    Pdag g(2);
    g.add_directed(0, 1);
    ConstraintMask m(2);
    m.require(0, 1);
    EXPECT_TRUE(valid_deletes(g, m).empty());
}

TEST(Completion, ColliderFromInsert) {
    Pdag g(3); // A=0, B=1, C=2 with B - C
    g.add_undirected(1, 2);
    const InsertOp op{0, 2, {1}};
    const auto ops = valid_inserts(g, ConstraintMask(3));
    EXPECT_NE(std::find(ops.begin(), ops.end(), op), ops.end());
    const Pdag out = apply_and_complete(g, op, ConstraintMask(3));
    EXPECT_TRUE(out.has_directed(0, 2));
    EXPECT_TRUE(out.has_directed(1, 2));
    EXPECT_EQ(out.edge_count(), 2U);
}

TEST(Completion, ChainIsFullyUndirected) {
    Pdag dag(3);
    dag.add_directed(0, 1);
    dag.add_directed(1, 2);
    const Pdag c = cpdag_of_dag(dag);
    EXPECT_TRUE(c.has_undirected(0, 1));
    EXPECT_TRUE(c.has_undirected(1, 2));
    EXPECT_TRUE(c.directed_edges().empty());
    EXPECT_EQ(complete(c, ConstraintMask(3)), c);
}

TEST(Completion, MaskOrientsAndPropagates) {
    Pdag c(3);
    c.add_undirected(0, 1);
    c.add_undirected(1, 2);
    ConstraintMask m(3);
    m.forbid(1, 0); // forces 0 -> 1, then Meek R1 orients 1 -> 2
    const Pdag out = complete(c, m);
    EXPECT_TRUE(out.has_directed(0, 1));
    EXPECT_TRUE(out.has_directed(1, 2));
    ConstraintMask both(3);
    both.forbid(1, 0);
    both.forbid(0, 1);
    EXPECT_THROW(complete(c, both), ConstraintViolation);
}

TEST(Completion, DeleteThenReinsertRestoresSkeleton) {
    Pdag dag(3);
    dag.add_directed(0, 1);
    dag.add_directed(1, 2);
    const Pdag c = cpdag_of_dag(dag);
    const ConstraintMask m(3);
    for (const auto &del : valid_deletes(c, m)) {
        const Pdag reduced = apply_and_complete(c, del, m);
        bool restored = false;
        for (const auto &ins : valid_inserts(reduced, m)) {
            const Pdag back = apply_and_complete(reduced, ins, m);
            if (back == c) restored = true;
        }
        EXPECT_TRUE(restored) << describe(del);
    }
}

TEST(Completion, ExtensionRejectsNonExtendable) {
    // An undirected 4-cycle without chords has no consistent extension.
    Pdag g(4);
    g.add_undirected(0, 1);
    g.add_undirected(1, 2);
    g.add_undirected(2, 3);
    g.add_undirected(3, 0);
    EXPECT_THROW(extend_to_dag(g), NotExtendable);
}

TEST(ParentsOf, Examples) {
    Pdag g(3);
    g.add_directed(0, 2);
    g.add_directed(1, 2);
    const auto p = parents_of(g, 2);
    EXPECT_EQ(p.parents, (NodeSet{0, 1}));
    EXPECT_TRUE(p.ambiguous.empty());
    EXPECT_TRUE(parents_of(Pdag(3), 1).parents.empty());
}

// Chickering's operators must reach exactly the equivalence classes obtained
// by adding (removing) one edge to (from) some member DAG, and their local
// score change must equal the change in total score.
class ExhaustiveOperators : public ::testing::TestWithParam<std::size_t> {};

TEST_P(ExhaustiveOperators, MatchBruteForceNeighbourhoods) {
    const std::size_t n = GetParam();
    const auto idx = index_classes(n);
    const ConstraintMask none(n);
    const auto data = testutil::random_dataset(300, n, 1000 + n, 0.4);
    const ScoreFn bdeu{ScoreKind::BDeu, 1.0};
    std::size_t checked = 0;
    for (const auto &[k, c] : idx.cpdag) {
        std::set<std::string> brute_ins, brute_del;
        for (const auto &d : idx.members.at(k)) {
            for (std::size_t a = 0; a < n; ++a) {
                for (std::size_t b = 0; b < n; ++b) {
                    if (a == b) continue;
                    if (d.has_directed(a, b)) {
                        Pdag e = d;
                        e.remove_edge(a, b);
                        brute_del.insert(key(cpdag_of_dag(e)));
                    } else if (!d.adjacent(a, b) && !d.has_directed_path(b, a)) {
                        Pdag e = d;
                        e.add_directed(a, b);
                        brute_ins.insert(key(cpdag_of_dag(e)));
                    }
                }
            }
        }
        const double base = total_score(data, c, bdeu);
        std::set<std::string> op_ins, op_del;
        for (const auto &op : valid_inserts(c, none)) {
            const Pdag next = apply_and_complete(c, op, none);
            EXPECT_EQ(complete(next, none), next);
            op_ins.insert(key(next));
            NodeSet after = insert_parents_before(c, op);
            const double before_s = local_score(data, op.y, after, bdeu);
            after.push_back(op.x);
            std::sort(after.begin(), after.end());
            const double delta = local_score(data, op.y, after, bdeu) - before_s;
            EXPECT_NEAR(total_score(data, next, bdeu) - base, delta, 1e-8) << k << describe(op);
        }
        for (const auto &op : valid_deletes(c, none)) {
            const Pdag next = apply_and_complete(c, op, none);
            EXPECT_EQ(complete(next, none), next);
            op_del.insert(key(next));
            NodeSet after = delete_parents_after(c, op);
            NodeSet before = after;
            before.push_back(op.x);
            std::sort(before.begin(), before.end());
            const double delta = local_score(data, op.y, after, bdeu) - local_score(data, op.y, before, bdeu);
            EXPECT_NEAR(total_score(data, next, bdeu) - base, delta, 1e-8) << k << describe(op);
        }
        EXPECT_EQ(op_ins, brute_ins) << k;
        EXPECT_EQ(op_del, brute_del) << k;
        ++checked;
    }
    EXPECT_EQ(checked, n == 2 ? 2U : n == 3 ? 11U : 185U);
}

INSTANTIATE_TEST_SUITE_P(UpToFourNodes, ExhaustiveOperators, ::testing::Values(2, 3, 4));

TEST(Completion, EveryClassIsAFixedPoint) {
    const auto idx = index_classes(4);
    for (const auto &[k, c] : idx.cpdag) {
        EXPECT_EQ(complete(c, ConstraintMask(4)), c) << k;
        EXPECT_EQ(cpdag_of_dag(extend_to_dag(c)), c) << k;
        for (const auto &d : idx.members.at(k)) EXPECT_EQ(cpdag_of_dag(d), c);
    }
}

TEST(Completion, MaskedResultsNeverContainForbiddenEdges) {
    const auto idx = index_classes(4);
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        ConstraintMask m(4);
        for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = 0; b < 4; ++b)
                if (a != b && !m.forbidden(b, a) && bernoulli(rng, 0.2)) m.forbid(a, b);
        for (const auto &[k, c] : idx.cpdag) {
            Pdag g;
            try {
                g = complete(c, m);
            } catch (const ConstraintViolation &) {
                continue;
            }
            for (const auto &op : valid_inserts(g, m)) {
                try {
                    const Pdag next = apply_and_complete(g, op, m);
                    for (auto [a, b] : next.directed_edges()) EXPECT_FALSE(m.forbidden(a, b));
                    for (auto [a, b] : next.undirected_edges()) {
                        EXPECT_FALSE(m.forbidden(a, b));
                        EXPECT_FALSE(m.forbidden(b, a));
                    }
                } catch (const ConstraintViolation &) {
                } catch (const NotExtendable &) {
                }
            }
        }
    }
}
