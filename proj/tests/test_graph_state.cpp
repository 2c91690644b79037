#include <dyrep/graph_state.hpp>

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

using namespace dyrep;
using dyrep::test::ev;

namespace {

Adjacency edges(std::initializer_list<std::pair<NodeId, NodeId>> list, NodeId n = 0)
{
    Adjacency a;
    a.n = n;
    for (const auto& [x, y] : list) a.add(x, y);
    a.normalize();
    return a;
}

void expect_invariants(const GraphState& g)
{
    for (NodeId r = 0; r < g.size(); ++r) {
        const auto row = g.row_values(r);
        const auto nb = g.neighborhood(r);
        ASSERT_EQ(row.size(), nb.size());
        EXPECT_EQ(g.s(r, r), 0.0);
        if (nb.empty()) continue;
        double sum = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            EXPECT_GE(row[i], 0.0);
            EXPECT_LE(row[i], 1.0);
            EXPECT_TRUE(g.linked(nb[i], r));
            sum += row[i];
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

} // namespace

TEST(InitState, TwoNeighbours)
{
    const auto g = init_state(edges({{0, 1}, {0, 2}}));
    EXPECT_DOUBLE_EQ(g.s(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(g.s(0, 2), 0.5);
    EXPECT_DOUBLE_EQ(g.s(1, 0), 1.0);
}

TEST(InitState, IsolatedRowZero)
{
    const auto g = init_state(edges({{0, 1}}, 3));
    ASSERT_EQ(g.size(), 3);
    EXPECT_TRUE(g.neighborhood(2).empty());
    for (NodeId c = 0; c < 3; ++c) EXPECT_EQ(g.s(2, c), 0.0);
}

TEST(InitState, Triangle)
{
    const auto g = init_state(edges({{0, 1}, {1, 2}, {0, 2}}));
    for (NodeId r = 0; r < 3; ++r)
        for (NodeId c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(g.s(r, c), r == c ? 0.0 : 0.5);
    expect_invariants(g);
}

TEST(InitState, DenseMatrixInput)
{
    Matrix a = Matrix::Zero(3, 3);
    a(0, 1) = a(1, 0) = 1;
    EXPECT_EQ(init_state(a).edge_count(), 1u);
    a(2, 0) = 1;
    EXPECT_THROW(init_state(a), DataError);
    Matrix diag = Matrix::Zero(2, 2);
    diag(1, 1) = 1;
    EXPECT_THROW(init_state(diag), DataError);
}

TEST(ApplyEvent, UnlinkedCommunicationIsIdentity)
{
    auto g = init_state(edges({{0, 1}}, 4));
    const auto before = g;
    g.apply_event(ev(2, 3, 1.0, EventType::communication, 0), 0.7);
    EXPECT_EQ(g, before);
    EXPECT_FALSE(g.linked(2, 3));
}

TEST(ApplyEvent, AssociationAddsEdge)
{
    GraphState g(3);
    g.apply_event(ev(0, 1, 1.0, EventType::association), 0.4);
    EXPECT_TRUE(g.linked(0, 1));
    EXPECT_TRUE(g.linked(1, 0));
    ASSERT_EQ(g.neighborhood(0).size(), 1u);
    EXPECT_EQ(g.neighborhood(1).front(), 0);
    EXPECT_DOUBLE_EQ(g.s(0, 1), 1.0);
    expect_invariants(g);
}

TEST(ApplyEvent, CommunicationOnLinkedPair)
{
    // node 0 has neighbours {1, 2}; the event with partner 1 and lambda 0.3
    // gives (0.8, 0.5) before normalisation.
    auto g = init_state(edges({{0, 1}, {0, 2}}));
    g.apply_event(ev(0, 1, 1.0, EventType::communication, 1), 0.3);
    EXPECT_NEAR(g.s(0, 1), 0.8 / 1.3, 1e-15);
    EXPECT_NEAR(g.s(0, 2), 0.5 / 1.3, 1e-15);
    EXPECT_NEAR(g.s(0, 1), 0.6154, 5e-5);
    EXPECT_NEAR(g.s(0, 2), 0.3846, 5e-5);
    EXPECT_DOUBLE_EQ(g.s(1, 0), 1.0);
}

TEST(ApplyEvent, AssociationShrinksOtherEntries)
{
    // node 0 goes from 2 to 3 neighbours: b = 1/3, b' = 1/2, x = 1/6.
    auto g = init_state(edges({{0, 1}, {0, 2}}, 4));
    g.apply_event(ev(0, 3, 1.0, EventType::association), 0.5);
    const double b = 1.0 / 3.0, x = 0.5 - b;
    const double z1 = 0.5 - x, z3 = b + 0.5;
    const double total = 2 * z1 + z3;
    EXPECT_NEAR(g.s(0, 1), z1 / total, 1e-15);
    EXPECT_NEAR(g.s(0, 2), z1 / total, 1e-15);
    EXPECT_NEAR(g.s(0, 3), z3 / total, 1e-15);
    EXPECT_DOUBLE_EQ(g.s(3, 0), 1.0);
    expect_invariants(g);
}

TEST(ApplyEvent, NegativeEntriesClamped)
{
    // Entries below x become negative before clamping.
    auto g = init_state(edges({{0, 1}, {1, 2}}, 4));
    g.apply_event(ev(1, 2, 1.0, EventType::communication, 1), 5.0);
    ASSERT_LT(g.s(1, 0), 1.0 / 2.0 - 1.0 / 3.0);
    g.apply_event(ev(1, 3, 2.0, EventType::association), 0.1);
    EXPECT_EQ(g.s(1, 0), 0.0);
    expect_invariants(g);
}

TEST(ApplyEvent, Errors)
{
    auto g = init_state(edges({{0, 1}}, 3));
    EXPECT_THROW(g.apply_event(ev(0, 1, 1.0, EventType::association), 0.5), DataError);
    EXPECT_THROW(g.apply_event(ev(0, 5, 1.0), 0.5), std::out_of_range);
    EXPECT_THROW(g.apply_event(ev(0, 2, 1.0), 0.0), NumericError);
}

TEST(Neighborhood, Cases)
{
    GraphState empty(3);
    EXPECT_TRUE(empty.neighborhood(1).empty());
    const auto star = init_state(edges({{0, 1}, {0, 2}, {0, 3}}));
    EXPECT_EQ(star.neighborhood(0).size(), 3u);
    EXPECT_THROW(star.neighborhood(4), std::out_of_range);
    EXPECT_THROW(star.neighborhood(-1), std::out_of_range);
}

TEST(Grow, AppendsIsolatedRows)
{
    auto g = init_state(edges({{0, 1}, {1, 2}}));
    const auto before = g;
    g.grow(3);
    EXPECT_EQ(g, before);
    g.grow(5);
    ASSERT_EQ(g.size(), 5);
    EXPECT_TRUE(g.neighborhood(3).empty());
    EXPECT_TRUE(g.neighborhood(4).empty());
    EXPECT_DOUBLE_EQ(g.s(1, 0), 0.5);
    EXPECT_THROW(g.grow(2), std::invalid_argument);

    g.apply_event(ev(4, 1, 1.0, EventType::association), 0.2);
    EXPECT_DOUBLE_EQ(g.s(4, 1), 1.0);
    expect_invariants(g);
}

TEST(Invariants, RandomReplay)
{
    const NodeId n = 12;
    const auto log = dyrep::test::random_log(n, 2000, 17, 0.15);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> lam(1e-6, 4.0);
    auto g = init_state(Adjacency{}, n);
    for (const auto& e : log.events) {
        const auto edges_before = g.edge_list();
        g.apply_event(e, lam(rng));
        for (const auto& [a, b] : edges_before) ASSERT_TRUE(g.linked(a, b));
    }
    expect_invariants(g);
}

TEST(Storage, DenseAndSparseBitIdentical)
{
    const NodeId n = 15;
    const auto log = dyrep::test::random_log(n, 1500, 23, 0.2);
    auto dense = init_state(edges({{0, 1}, {2, 3}}, n), -1, GraphState::Storage::dense);
    auto sparse = init_state(edges({{0, 1}, {2, 3}}, n), -1, GraphState::Storage::sparse);
    ASSERT_TRUE(dense.dense());
    ASSERT_FALSE(sparse.dense());
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> lam(0.01, 3.0);
    for (const auto& e : log.events) {
        if (e.k == EventType::association && dense.linked(e.u, e.v)) continue;
        const double l = lam(rng);
        dense.apply_event(e, l);
        sparse.apply_event(e, l);
    }
    EXPECT_EQ(dense, sparse);
    for (NodeId r = 0; r < n; ++r)
        for (NodeId c = 0; c < n; ++c) EXPECT_EQ(dense.s(r, c), sparse.s(r, c));
}

TEST(Checkpoint, RoundTrip)
{
    auto g = init_state(edges({{0, 1}, {0, 2}, {3, 4}}));
    g.apply_event(ev(0, 1, 1.0, EventType::communication, 1), 0.123456789);
    std::stringstream buffer;
    write_checkpoint(g, buffer);
    const auto text = buffer.str();
    EXPECT_EQ(text.rfind("dyrep-graph", 0), 0u) << text;
    const auto back = read_graph_checkpoint(buffer);
    EXPECT_EQ(back, g);

    std::stringstream bad("not a checkpoint\n");
    EXPECT_THROW(read_graph_checkpoint(bad), DataError);
}
