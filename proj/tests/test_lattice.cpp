#include "doctest.h"

#include "lattice.hpp"
#include "rng.hpp"
#include "test_util.hpp"

using namespace dmrf;
using lattice::GridSpec;
using lattice::NodeId;

namespace {
std::vector<NodeId> ids(const GridSpec& g, std::initializer_list<std::pair<int, int>> rcs) {
    std::vector<NodeId> out;
    for (auto [r, c] : rcs) out.push_back(g.id_of(r, c));
    return out;
}
} // namespace

TEST_CASE("zigzag order is row-serpentine") {
    CHECK(lattice::build_zigzag_order(GridSpec(1, 1)) == ids(GridSpec(1, 1), {{0, 0}}));
    const GridSpec g23(2, 3);
    CHECK(lattice::build_zigzag_order(g23) ==
          ids(g23, {{0, 0}, {0, 1}, {0, 2}, {1, 2}, {1, 1}, {1, 0}}));
    const GridSpec g32(3, 2);
    CHECK(lattice::build_zigzag_order(g32) ==
          ids(g32, {{0, 0}, {0, 1}, {1, 1}, {1, 0}, {2, 0}, {2, 1}}));
}

TEST_CASE("grid spec rejects degenerate sizes") {
    CHECK_THROWS_AS(GridSpec(0, 3), Error);
    CHECK_THROWS_AS(GridSpec(3, -1), Error);
}

TEST_CASE("decompose partitions the 2x2 neighborhood by order position") {
    const GridSpec g(2, 2);
    const auto order = ids(g, {{0, 0}, {0, 1}, {1, 1}, {1, 0}});
    const auto d = lattice::decompose(g, order);

    const NodeId a = g.id_of(0, 0), b = g.id_of(0, 1), c = g.id_of(1, 1), e = g.id_of(1, 0);
    CHECK(d.forward_parents[a].empty());
    CHECK(d.forward_parents[b] == std::vector<NodeId>{a});
    CHECK(d.forward_parents[c] == std::vector<NodeId>{b});
    CHECK(d.forward_parents[e] == std::vector<NodeId>{a, c});

    CHECK(d.backward_parents[a] == std::vector<NodeId>{b, e});
    CHECK(d.backward_parents[b] == std::vector<NodeId>{c});
    CHECK(d.backward_parents[c] == std::vector<NodeId>{e});
    CHECK(d.backward_parents[e].empty());
}

TEST_CASE("1xN path decomposes into a chain") {
    const int n = 7;
    const GridSpec g(1, n);
    const auto d = lattice::decompose(g, lattice::build_zigzag_order(g));
    for (NodeId i = 0; i < n; ++i) {
        if (i > 0) CHECK(d.forward_parents[i] == std::vector<NodeId>{static_cast<NodeId>(i - 1)});
        if (i == 0) CHECK(d.forward_parents[i].empty());
        if (i < n - 1)
            CHECK(d.backward_parents[i] == std::vector<NodeId>{static_cast<NodeId>(i + 1)});
        if (i == n - 1) CHECK(d.backward_parents[i].empty());
    }
}

TEST_CASE("decompose rejects non-permutations") {
    const GridSpec g(2, 2);
    CHECK_THROWS_AS(lattice::decompose(g, {0, 1, 2}), Error);
    CHECK_THROWS_AS(lattice::decompose(g, {0, 1, 2, 2}), Error);
    CHECK_THROWS_AS(lattice::decompose(g, {0, 1, 2, 4}), Error);
}

TEST_CASE("neighbors4 basics") {
    const GridSpec g(3, 3);
    CHECK(lattice::neighbors4(g, g.id_of(1, 1)).size() == 4);
    const auto corner = lattice::neighbors4(g, g.id_of(0, 0));
    CHECK(corner == ids(g, {{0, 1}, {1, 0}}));
    CHECK(lattice::neighbors4(GridSpec(1, 1), 0).empty());
    CHECK_THROWS_AS(lattice::neighbors4(g, 9), Error);
    CHECK_THROWS_AS(lattice::neighbors4(g, -1), Error);

    // Symmetry.
    for (NodeId u = 0; u < g.node_count(); ++u)
        for (NodeId v : lattice::neighbors4(g, u)) {
            const auto back = lattice::neighbors4(g, v);
            CHECK(std::find(back.begin(), back.end(), u) != back.end());
        }
}

TEST_CASE("decomposition invariants hold on random grids") {
    numerics::RngStream rng(2024);
    for (int trial = 0; trial < 25; ++trial) {
        const int h = 1 + static_cast<int>(rng.next_below(64));
        const int w = 1 + static_cast<int>(rng.next_below(64));
        const GridSpec g(h, w);
        const auto d = lattice::decompose(g, lattice::build_zigzag_order(g));
        const std::string err = testutil::check_decomposition(g, d);
        INFO("grid ", h, "x", w, ": ", err);
        CHECK(err.empty());
    }
}
