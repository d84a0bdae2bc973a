#pragma once

#include <cstdint>
#include <vector>

#include "error.hpp"

namespace dmrf::lattice {

using NodeId = std::int32_t;

// 4-connected H x W pixel grid. Node ids are row-major: id = row * width + col.
struct GridSpec {
    int height = 0;
    int width = 0;

    GridSpec() = default;
    GridSpec(int h, int w) : height(h), width(w) {
        require(h >= 1 && w >= 1, Status::InvalidArg, "GridSpec: height and width must be >= 1");
    }

    int node_count() const { return height * width; }
    NodeId id_of(int row, int col) const { return static_cast<NodeId>(row * width + col); }
    int row_of(NodeId u) const { return u / width; }
    int col_of(NodeId u) const { return u % width; }
    bool operator==(const GridSpec&) const = default;
};

// Acyclic split of the grid along a continuous visit order: each node's
// 4-neighborhood partitions into parents earlier in the order (forward) and
// parents later in the order (backward). Every undirected edge appears once
// in each directed graph, with opposite orientation.
struct ZigzagDecomposition {
    GridSpec grid;
    std::vector<NodeId> order;
    std::vector<std::vector<NodeId>> forward_parents;
    std::vector<std::vector<NodeId>> backward_parents;
};

// Row-serpentine order: row 0 left to right, row 1 right to left, alternating.
std::vector<NodeId> build_zigzag_order(const GridSpec& spec);

// Partitions each node's neighborhood by position in `order`. Rejects orders
// that are not permutations of the node ids.
ZigzagDecomposition decompose(const GridSpec& spec, const std::vector<NodeId>& order);

// In-bounds 4-neighbors of u. Out-of-range ids rejected.
std::vector<NodeId> neighbors4(const GridSpec& spec, NodeId u);

} // namespace dmrf::lattice
