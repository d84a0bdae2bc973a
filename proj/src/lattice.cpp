#include "lattice.hpp"

#include <algorithm>

namespace dmrf::lattice {

std::vector<NodeId> build_zigzag_order(const GridSpec& spec) {
    std::vector<NodeId> order;
    order.reserve(spec.node_count());
    for (int r = 0; r < spec.height; ++r) {
        if (r % 2 == 0) {
            for (int c = 0; c < spec.width; ++c) order.push_back(spec.id_of(r, c));
        } else {
            for (int c = spec.width - 1; c >= 0; --c) order.push_back(spec.id_of(r, c));
        }
    }
    return order;
}

std::vector<NodeId> neighbors4(const GridSpec& spec, NodeId u) {
    require(u >= 0 && u < spec.node_count(), Status::InvalidArg, "neighbors4: node id out of range");
    const int r = spec.row_of(u);
    const int c = spec.col_of(u);
    std::vector<NodeId> out;
    out.reserve(4);
    if (r > 0) out.push_back(spec.id_of(r - 1, c));
    if (c > 0) out.push_back(spec.id_of(r, c - 1));
    if (c + 1 < spec.width) out.push_back(spec.id_of(r, c + 1));
    if (r + 1 < spec.height) out.push_back(spec.id_of(r + 1, c));
    return out;
}

ZigzagDecomposition decompose(const GridSpec& spec, const std::vector<NodeId>& order) {
    const int n = spec.node_count();
    require(static_cast<int>(order.size()) == n, Status::InvalidArg,
            "decompose: order length does not match node count");

    std::vector<int> position(n, -1);
    for (int i = 0; i < n; ++i) {
        const NodeId u = order[i];
        require(u >= 0 && u < n, Status::InvalidArg, "decompose: order contains out-of-range id");
        require(position[u] == -1, Status::InvalidArg, "decompose: order is not a permutation");
        position[u] = i;
    }

    ZigzagDecomposition d;
    d.grid = spec;
    d.order = order;
    d.forward_parents.resize(n);
    d.backward_parents.resize(n);
    for (NodeId u = 0; u < n; ++u) {
        for (NodeId v : neighbors4(spec, u)) {
            if (position[v] < position[u])
                d.forward_parents[u].push_back(v);
            else
                d.backward_parents[u].push_back(v);
        }
    }
    return d;
}

} // namespace dmrf::lattice
