#include "synchrony/adjacency.hpp"

#include <cmath>

#include "synchrony/error.hpp"

namespace synchrony {

AdjacencyVariant adjacency_variant_from_int(int v) {
    if (v < 1 || v > 3) throw ContractError("adjacency variant must be 1, 2 or 3 (got " + std::to_string(v) + ")");
    return static_cast<AdjacencyVariant>(v);
}

std::string to_string(AdjacencyVariant v) {
    switch (v) {
        case AdjacencyVariant::Topology: return "topology";
        case AdjacencyVariant::PowerFlow: return "power-flow";
        case AdjacencyVariant::Capacity: return "capacity";
    }
    return "unknown";
}

DenseMatrix build_adjacency(const PowerGrid& grid, AdjacencyVariant variant,
                            const std::optional<SystemState>& equilibrium, bool signed_power_flow) {
    const std::size_t n = grid.size();
    DenseMatrix b(n);
    switch (variant) {
        case AdjacencyVariant::Topology:
            for (std::size_t i = 0; i < n; ++i) b(i, i) = 1.0;
            for (const auto& e : grid.edges) b(e.from, e.to) = b(e.to, e.from) = 1.0;
            break;
        case AdjacencyVariant::PowerFlow: {
            if (!equilibrium) throw ContractError("power-flow adjacency requires an equilibrium state");
            if (equilibrium->size() != n) throw ContractError("equilibrium dimension does not match grid");
            const auto& d = equilibrium->delta;
            for (const auto& e : grid.edges) {
                const double k = grid.symmetric_coupling(e);
                const double flow = k * std::sin(d[e.from] - d[e.to]);
                b(e.from, e.to) = signed_power_flow ? flow : std::abs(flow);
                b(e.to, e.from) = signed_power_flow ? -flow : std::abs(flow);
            }
            break;
        }
        case AdjacencyVariant::Capacity:
            for (std::size_t i = 0; i < n; ++i) b(i, i) = grid.nodes[i].power;
            for (const auto& e : grid.edges) b(e.from, e.to) = b(e.to, e.from) = grid.symmetric_coupling(e);
            break;
    }
    return b;
}

GraphOperator renormalize(const DenseMatrix& b) {
    const std::size_t n = b.n;
    GraphOperator op;
    op.adjacency = b;
    op.with_self_loops = b;
    for (std::size_t i = 0; i < n; ++i) op.with_self_loops(i, i) += 1.0;
    op.degrees.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) op.degrees[i] += std::abs(op.with_self_loops(i, j));
    op.normalized = DenseMatrix(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = op.degrees[i] * op.degrees[j];
            if (d > 0.0) op.normalized(i, j) = op.with_self_loops(i, j) / std::sqrt(d);
        }
    return op;
}

GraphOperator graph_operator(const PowerGrid& grid, AdjacencyVariant variant,
                             const std::optional<SystemState>& equilibrium) {
    return renormalize(build_adjacency(grid, variant, equilibrium));
}

}  // namespace synchrony
