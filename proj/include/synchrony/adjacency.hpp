#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "synchrony/dynamics.hpp"
#include "synchrony/grid.hpp"

namespace synchrony {

/// Grid-informed adjacency variants.
///   Topology:  B_ij = 1 on edges and the diagonal.
///   PowerFlow: B_ij = |K_ij sin(d*_i - d*_j)| on edges (needs an equilibrium).
///   Capacity:  B_ij = K_ij on edges, B_ii = P_i.
enum class AdjacencyVariant : int { Topology = 1, PowerFlow = 2, Capacity = 3 };

AdjacencyVariant adjacency_variant_from_int(int v);
std::string to_string(AdjacencyVariant v);

/// Dense row-major square matrix.
struct DenseMatrix {
    std::size_t n = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    explicit DenseMatrix(std::size_t size) : n(size), data(size * size, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
    bool operator==(const DenseMatrix&) const = default;
};

/// B (before self-loops), B_hat = B + I, absolute-value degrees and the
/// renormalized operator D^-1/2 B_hat D^-1/2.
struct GraphOperator {
    DenseMatrix adjacency;
    DenseMatrix with_self_loops;
    std::vector<double> degrees;
    DenseMatrix normalized;
};

/// Builds B. `signed_power_flow` keeps the raw antisymmetric
/// K_ij sin(d*_i - d*_j) entries for inspection; the model always uses |.|.
DenseMatrix build_adjacency(const PowerGrid& grid, AdjacencyVariant variant,
                            const std::optional<SystemState>& equilibrium = std::nullopt,
                            bool signed_power_flow = false);

/// D^-1/2 (B + I) D^-1/2 with D_ii = sum_j |B_hat_ij|; zero-degree rows stay zero.
GraphOperator renormalize(const DenseMatrix& b);

GraphOperator graph_operator(const PowerGrid& grid, AdjacencyVariant variant,
                             const std::optional<SystemState>& equilibrium = std::nullopt);

}  // namespace synchrony
