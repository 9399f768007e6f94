#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace synchrony {

using Fingerprint = std::array<std::uint8_t, 32>;

/// Per-line transfer capacity in the raw (un-normalized) swing model.
struct RawLine {
    std::size_t from = 0;
    std::size_t to = 0;
    double p_max = 0.0;

    /// Lossless line capacity |V_i| |V_j| Im(Y_ij).
    static double from_voltages(double v_from, double v_to, double susceptance) {
        return v_from * v_to * susceptance;
    }
};

/// Machine data of the un-normalized swing model
///   I_i w_syn dw_i/dt + D_i w_i = P_m,i - sum_j P^max_ij sin(d_i - d_j).
struct RawMachineParams {
    std::vector<double> inertia;
    std::vector<double> damping;
    std::vector<double> p_mech;
    double omega_syn = 1.0;
};

struct GridNode {
    double alpha = 0.0;   // damping rate, 1/s
    double power = 0.0;   // normalized injection, 1/s^2
    // Row scaling I_i * w_syn applied to the symmetric line coupling. Equal
    // to 1 when the grid was given in normalized form.
    double divisor = 1.0;
    std::optional<double> inertia;
    std::optional<double> damping;
    std::optional<double> p_mech;
    std::string label;
};

struct GridEdge {
    std::size_t from = 0;
    std::size_t to = 0;
    // Symmetric coupling. For raw grids this is P^max_ij, for normalized
    // grids it is K_ij itself (all divisors are 1).
    double coupling = 0.0;
};

/// Network of second-order phase oscillators. Row i of the coupling matrix
/// is coupling / divisor_i, which makes K asymmetric when inertias differ.
struct PowerGrid {
    std::string name;
    double omega_syn = 1.0;
    std::vector<GridNode> nodes;
    std::vector<GridEdge> edges;

    std::size_t size() const noexcept { return nodes.size(); }
    std::size_t edge_count() const noexcept { return edges.size(); }

    /// K_ij as seen from node `row` (row-scaled).
    double row_coupling(const GridEdge& e, std::size_t row) const {
        return e.coupling / nodes[row].divisor;
    }
    /// Symmetric coupling used by the adjacency builders.
    double symmetric_coupling(const GridEdge& e) const;

    double power_sum() const;
    /// sum_i P_i / alpha_i
    double power_over_damping_sum() const;
    /// True when every node carries unit divisor (grid given as alpha, P, K).
    bool is_normalized() const;
};

/// Convert raw machine data into the normalized network
///   alpha_i = D_i / (I_i w_syn), P_i = P_m,i / (I_i w_syn), K_ij = P^max_ij / (I_i w_syn).
/// Throws ParameterError for non-positive I, D, w_syn and TopologyError for
/// disconnected or malformed topologies.
PowerGrid normalize_parameters(const RawMachineParams& raw, std::span<const RawLine> lines);

/// Structural and numeric violations; empty means the grid is valid.
std::vector<std::string> validate(const PowerGrid& grid);

/// Non-fatal remarks (currently only the power-balance warning).
std::vector<std::string> warnings(const PowerGrid& grid);

PowerGrid parse_grid(const std::string& text);
PowerGrid load_grid(const std::filesystem::path& path);

std::string serialize_grid(const PowerGrid& grid);
void save_grid(const PowerGrid& grid, const std::filesystem::path& path);

/// SHA-256 of the canonical serialization.
Fingerprint fingerprint(const PowerGrid& grid);
Fingerprint sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Fingerprint& fp);

}  // namespace synchrony
