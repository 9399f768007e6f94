#pragma once

#include <cstddef>
#include <filesystem>
#include <numbers>
#include <span>
#include <vector>

#include "synchrony/grid.hpp"

namespace synchrony {

/// Phase angles (rad, unwrapped) and frequency deviations (rad/s).
struct SystemState {
    std::vector<double> delta;
    std::vector<double> omega;

    SystemState() = default;
    explicit SystemState(std::size_t n) : delta(n, 0.0), omega(n, 0.0) {}
    SystemState(std::vector<double> d, std::vector<double> w)
        : delta(std::move(d)), omega(std::move(w)) {}

    std::size_t size() const noexcept { return delta.size(); }
    bool operator==(const SystemState&) const = default;
};

struct Trajectory {
    double dt = 0.0;
    std::vector<SystemState> states;  // states[n] is the state at t = n * dt
};

struct StabilityVerdict {
    int label = 0;                      // 1 = synchronized (stable), 0 = unstable
    double terminal_max_omega = 0.0;    // max |w_i| over the terminal window
    double terminal_max_gap = 0.0;      // max wrapped |d_i - d_j| over edges at t_label
    bool blew_up = false;
};

/// Finite-horizon surrogate of the synchronization definition.
struct LabelConfig {
    double t_label = 50.0;
    double dt = 0.0125;
    double eps_omega = 0.1;
    double window = 5.0;
    double gamma = std::numbers::pi / 2.0;
};

/// Edge-list form of the normalized swing equations
///   d' = w,  w'_i = -alpha_i w_i + P_i + sum_j K_ij sin(d_j - d_i).
class SwingSystem {
public:
    explicit SwingSystem(const PowerGrid& grid);

    std::size_t size() const noexcept { return alpha_.size(); }

    void rhs(std::span<const double> delta, std::span<const double> omega,
             std::span<double> d_delta, std::span<double> d_omega) const;

    /// P_i + sum_j K_ij sin(d_j - d_i), the frequency-free part of w'_i.
    void power_residual(std::span<const double> delta, std::span<double> out) const;

    const std::vector<double>& alpha() const noexcept { return alpha_; }
    const std::vector<double>& power() const noexcept { return power_; }

    struct Link {
        std::size_t i, j;
        double k_ij;  // row-scaled for node i
        double k_ji;  // row-scaled for node j
    };
    const std::vector<Link>& links() const noexcept { return links_; }

private:
    std::vector<double> alpha_;
    std::vector<double> power_;
    std::vector<Link> links_;
};

/// Classical fixed-step RK4 with reusable stage buffers.
class Rk4Stepper {
public:
    explicit Rk4Stepper(const SwingSystem& system);

    /// Advance `state` in place by dt. Throws BlowUpError (tagged with
    /// `t_after`) if any entry becomes non-finite.
    void step(SystemState& state, double dt, double t_after = 0.0);

private:
    const SwingSystem& system_;
    std::vector<double> k1d_, k1w_, k2d_, k2w_, k3d_, k3w_, k4d_, k4w_, tmpd_, tmpw_;
};

SystemState swing_rhs(const PowerGrid& grid, const SystemState& state);
SystemState rk4_step(const PowerGrid& grid, const SystemState& state, double dt);

/// Number of steps for a horizon, robust to t_end / dt landing just below an integer.
std::size_t step_count(double t_end, double dt);

/// floor(t_end / dt) + 1 states starting at state0.
Trajectory integrate(const PowerGrid& grid, const SystemState& state0, double dt, double t_end);

/// Pure Newton iteration on the phase residual with node 0 pinned to 0.
SystemState newton_equilibrium(const PowerGrid& grid, const SystemState& guess,
                               int max_iterations = 100);

/// Newton from `guess`; on failure, or when Newton lands on an equilibrium
/// with an edge gap above pi/2, relax the dynamics from rest for 200 s and
/// polish with Newton.
SystemState solve_equilibrium(const PowerGrid& grid, const SystemState& guess);
SystemState solve_equilibrium(const PowerGrid& grid);

/// max over edges of the wrapped phase difference |d_i - d_j| in [0, pi].
double max_edge_gap(const PowerGrid& grid, std::span<const double> delta);

/// Wrap an angle into (-pi, pi].
double wrap_angle(double x);

StabilityVerdict classify_stability(const PowerGrid& grid, const SystemState& state0,
                                    const LabelConfig& config = {});
StabilityVerdict classify_stability(const SwingSystem& system, const PowerGrid& grid,
                                    const SystemState& state0, const LabelConfig& config,
                                    std::span<double> omega_record = {},
                                    std::size_t record_steps = 0);

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

}  // namespace synchrony
