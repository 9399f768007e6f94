#include "synchrony/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "synchrony/error.hpp"

namespace synchrony {

SwingSystem::SwingSystem(const PowerGrid& grid) {
    const std::size_t n = grid.size();
    alpha_.resize(n);
    power_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        alpha_[i] = grid.nodes[i].alpha;
        power_[i] = grid.nodes[i].power;
    }
    links_.reserve(grid.edge_count());
    for (const auto& e : grid.edges)
        links_.push_back({e.from, e.to, grid.row_coupling(e, e.from), grid.row_coupling(e, e.to)});
}

void SwingSystem::power_residual(std::span<const double> delta, std::span<double> out) const {
    std::copy(power_.begin(), power_.end(), out.begin());
    for (const auto& l : links_) {
        const double s = std::sin(delta[l.j] - delta[l.i]);
        out[l.i] += l.k_ij * s;
        out[l.j] -= l.k_ji * s;
    }
}

void SwingSystem::rhs(std::span<const double> delta, std::span<const double> omega,
                      std::span<double> d_delta, std::span<double> d_omega) const {
    power_residual(delta, d_omega);
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
        d_delta[i] = omega[i];
        d_omega[i] -= alpha_[i] * omega[i];
    }
}

Rk4Stepper::Rk4Stepper(const SwingSystem& system) : system_(system) {
    const std::size_t n = system.size();
    for (auto* v : {&k1d_, &k1w_, &k2d_, &k2w_, &k3d_, &k3w_, &k4d_, &k4w_, &tmpd_, &tmpw_})
        v->assign(n, 0.0);
}

void Rk4Stepper::step(SystemState& state, double dt, double t_after) {
    const std::size_t n = system_.size();
    auto& d = state.delta;
    auto& w = state.omega;
    const double h2 = 0.5 * dt;

    system_.rhs(d, w, k1d_, k1w_);
    for (std::size_t i = 0; i < n; ++i) {
        tmpd_[i] = d[i] + h2 * k1d_[i];
        tmpw_[i] = w[i] + h2 * k1w_[i];
    }
    system_.rhs(tmpd_, tmpw_, k2d_, k2w_);
    for (std::size_t i = 0; i < n; ++i) {
        tmpd_[i] = d[i] + h2 * k2d_[i];
        tmpw_[i] = w[i] + h2 * k2w_[i];
    }
    system_.rhs(tmpd_, tmpw_, k3d_, k3w_);
    for (std::size_t i = 0; i < n; ++i) {
        tmpd_[i] = d[i] + dt * k3d_[i];
        tmpw_[i] = w[i] + dt * k3w_[i];
    }
    system_.rhs(tmpd_, tmpw_, k4d_, k4w_);

    const double h6 = dt / 6.0;
    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) {
        d[i] += h6 * (k1d_[i] + 2.0 * (k2d_[i] + k3d_[i]) + k4d_[i]);
        w[i] += h6 * (k1w_[i] + 2.0 * (k2w_[i] + k3w_[i]) + k4w_[i]);
        finite = finite && std::isfinite(d[i]) && std::isfinite(w[i]);
    }
    if (!finite) throw BlowUpError(t_after, "non-finite state at t = " + std::to_string(t_after));
}

namespace {

void check_dimensions(const PowerGrid& grid, const SystemState& state) {
    if (state.delta.size() != grid.size() || state.omega.size() != grid.size())
        throw ContractError("state dimension " + std::to_string(state.delta.size()) + "/" +
                            std::to_string(state.omega.size()) + " does not match grid size " +
                            std::to_string(grid.size()));
}

}  // namespace

SystemState swing_rhs(const PowerGrid& grid, const SystemState& state) {
    check_dimensions(grid, state);
    SwingSystem system(grid);
    SystemState out(grid.size());
    system.rhs(state.delta, state.omega, out.delta, out.omega);
    return out;
}

SystemState rk4_step(const PowerGrid& grid, const SystemState& state, double dt) {
    check_dimensions(grid, state);
    if (!(dt > 0.0)) throw ContractError("step size must be positive");
    SwingSystem system(grid);
    Rk4Stepper stepper(system);
    SystemState next = state;
    stepper.step(next, dt, dt);
    return next;
}

std::size_t step_count(double t_end, double dt) {
    return static_cast<std::size_t>(std::floor(t_end / dt + 1e-9));
}

Trajectory integrate(const PowerGrid& grid, const SystemState& state0, double dt, double t_end) {
    check_dimensions(grid, state0);
    if (!(dt > 0.0)) throw ContractError("step size must be positive");
    if (t_end < dt * (1.0 - 1e-12)) throw ContractError("t_end must be at least one step");
    SwingSystem system(grid);
    Rk4Stepper stepper(system);
    const std::size_t steps = step_count(t_end, dt);
    Trajectory traj;
    traj.dt = dt;
    traj.states.reserve(steps + 1);
    traj.states.push_back(state0);
    SystemState s = state0;
    for (std::size_t n = 1; n <= steps; ++n) {
        stepper.step(s, dt, static_cast<double>(n) * dt);
        traj.states.push_back(s);
    }
    return traj;
}

double wrap_angle(double x) {
    double y = std::remainder(x, 2.0 * std::numbers::pi);
    if (y <= -std::numbers::pi) y += 2.0 * std::numbers::pi;
    return y;
}

double max_edge_gap(const PowerGrid& grid, std::span<const double> delta) {
    double gap = 0.0;
    for (const auto& e : grid.edges)
        gap = std::max(gap, std::abs(wrap_angle(delta[e.from] - delta[e.to])));
    return gap;
}

namespace {

// Rotating-frame shift: for unbalanced injections the synchronized state has
// common frequency W = sum s_i P_i / sum s_i alpha_i, so solve with P_i - alpha_i W.
std::vector<double> frame_shifted_power(const PowerGrid& grid) {
    double num = 0.0, den = 0.0;
    for (const auto& node : grid.nodes) {
        num += node.divisor * node.power;
        den += node.divisor * node.alpha;
    }
    const double drift = num / den;
    std::vector<double> p(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        p[i] = grid.nodes[i].power - grid.nodes[i].alpha * drift;
    return p;
}

double residual(const SwingSystem& system, std::span<const double> power,
                std::span<const double> delta, std::span<double> out) {
    std::copy(power.begin(), power.end(), out.begin());
    for (const auto& l : system.links()) {
        const double s = std::sin(delta[l.j] - delta[l.i]);
        out[l.i] += l.k_ij * s;
        out[l.j] -= l.k_ji * s;
    }
    double worst = 0.0;
    for (double r : out) worst = std::max(worst, std::abs(r));
    return worst;
}

}  // namespace

SystemState newton_equilibrium(const PowerGrid& grid, const SystemState& guess, int max_iterations) {
    check_dimensions(grid, guess);
    const std::size_t n = grid.size();
    SwingSystem system(grid);
    const auto power = frame_shifted_power(grid);

    std::vector<double> delta(n), f(n);
    for (std::size_t i = 0; i < n; ++i) delta[i] = guess.delta[i] - guess.delta[0];

    constexpr double tolerance = 1e-10;
    if (n == 1) {
        if (residual(system, power, delta, f) <= tolerance) return SystemState(1);
        throw EquilibriumNotFound("single node with nonzero residual injection");
    }

    const auto m = static_cast<Eigen::Index>(n - 1);
    Eigen::MatrixXd jac(m, m);
    Eigen::VectorXd rhs(m);
    for (int it = 0; it <= max_iterations; ++it) {
        const double worst = residual(system, power, delta, f);
        if (!std::isfinite(worst)) break;
        if (worst <= tolerance * 1e-2) break;
        if (it == max_iterations) {
            if (worst <= tolerance) break;
            throw EquilibriumNotFound("Newton did not converge in " +
                                      std::to_string(max_iterations) +
                                      " iterations (residual " + std::to_string(worst) + ")");
        }
        jac.setZero();
        for (const auto& l : system.links()) {
            const double c = std::cos(delta[l.j] - delta[l.i]);
            // d f_i / d delta_j = K_ij cos(d_j - d_i), d f_i / d delta_i = -K_ij cos(...)
            const auto a = static_cast<Eigen::Index>(l.i) - 1;
            const auto b = static_cast<Eigen::Index>(l.j) - 1;
            if (a >= 0) {
                jac(a, a) -= l.k_ij * c;
                if (b >= 0) jac(a, b) += l.k_ij * c;
            }
            if (b >= 0) {
                jac(b, b) -= l.k_ji * c;
                if (a >= 0) jac(b, a) += l.k_ji * c;
            }
        }
        for (Eigen::Index r = 0; r < m; ++r) rhs(r) = -f[static_cast<std::size_t>(r) + 1];
        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible()) throw EquilibriumNotFound("singular Jacobian in Newton iteration");
        Eigen::VectorXd step = lu.solve(rhs);
        for (Eigen::Index r = 0; r < m; ++r) delta[static_cast<std::size_t>(r) + 1] += step(r);
    }
    const double worst = residual(system, power, delta, f);
    if (!(worst <= tolerance))
        throw EquilibriumNotFound("Newton iteration diverged (residual " + std::to_string(worst) + ")");
    for (auto& d : delta) d = wrap_angle(d);
    // Wrapping does not change the residual but re-check to stay honest.
    if (!(residual(system, power, delta, f) <= tolerance))
        throw EquilibriumNotFound("equilibrium lost precision after angle wrapping");
    return SystemState(std::move(delta), std::vector<double>(n, 0.0));
}

SystemState solve_equilibrium(const PowerGrid& grid, const SystemState& guess) {
    std::optional<SystemState> newton;
    try {
        newton = newton_equilibrium(grid, guess);
        if (max_edge_gap(grid, newton->delta) <= std::numbers::pi / 2.0) return *newton;
    } catch (const EquilibriumNotFound&) {
    }
    // Relaxation: the damped dynamics from rest settle into the synchronized
    // basin when one exists; polish the endpoint with Newton.
    SwingSystem system(grid);
    Rk4Stepper stepper(system);
    SystemState s(grid.size());
    constexpr double dt = 0.0125;
    const std::size_t steps = step_count(200.0, dt);
    try {
        for (std::size_t k = 1; k <= steps; ++k) stepper.step(s, dt, static_cast<double>(k) * dt);
        auto polished = newton_equilibrium(grid, s);
        if (!newton || max_edge_gap(grid, polished.delta) <= max_edge_gap(grid, newton->delta))
            return polished;
    } catch (const NumericalError&) {
    }
    if (newton) return *newton;
    throw EquilibriumNotFound("no synchronized equilibrium found (Newton and relaxation failed)");
}

SystemState solve_equilibrium(const PowerGrid& grid) {
    return solve_equilibrium(grid, SystemState(grid.size()));
}

StabilityVerdict classify_stability(const SwingSystem& system, const PowerGrid& grid,
                                    const SystemState& state0, const LabelConfig& config,
                                    std::span<double> omega_record, std::size_t record_steps) {
    check_dimensions(grid, state0);
    const std::size_t n = grid.size();
    const std::size_t steps = step_count(config.t_label, config.dt);
    const std::size_t window_steps = step_count(config.window, config.dt);
    const std::size_t window_start = steps > window_steps ? steps - window_steps : 0;

    auto record = [&](const SystemState& s, std::size_t k) {
        if (k >= record_steps) return;
        for (std::size_t i = 0; i < n; ++i) omega_record[i * record_steps + k] = s.omega[i];
    };

    StabilityVerdict verdict;
    Rk4Stepper stepper(system);
    SystemState s = state0;
    double window_max = 0.0;
    auto track = [&](std::size_t k) {
        if (k < window_start) return;
        for (double w : s.omega) window_max = std::max(window_max, std::abs(w));
    };
    record(s, 0);
    track(0);
    try {
        for (std::size_t k = 1; k <= steps; ++k) {
            stepper.step(s, config.dt, static_cast<double>(k) * config.dt);
            record(s, k);
            track(k);
        }
    } catch (const BlowUpError&) {
        verdict.label = 0;
        verdict.blew_up = true;
        verdict.terminal_max_omega = std::numeric_limits<double>::infinity();
        verdict.terminal_max_gap = std::numeric_limits<double>::quiet_NaN();
        return verdict;
    }
    verdict.terminal_max_omega = window_max;
    verdict.terminal_max_gap = max_edge_gap(grid, s.delta);
    verdict.label = (window_max <= config.eps_omega && verdict.terminal_max_gap <= config.gamma) ? 1 : 0;
    return verdict;
}

StabilityVerdict classify_stability(const PowerGrid& grid, const SystemState& state0,
                                    const LabelConfig& config) {
    SwingSystem system(grid);
    return classify_stability(system, grid, state0, config);
}

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write trajectory file " + path.string());
    const std::size_t n = traj.states.empty() ? 0 : traj.states.front().size();
    out << "t";
    for (std::size_t i = 0; i < n; ++i) out << ",delta_" << i;
    for (std::size_t i = 0; i < n; ++i) out << ",omega_" << i;
    out << '\n';
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf;
    };
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        put(static_cast<double>(k) * traj.dt);
        for (double d : traj.states[k].delta) {
            out << ',';
            put(d);
        }
        for (double w : traj.states[k].omega) {
            out << ',';
            put(w);
        }
        out << '\n';
    }
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open trajectory file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty trajectory file");
    std::size_t columns = 1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    if (line.rfind("t", 0) != 0 || columns < 3 || (columns - 1) % 2 != 0)
        throw ParseError(path.string() + ": line 1: expected header t,delta_0..,omega_0..");
    const std::size_t n = (columns - 1) / 2;

    Trajectory traj;
    std::vector<double> times;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> fields;
        fields.reserve(columns);
        std::size_t pos = 0;
        while (pos <= line.size()) {
            auto next = line.find(',', pos);
            if (next == std::string::npos) next = line.size();
            const std::string cell = line.substr(pos, next - pos);
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end == cell.c_str() || *end != '\0')
                throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                                 ": field " + std::to_string(fields.size() + 1) +
                                 " is not a number");
            fields.push_back(v);
            pos = next + 1;
        }
        if (fields.size() != columns)
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": expected " +
                             std::to_string(columns) + " fields, got " +
                             std::to_string(fields.size()));
        times.push_back(fields[0]);
        traj.states.emplace_back(std::vector<double>(fields.begin() + 1, fields.begin() + 1 + n),
                                 std::vector<double>(fields.begin() + 1 + n, fields.end()));
    }
    if (traj.states.empty()) throw ParseError(path.string() + ": trajectory has no rows");
    traj.dt = times.size() > 1 ? times[1] - times[0] : 0.0;
    return traj;
}

}  // namespace synchrony
