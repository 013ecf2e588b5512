#pragma once

// Droop-controlled swing dynamics on the reduced network, with optional
// per-step droop tampering, RK4/Euler time stepping, episode simulation and
// the episode CSV format.
//
// Tamper convention: a schedule flag at (t, bus) overrides that bus's droop
// for the integration step that PRODUCES states[t]. The first state an
// attack at timestep t can alter is therefore the measurement at t itself,
// and flags at t = 0 are inert (states[0] is the initial condition).

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fdialab/grid.hpp"
#include "fdialab/io.hpp"

namespace fdialab {

struct SystemState {
    VectorXd theta;  // phase angle, rad
    VectorXd omega;  // frequency deviation, rad/s
    double time = 0.0;

    bool finite() const { return theta.allFinite() && omega.allFinite(); }
};

struct IntegrationDivergence : std::runtime_error {
    int timestep;
    explicit IntegrationDivergence(int t)
        : std::runtime_error("integration diverged at timestep " + std::to_string(t)),
          timestep(t) {}
};

// Per-timestep, per-bus droop-tamper flags. Bus indices fit a 64-bit mask.
class AttackSchedule {
public:
    double attack_value = -1.0;

    void add(int timestep, int bus) { masks_[timestep] |= (std::uint64_t{1} << bus); }

    bool is_tampered(int timestep, int bus) const {
        auto it = masks_.find(timestep);
        return it != masks_.end() && (it->second >> bus) & 1;
    }

    bool empty() const { return masks_.empty(); }

    // Nominal droop with flagged buses overridden, for the step producing
    // states[timestep].
    VectorXd effective_droop(const GridModel& grid, int timestep) const {
        VectorXd k = grid.droop;
        auto it = masks_.find(timestep);
        if (it != masks_.end())
            for (int b = 0; b < grid.n_buses; ++b)
                if ((it->second >> b) & 1) k[b] = attack_value;
        return k;
    }

    std::vector<std::pair<int, int>> entries() const {
        std::vector<std::pair<int, int>> out;
        for (const auto& [t, mask] : masks_)
            for (int b = 0; b < 64; ++b)
                if ((mask >> b) & 1) out.emplace_back(t, b);
        return out;
    }

    std::string digest() const {
        std::ostringstream os;
        os << format_double(attack_value);
        for (const auto& [t, b] : entries()) os << ';' << t << ':' << b;
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(hash_tag(os.str())));
        return std::string(buf);
    }

private:
    std::map<int, std::uint64_t> masks_;
};

// p_i^G = k_i * omega_i
inline double droop_power(double k, double omega) { return k * omega; }

// Lossless sine coupling: p_e[i] = sum_j B_ij sin(theta_i - theta_j).
inline VectorXd electrical_power(const SystemState& state, const GridModel& grid) {
    if (state.theta.size() != grid.n_buses)
        throw std::invalid_argument("electrical_power: state/grid dimension mismatch");
    VectorXd pe = VectorXd::Zero(grid.n_buses);
    for (int i = 0; i < grid.n_buses; ++i) {
        double acc = 0.0;
        for (int j = 0; j < grid.n_buses; ++j) {
            double b = grid.coupling(i, j);
            if (b != 0.0) acc += b * std::sin(state.theta[i] - state.theta[j]);
        }
        pe[i] = acc;
    }
    return pe;
}

struct StateDerivative {
    VectorXd dtheta;
    VectorXd domega;
};

// dtheta_i = omega_i
// domega_i = (p_i - p_e_i - D_i omega_i - k_eff_i omega_i) / M_i
inline StateDerivative swing_rhs(const SystemState& state, const GridModel& grid,
                                 const VectorXd& tampered_droop) {
    if (state.omega.size() != grid.n_buses || tampered_droop.size() != grid.n_buses)
        throw std::invalid_argument("swing_rhs: dimension mismatch");
    StateDerivative d;
    d.dtheta = state.omega;
    VectorXd pe = electrical_power(state, grid);
    d.domega = (grid.net_injection - pe -
                (grid.damping + tampered_droop).cwiseProduct(state.omega))
                   .cwiseQuotient(grid.inertia);
    return d;
}

enum class Integrator { rk4, euler };

// Advance one step of size dt; `t` is the index of the state being produced
// and selects the droop override (see tamper convention above).
inline SystemState step(const SystemState& state, const GridModel& grid,
                        const AttackSchedule& schedule, int t, double dt,
                        Integrator method = Integrator::rk4) {
    if (dt <= 0.0) throw std::invalid_argument("step: dt must be positive");
    VectorXd k_eff = schedule.effective_droop(grid, t);

    SystemState next;
    next.time = state.time + dt;
    if (method == Integrator::euler) {
        StateDerivative d = swing_rhs(state, grid, k_eff);
        next.theta = state.theta + dt * d.dtheta;
        next.omega = state.omega + dt * d.domega;
    } else {
        auto eval = [&](const VectorXd& th, const VectorXd& om) {
            SystemState s{th, om, 0.0};
            return swing_rhs(s, grid, k_eff);
        };
        StateDerivative k1 = eval(state.theta, state.omega);
        StateDerivative k2 = eval(state.theta + 0.5 * dt * k1.dtheta,
                                  state.omega + 0.5 * dt * k1.domega);
        StateDerivative k3 = eval(state.theta + 0.5 * dt * k2.dtheta,
                                  state.omega + 0.5 * dt * k2.domega);
        StateDerivative k4 = eval(state.theta + dt * k3.dtheta,
                                  state.omega + dt * k3.domega);
        next.theta = state.theta + (dt / 6.0) * (k1.dtheta + 2.0 * k2.dtheta +
                                                 2.0 * k3.dtheta + k4.dtheta);
        next.omega = state.omega + (dt / 6.0) * (k1.domega + 2.0 * k2.domega +
                                                 2.0 * k3.domega + k4.domega);
    }
    if (!next.finite()) throw IntegrationDivergence(t);
    return next;
}

struct Episode {
    std::vector<SystemState> states;  // length T_ep, states[0] is the init
    double dt = 0.01;
    std::optional<AttackSchedule> schedule;
    std::uint64_t seed = 0;

    int length() const { return static_cast<int>(states.size()); }
    int n_buses() const { return states.empty() ? 0 : static_cast<int>(states[0].theta.size()); }
};

inline Episode simulate_episode(const SystemState& init, const GridModel& grid,
                                const AttackSchedule& schedule, int t_ep, double dt,
                                std::uint64_t seed,
                                Integrator method = Integrator::rk4) {
    if (t_ep < 1) throw std::invalid_argument("simulate_episode: T_ep must be >= 1");
    Episode ep;
    ep.dt = dt;
    ep.seed = seed;
    if (!schedule.empty()) ep.schedule = schedule;
    ep.states.reserve(static_cast<std::size_t>(t_ep));
    SystemState s = init;
    s.time = 0.0;
    ep.states.push_back(s);
    for (int t = 1; t < t_ep; ++t)
        ep.states.push_back(step(ep.states.back(), grid, schedule, t, dt, method));
    return ep;
}

// Energy proxy sum_i M_i omega_i^2, used by the damping property checks.
inline double kinetic_energy(const GridModel& grid, const SystemState& state) {
    return grid.inertia.dot(state.omega.cwiseAbs2());
}

// Lyapunov energy of the swing system: kinetic term plus pairwise coupling
// potential. Non-increasing whenever p = 0, D >= 0 and the effective droop
// is positive.
inline double total_energy(const GridModel& grid, const SystemState& state) {
    double e = 0.5 * grid.inertia.dot(state.omega.cwiseAbs2());
    for (int i = 0; i < grid.n_buses; ++i)
        for (int j = i + 1; j < grid.n_buses; ++j)
            if (grid.coupling(i, j) != 0.0)
                e += grid.coupling(i, j) * (1.0 - std::cos(state.theta[i] - state.theta[j]));
    return e;
}

// ---------------------------------------------------------------------------
// Episode CSV: header `t,theta_0..theta_{n-1},omega_0..omega_{n-1}`, one row
// per timestep, lossless decimal values.

inline void write_episode_csv(const Episode& ep, std::ostream& out) {
    const int n = ep.n_buses();
    out << 't';
    for (int i = 0; i < n; ++i) out << ",theta_" << i;
    for (int i = 0; i < n; ++i) out << ",omega_" << i;
    out << '\n';
    for (const auto& s : ep.states) {
        out << format_double(s.time);
        for (int i = 0; i < n; ++i) out << ',' << format_double(s.theta[i]);
        for (int i = 0; i < n; ++i) out << ',' << format_double(s.omega[i]);
        out << '\n';
    }
}

inline void write_episode_csv(const Episode& ep, const std::string& path) {
    auto out = open_for_write(path, /*binary=*/false);
    write_episode_csv(ep, out);
}

inline Episode read_episode_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("episode CSV: empty file");
    int n = 0;
    {
        std::istringstream hs(line);
        std::string col;
        std::vector<std::string> cols;
        while (std::getline(hs, col, ',')) cols.push_back(col);
        if (cols.empty() || cols[0] != "t" || (cols.size() - 1) % 2 != 0)
            throw FormatError("episode CSV: bad header");
        n = static_cast<int>((cols.size() - 1) / 2);
        for (int i = 0; i < n; ++i)
            if (cols[1 + i] != "theta_" + std::to_string(i) ||
                cols[1 + n + i] != "omega_" + std::to_string(i))
                throw FormatError("episode CSV: bad header");
    }
    Episode ep;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream rs(line);
        SystemState s;
        s.theta.resize(n);
        s.omega.resize(n);
        char comma;
        if (!(rs >> s.time)) throw CorruptFileError("episode CSV: bad row");
        for (int i = 0; i < n; ++i)
            if (!(rs >> comma >> s.theta[i])) throw CorruptFileError("episode CSV: bad row");
        for (int i = 0; i < n; ++i)
            if (!(rs >> comma >> s.omega[i])) throw CorruptFileError("episode CSV: bad row");
        ep.states.push_back(std::move(s));
    }
    if (ep.states.size() >= 2) ep.dt = ep.states[1].time - ep.states[0].time;
    return ep;
}

inline Episode read_episode_csv(const std::string& path) {
    auto in = open_for_read(path, /*binary=*/false);
    return read_episode_csv(in);
}

}  // namespace fdialab
