#pragma once

// Kron-reduced network model: per-bus physical parameters plus the coupling
// (susceptance) matrix, the derived GCN adjacency weights, and the
// grid-config text format.
//
// The shipped 10-bus parameter set is a documented stand-in for the
// Kron-reduced New England system: nominal dynamics settle within a 5 s
// episode, tampering bus 7's droop to -1 destabilizes the system, and bus 9
// carries enough damping that the same tamper barely registers there.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "fdialab/io.hpp"
#include "fdialab/rng.hpp"

namespace fdialab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct GridModel {
    int n_buses = 0;
    VectorXd inertia;        // M_i > 0, p.u. s^2
    VectorXd damping;        // D_i >= 0, p.u. s
    VectorXd droop;          // k_i, p.u. s (nominal, untampered)
    VectorXd net_injection;  // p_i, p.u.
    MatrixXd coupling;       // B, symmetric, zero diagonal, p.u.
    MatrixXd adjacency_weights;  // W for the GCN, derived from |B|

    void validate() const {
        auto expect = [&](bool ok, const char* what) {
            if (!ok) throw FormatError(std::string("grid model invalid: ") + what);
        };
        expect(n_buses >= 1, "n_buses must be >= 1");
        expect(inertia.size() == n_buses && damping.size() == n_buses &&
                   droop.size() == n_buses && net_injection.size() == n_buses,
               "per-bus vectors must have n_buses entries");
        expect(coupling.rows() == n_buses && coupling.cols() == n_buses,
               "coupling must be n_buses x n_buses");
        for (int i = 0; i < n_buses; ++i) {
            expect(inertia[i] > 0.0, "inertia must be positive");
            expect(damping[i] >= 0.0, "damping must be nonnegative");
            expect(coupling(i, i) == 0.0, "coupling diagonal must be zero");
            for (int j = 0; j < n_buses; ++j)
                expect(std::abs(coupling(i, j) - coupling(j, i)) <= 1e-12,
                       "coupling must be symmetric");
        }
    }

    // W_ij = |B_ij| normalized by the row maximum; zero rows stay zero.
    void derive_adjacency() {
        adjacency_weights = coupling.cwiseAbs();
        for (int i = 0; i < n_buses; ++i) {
            double row_max = adjacency_weights.row(i).maxCoeff();
            if (row_max > 0.0) adjacency_weights.row(i) /= row_max;
        }
    }

    std::string digest() const {
        std::ostringstream os;
        os << n_buses;
        auto put = [&](const double* p, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) os << ',' << format_double(p[i]);
        };
        put(inertia.data(), inertia.size());
        put(damping.data(), damping.size());
        put(droop.data(), droop.size());
        put(net_injection.data(), net_injection.size());
        put(coupling.data(), static_cast<std::size_t>(coupling.size()));
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(hash_tag(os.str())));
        return std::string(buf);
    }
};

inline GridModel make_grid(int n_buses, VectorXd m, VectorXd d, VectorXd k,
                           VectorXd p, MatrixXd b) {
    GridModel g;
    g.n_buses = n_buses;
    g.inertia = std::move(m);
    g.damping = std::move(d);
    g.droop = std::move(k);
    g.net_injection = std::move(p);
    g.coupling = std::move(b);
    g.validate();
    g.derive_adjacency();
    return g;
}

// Default 10-bus stand-in parameter set (see header comment).
inline GridModel default_grid() {
    const int n = 10;
    VectorXd m(n), d(n), k(n), p(n);
    m << 0.20, 0.22, 0.25, 0.16, 0.28, 0.24, 0.30, 0.10, 0.26, 1.20;
    d << 0.14, 0.16, 0.15, 0.12, 0.18, 0.15, 0.22, 0.06, 0.17, 2.00;
    k << 0.36, 0.40, 0.42, 0.32, 0.44, 0.40, 0.46, 0.30, 0.42, 0.10;
    p.setZero();
    MatrixXd b = MatrixXd::Zero(n, n);
    auto edge = [&](int i, int j, double w) { b(i, j) = w; b(j, i) = w; };
    // Ring backbone plus a handful of chords, mimicking a reduced network.
    // Stiff enough for underdamped inter-area swings (the overshoot phase),
    // settling within the 5 s episode.
    edge(0, 1, 1.6); edge(1, 2, 1.4); edge(2, 3, 1.5); edge(3, 4, 1.3);
    edge(4, 5, 1.5); edge(5, 6, 1.2); edge(6, 7, 1.4); edge(7, 8, 1.5);
    edge(8, 9, 1.3); edge(9, 0, 1.1);
    edge(0, 4, 0.6); edge(1, 6, 0.5); edge(2, 7, 0.5); edge(3, 8, 0.5);
    edge(5, 9, 0.6); edge(2, 5, 0.5);
    return make_grid(n, m, d, k, p, b);
}

// ---------------------------------------------------------------------------
// Grid-config text format:
//
//   # comments and blank lines are ignored
//   n_buses 10
//   M  <n values>
//   D  <n values>
//   k  <n values>
//   p  <n values>
//   B
//   <n rows of n values>

inline void save_grid_config(const GridModel& g, std::ostream& out) {
    out << "# fdialab grid configuration\n";
    out << "n_buses " << g.n_buses << "\n";
    auto row = [&](const char* name, const VectorXd& v) {
        out << name;
        for (int i = 0; i < v.size(); ++i) out << ' ' << format_double(v[i]);
        out << '\n';
    };
    row("M", g.inertia);
    row("D", g.damping);
    row("k", g.droop);
    row("p", g.net_injection);
    out << "B\n";
    for (int i = 0; i < g.n_buses; ++i) {
        for (int j = 0; j < g.n_buses; ++j)
            out << (j ? " " : "") << format_double(g.coupling(i, j));
        out << '\n';
    }
}

inline void save_grid_config(const GridModel& g, const std::string& path) {
    auto out = open_for_write(path, /*binary=*/false);
    save_grid_config(g, out);
}

inline GridModel load_grid_config(std::istream& in) {
    int n = -1;
    VectorXd m, d, k, p;
    MatrixXd b;
    bool have_b = false;

    auto next_data_line = [&](std::string& line) -> bool {
        while (std::getline(in, line)) {
            auto pos = line.find_first_not_of(" \t\r");
            if (pos == std::string::npos) continue;
            if (line[pos] == '#') continue;
            return true;
        }
        return false;
    };
    auto parse_values = [&](std::istringstream& ss, int count, const std::string& what) {
        VectorXd v(count);
        for (int i = 0; i < count; ++i)
            if (!(ss >> v[i]))
                throw FormatError("grid config: expected " + std::to_string(count) +
                                  " values for " + what);
        double extra;
        if (ss >> extra) throw FormatError("grid config: too many values for " + what);
        return v;
    };

    std::string line;
    while (next_data_line(line)) {
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "n_buses") {
            if (!(ss >> n) || n < 1) throw FormatError("grid config: bad n_buses");
        } else if (key == "M" || key == "D" || key == "k" || key == "p") {
            if (n < 1) throw FormatError("grid config: n_buses must come first");
            VectorXd v = parse_values(ss, n, key);
            if (key == "M") m = v;
            else if (key == "D") d = v;
            else if (key == "k") k = v;
            else p = v;
        } else if (key == "B") {
            if (n < 1) throw FormatError("grid config: n_buses must come first");
            b.resize(n, n);
            for (int i = 0; i < n; ++i) {
                if (!next_data_line(line))
                    throw FormatError("grid config: B matrix truncated");
                std::istringstream rs(line);
                VectorXd row = parse_values(rs, n, "B row " + std::to_string(i));
                b.row(i) = row.transpose();
            }
            have_b = true;
        } else {
            throw FormatError("grid config: unknown field '" + key + "'");
        }
    }
    if (n < 1 || m.size() != n || d.size() != n || k.size() != n || p.size() != n || !have_b)
        throw FormatError("grid config: missing one of n_buses/M/D/k/p/B");
    return make_grid(n, m, d, k, p, b);
}

inline GridModel load_grid_config(const std::string& path) {
    auto in = open_for_read(path, /*binary=*/false);
    return load_grid_config(in);
}

}  // namespace fdialab
