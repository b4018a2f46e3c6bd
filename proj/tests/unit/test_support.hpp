#pragma once

// Shared generators and independent oracles for the unit and acceptance suites.

#include <cmath>
#include <complex>
#include <random>

#include <Eigen/Dense>

#include "qvf/qsim.hpp"

namespace qvf::testing {

using CMatrix = Eigen::MatrixXcd;

/// |a - b| <= rel * max(|a|, |b|) + abs_floor
inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-12) {
    return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

/// 2x2 matrix of a single-qubit gate, written out from the textbook definitions.
inline CMatrix single_qubit_matrix(GateKind kind, double angle) {
    using C = std::complex<double>;
    const double c = std::cos(angle / 2.0);
    const double s = std::sin(angle / 2.0);
    CMatrix m(2, 2);
    switch (kind) {
    case GateKind::RY:
        m << c, -s, s, c;
        break;
    case GateKind::RX:
        m << c, C(0, -s), C(0, -s), c;
        break;
    case GateKind::RZ:
        m << std::polar(1.0, -angle / 2.0), 0, 0, std::polar(1.0, angle / 2.0);
        break;
    default:
        throw std::logic_error("not a single-qubit gate");
    }
    return m;
}

/// Kronecker product written out explicitly (a is the more significant factor).
inline CMatrix kron(const CMatrix &a, const CMatrix &b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

/// I x ... x op_q x ... x I with qubit 0 leftmost (most significant).
inline CMatrix embed(int n, const std::vector<std::pair<int, CMatrix>> &ops) {
    CMatrix out = CMatrix::Identity(1, 1);
    for (int q = 0; q < n; ++q) {
        CMatrix factor = CMatrix::Identity(2, 2);
        for (const auto &[qubit, m] : ops) {
            if (qubit == q) {
                factor = m;
            }
        }
        out = kron(out, factor);
    }
    return out;
}

/// Full 2^n x 2^n matrix of a gate, built from projectors and Kronecker products.
inline CMatrix gate_matrix(int n, const Gate &gate, double angle) {
    if (gate.parameterized()) {
        return embed(n, {{gate.target, single_qubit_matrix(gate.kind, angle)}});
    }
    CMatrix p0 = CMatrix::Zero(2, 2);
    p0(0, 0) = 1;
    CMatrix p1 = CMatrix::Zero(2, 2);
    p1(1, 1) = 1;
    CMatrix pauli(2, 2);
    if (gate.kind == GateKind::CNOT) {
        pauli << 0, 1, 1, 0;
    } else {
        pauli << 1, 0, 0, -1;
    }
    return embed(n, {{*gate.control, p0}}) + embed(n, {{*gate.control, p1}, {gate.target, pauli}});
}

inline CMatrix circuit_matrix(const Circuit &circuit, const ParamVector &params) {
    const std::vector<double> angles = gate_angles(circuit, params);
    const Eigen::Index dim = Eigen::Index{1} << circuit.n_qubits;
    CMatrix u = CMatrix::Identity(dim, dim);
    for (std::size_t k = 0; k < circuit.gates.size(); ++k) {
        u = gate_matrix(circuit.n_qubits, circuit.gates[k], angles[k]) * u;
    }
    return u;
}

/// Random gate sequence; complex kinds only when `allow_complex`.
inline Circuit random_circuit(int n, int layers, std::mt19937_64 &rng, bool allow_complex) {
    Circuit c;
    c.n_qubits = n;
    std::uniform_int_distribution<int> qubit(0, n - 1);
    std::uniform_int_distribution<int> kind_pick(0, allow_complex ? 4 : 2);
    std::bernoulli_distribution flip(0.5);
    for (int l = 0; l < layers; ++l) {
        for (int q = 0; q < n; ++q) {
            int k = kind_pick(rng);
            GateKind kind = k == 0 ? GateKind::RY : k == 1 ? GateKind::CNOT : k == 2 ? GateKind::CZ
                            : k == 3 ? GateKind::RX : GateKind::RZ;
            if ((kind == GateKind::CNOT || kind == GateKind::CZ) && n < 2) {
                kind = GateKind::RY;
            }
            if (kind == GateKind::CNOT || kind == GateKind::CZ) {
                int ctrl = qubit(rng);
                int tgt = qubit(rng);
                while (tgt == ctrl) {
                    tgt = qubit(rng);
                }
                c.gates.push_back(kind == GateKind::CNOT ? Gate::cnot(ctrl, tgt) : Gate::cz(ctrl, tgt));
            } else {
                c.gates.push_back(Gate::rotation(kind, q, c.param_count++, flip(rng) ? 1 : -1));
            }
        }
    }
    return c;
}

inline ParamVector random_angles(std::size_t count, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> a(-M_PI, M_PI);
    ParamVector p(static_cast<Eigen::Index>(count));
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        p[i] = a(rng);
    }
    return p;
}

inline RealStatevector random_real_state(int n, std::mt19937_64 &rng) {
    std::normal_distribution<double> g;
    RealStatevector v(Eigen::Index{1} << n);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v[i] = g(rng);
    }
    return v.normalized();
}

inline ComplexStatevector random_complex_state(int n, std::mt19937_64 &rng) {
    std::normal_distribution<double> g;
    ComplexStatevector v(Eigen::Index{1} << n);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v[i] = {g(rng), g(rng)};
    }
    return v.normalized();
}

} // namespace qvf::testing
