#pragma once

/**
 * @file qsim.hpp
 * Statevector simulation of small qubit registers.
 *
 * States are dense Eigen column vectors of 2^n amplitudes, templated on the
 * scalar type: `double` for the real-subspace fast path, `std::complex<double>`
 * for circuits that leave it. Qubit 0 is the most significant bit of the
 * basis index. Every routine also accepts a StateBatch (one amplitude per
 * row, one query per column), so a whole coordinate batch is evolved with a
 * single pass over the gate list.
 */

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Jacobi>

#include "qvf/errors.hpp"

namespace qvf {

template <typename Scalar> using Statevector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RealStatevector = Statevector<double>;
using ComplexStatevector = Statevector<std::complex<double>>;

/// Row-major so that each basis amplitude is contiguous across the batch.
template <typename Scalar>
using StateBatch = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rotation angles (radians). Periodic mod 2pi but never wrapped in storage.
using ParamVector = Eigen::VectorXd;

enum class GateKind { RY, RX, RZ, CNOT, CZ };

std::string to_string(GateKind kind);

struct Gate {
    GateKind kind = GateKind::RY;
    int target = 0;
    std::optional<int> control;
    std::optional<std::size_t> param_index;
    /// Multiplier on the bound angle; -1 marks the adjoint half of a mirrored block.
    int sign = 1;

    static Gate rotation(GateKind kind, int target, std::size_t param, int sign = 1) {
        return Gate{kind, target, std::nullopt, param, sign};
    }
    static Gate ry(int target, std::size_t param, int sign = 1) {
        return rotation(GateKind::RY, target, param, sign);
    }
    static Gate cnot(int control, int target) {
        return Gate{GateKind::CNOT, target, control, std::nullopt, 1};
    }
    static Gate cz(int control, int target) {
        return Gate{GateKind::CZ, target, control, std::nullopt, 1};
    }

    [[nodiscard]] bool parameterized() const {
        return kind == GateKind::RY || kind == GateKind::RX || kind == GateKind::RZ;
    }
    /// RY, CNOT and CZ have real matrices and keep real states real.
    [[nodiscard]] bool real() const { return kind != GateKind::RX && kind != GateKind::RZ; }

    /// Structural checks; throws ConfigError or IndexError.
    void validate(int n_qubits) const;
};

/// Ordered gate list over a fixed register. `param_count` is the length of the
/// ParamVector the gates index into.
struct Circuit {
    int n_qubits = 0;
    std::vector<Gate> gates;
    std::size_t param_count = 0;

    [[nodiscard]] bool real() const {
        return std::all_of(gates.begin(), gates.end(), [](const Gate &g) { return g.real(); });
    }
    void validate() const;
};

struct MeasurementSpec {
    std::vector<int> qubits;

    /// Pauli-Z on qubits 0..m-1.
    static MeasurementSpec first(int m);
    [[nodiscard]] int size() const { return static_cast<int>(qubits.size()); }
    void validate(int n_qubits) const;
};

struct NoiseSpec {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

/// log2 of a power-of-two dimension; throws ConfigError otherwise.
int qubit_count(Eigen::Index dim);

namespace detail {

template <typename Derived> constexpr bool is_complex_v = Eigen::NumTraits<typename Derived::Scalar>::IsComplex;

inline Eigen::Index stride_of(int qubit, int n_qubits) {
    return Eigen::Index{1} << (n_qubits - 1 - qubit);
}

inline bool bit_set(Eigen::Index basis, int qubit, int n_qubits) {
    return (basis & stride_of(qubit, n_qubits)) != 0;
}

/// +1/-1 eigenvalues of Z on each measured qubit, one row per measured qubit.
Eigen::MatrixXd z_sign_table(const MeasurementSpec &spec, int n_qubits);

} // namespace detail

/**
 * Applies one gate in place. For a batch the same gate (and angle) acts on
 * every column. RX/RZ on a real state raise ModeError.
 */
template <typename Derived>
void apply_gate(Eigen::MatrixBase<Derived> &states, const Gate &gate, double angle) {
    using Scalar = typename Derived::Scalar;
    const int n = qubit_count(states.rows());
    gate.validate(n);
    if constexpr (!detail::is_complex_v<Derived>) {
        if (!gate.real()) {
            throw ModeError(to_string(gate.kind) + " is not allowed on a real statevector");
        }
    }

    const Eigen::Index dim = states.rows();
    const Eigen::Index t_stride = detail::stride_of(gate.target, n);
    const double c = std::cos(angle / 2.0);
    const double s = std::sin(angle / 2.0);

    auto for_each_pair = [&](auto &&op) {
        for (Eigen::Index base = 0; base < dim; base += 2 * t_stride) {
            for (Eigen::Index off = 0; off < t_stride; ++off) {
                op(base + off, base + off + t_stride);
            }
        }
    };

    switch (gate.kind) {
    case GateKind::RY: {
        // rows (a, b) -> (c a - s b, s a + c b)
        const Eigen::JacobiRotation<double> rot(c, -s);
        for_each_pair([&](Eigen::Index i0, Eigen::Index i1) { states.applyOnTheLeft(i0, i1, rot); });
        break;
    }
    case GateKind::RX: {
        if constexpr (detail::is_complex_v<Derived>) {
            const Eigen::JacobiRotation<Scalar> rot(Scalar(c, 0.0), Scalar(0.0, s));
            for_each_pair([&](Eigen::Index i0, Eigen::Index i1) { states.applyOnTheLeft(i0, i1, rot); });
        }
        break;
    }
    case GateKind::RZ: {
        if constexpr (detail::is_complex_v<Derived>) {
            const Scalar lo(c, -s);
            const Scalar hi(c, s);
            for_each_pair([&](Eigen::Index i0, Eigen::Index i1) {
                states.row(i0) *= lo;
                states.row(i1) *= hi;
            });
        }
        break;
    }
    case GateKind::CNOT: {
        const int ctrl = *gate.control;
        for_each_pair([&](Eigen::Index i0, Eigen::Index i1) {
            if (detail::bit_set(i0, ctrl, n)) {
                states.row(i0).swap(states.row(i1));
            }
        });
        break;
    }
    case GateKind::CZ: {
        const int ctrl = *gate.control;
        for_each_pair([&](Eigen::Index, Eigen::Index i1) {
            if (detail::bit_set(i1, ctrl, n)) {
                states.row(i1) *= Scalar(-1);
            }
        });
        break;
    }
    }
}

/// Angle actually applied by each gate: sign * params[param_index], 0 for entanglers.
std::vector<double> gate_angles(const Circuit &circuit, const ParamVector &params);

/// Applies the gates in order using explicit per-gate angles.
template <typename Derived>
void run_gates(Eigen::MatrixBase<Derived> &states, const Circuit &circuit, std::span<const double> angles) {
    for (std::size_t k = 0; k < circuit.gates.size(); ++k) {
        apply_gate(states, circuit.gates[k], angles[k]);
    }
}

/**
 * Evolves `states` through the circuit. With noise, every parameterized gate
 * angle receives an independent N(0, sigma^2) offset drawn from a generator
 * seeded by `noise->seed`; sigma == 0 is bit-identical to the noiseless run.
 */
template <typename Derived>
void run_circuit(Eigen::MatrixBase<Derived> &states, const Circuit &circuit, const ParamVector &params,
                 const std::optional<NoiseSpec> &noise = std::nullopt) {
    std::vector<double> angles = gate_angles(circuit, params);
    if (noise && noise->sigma < 0.0) {
        throw ConfigError("noise sigma must be >= 0");
    }
    if (noise && noise->sigma > 0.0) {
        std::mt19937_64 rng(noise->seed);
        std::normal_distribution<double> offset(0.0, noise->sigma);
        for (std::size_t k = 0; k < angles.size(); ++k) {
            if (circuit.gates[k].parameterized()) {
                angles[k] += offset(rng);
            }
        }
    }
    run_gates(states, circuit, angles);
}

/// Returns <Z_q> for each measured qubit: an m x cols matrix (m-vector for one state).
template <typename Derived>
Eigen::MatrixXd expect_z(const Eigen::MatrixBase<Derived> &states, const MeasurementSpec &spec) {
    const int n = qubit_count(states.rows());
    spec.validate(n);
    const Eigen::MatrixXd probs = states.cwiseAbs2().template cast<double>();
    return detail::z_sign_table(spec, n) * probs;
}

/// Finite-shot estimate of <Z_q>: (#0 - #1) / n_shots per measured qubit.
template <typename Scalar>
Eigen::VectorXd sample_shots(const Statevector<Scalar> &state, const MeasurementSpec &spec, long n_shots,
                             std::uint64_t seed) {
    if (n_shots < 1) {
        throw ConfigError("n_shots must be >= 1");
    }
    const int n = qubit_count(state.size());
    spec.validate(n);
    const Eigen::VectorXd probs = state.cwiseAbs2().template cast<double>();
    std::discrete_distribution<Eigen::Index> outcome(probs.data(), probs.data() + probs.size());
    std::mt19937_64 rng(seed);

    Eigen::VectorXd counts = Eigen::VectorXd::Zero(probs.size());
    for (long shot = 0; shot < n_shots; ++shot) {
        counts[outcome(rng)] += 1.0;
    }
    return detail::z_sign_table(spec, n) * counts / static_cast<double>(n_shots);
}

/**
 * Parameter-shift gradient of sum_i upstream_i <Z_i> with respect to every
 * circuit parameter. Each gate occurrence is shifted by +-pi/2 on its own;
 * parameters that appear in several gates accumulate the occurrences.
 */
template <typename Scalar>
ParamVector grad_params_shift(const Circuit &circuit, const ParamVector &params, const Statevector<Scalar> &input,
                              const MeasurementSpec &spec, const Eigen::VectorXd &upstream) {
    if (static_cast<std::size_t>(params.size()) != circuit.param_count) {
        throw ConfigError("parameter vector length does not match the circuit");
    }
    const std::vector<double> base = gate_angles(circuit, params);
    auto weighted = [&](std::span<const double> angles) {
        Statevector<Scalar> state = input;
        run_gates(state, circuit, angles);
        const Eigen::VectorXd v = expect_z(state, spec);
        return upstream.dot(v);
    };

    ParamVector grad = ParamVector::Zero(params.size());
    std::vector<double> shifted = base;
    for (std::size_t k = 0; k < circuit.gates.size(); ++k) {
        const Gate &gate = circuit.gates[k];
        if (!gate.parameterized()) {
            continue;
        }
        shifted[k] = base[k] + std::numbers::pi / 2.0;
        const double plus = weighted(shifted);
        shifted[k] = base[k] - std::numbers::pi / 2.0;
        const double minus = weighted(shifted);
        shifted[k] = base[k];
        grad[static_cast<Eigen::Index>(*gate.param_index)] += gate.sign * 0.5 * (plus - minus);
    }
    return grad;
}

/// Parameter-shift derivative with respect to a single parameter.
template <typename Scalar>
double grad_param_shift(const Circuit &circuit, const ParamVector &params, const Statevector<Scalar> &input,
                        const MeasurementSpec &spec, const Eigen::VectorXd &upstream, std::size_t param) {
    const std::vector<double> base = gate_angles(circuit, params);
    std::vector<double> shifted = base;
    double derivative = 0.0;
    for (std::size_t k = 0; k < circuit.gates.size(); ++k) {
        const Gate &gate = circuit.gates[k];
        if (!gate.param_index || *gate.param_index != param) {
            continue;
        }
        double v[2];
        for (int side = 0; side < 2; ++side) {
            shifted[k] = base[k] + (side == 0 ? 0.5 : -0.5) * std::numbers::pi;
            Statevector<Scalar> state = input;
            run_gates(state, circuit, shifted);
            v[side] = upstream.dot(expect_z(state, spec).col(0));
        }
        shifted[k] = base[k];
        derivative += gate.sign * 0.5 * (v[0] - v[1]);
    }
    return derivative;
}

/// Gradients from one reverse sweep over a batch of real states.
struct AdjointGradients {
    /// d/d(params) of sum over columns of sum_i upstream(i, col) <Z_i>.
    ParamVector params;
    /// Per-column gradient with respect to the circuit's input amplitudes.
    StateBatch<double> input;
};

/**
 * Reverse-mode sweep for real circuits. `final_states` are the circuit
 * outputs (consumed: they are uncomputed back to the inputs). For each
 * rotation the returned derivative equals the parameter-shift difference
 * 0.5 [V(a + pi/2) - V(a - pi/2)], evaluated in closed form as
 * lambda^T A psi with A the RY generator on the target qubit.
 */
AdjointGradients adjoint_backward(const Circuit &circuit, const ParamVector &params, StateBatch<double> final_states,
                                  const MeasurementSpec &spec, const Eigen::MatrixXd &upstream);

/**
 * Gradient of sum_i upstream_i <Z_i> with respect to the (unnormalized) input
 * amplitudes: 2 S^T O_w S alpha with O_w = sum_i upstream_i Z_i.
 */
RealStatevector grad_input_adjoint(const Circuit &circuit, const ParamVector &params, const RealStatevector &input,
                                   const MeasurementSpec &spec, const Eigen::VectorXd &upstream);

/// Input-amplitude gradients are only defined on the real fast path.
RealStatevector grad_input_adjoint(const Circuit &circuit, const ParamVector &params, const ComplexStatevector &input,
                                   const MeasurementSpec &spec, const Eigen::VectorXd &upstream);

} // namespace qvf
