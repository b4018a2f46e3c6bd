#include "qvf/qsim.hpp"

#include <set>

namespace qvf {

std::string to_string(GateKind kind) {
    switch (kind) {
    case GateKind::RY:
        return "RY";
    case GateKind::RX:
        return "RX";
    case GateKind::RZ:
        return "RZ";
    case GateKind::CNOT:
        return "CNOT";
    case GateKind::CZ:
        return "CZ";
    }
    return "?";
}

void Gate::validate(int n_qubits) const {
    if (target < 0 || target >= n_qubits) {
        throw IndexError("gate target " + std::to_string(target) + " out of range for " +
                         std::to_string(n_qubits) + " qubits");
    }
    if (parameterized()) {
        if (!param_index || control) {
            throw ConfigError(to_string(kind) + " needs a parameter index and no control");
        }
    } else {
        if (!control || param_index) {
            throw ConfigError(to_string(kind) + " needs a control qubit and no parameter");
        }
        if (*control < 0 || *control >= n_qubits) {
            throw IndexError("gate control " + std::to_string(*control) + " out of range");
        }
        if (*control == target) {
            throw ConfigError(to_string(kind) + " control equals target");
        }
    }
    if (sign != 1 && sign != -1) {
        throw ConfigError("gate sign must be +1 or -1");
    }
}

void Circuit::validate() const {
    if (n_qubits < 1) {
        throw ConfigError("circuit needs at least one qubit");
    }
    for (const Gate &g : gates) {
        g.validate(n_qubits);
        if (g.param_index && *g.param_index >= param_count) {
            throw ConfigError("gate parameter index exceeds the circuit parameter count");
        }
    }
}

MeasurementSpec MeasurementSpec::first(int m) {
    MeasurementSpec spec;
    for (int q = 0; q < m; ++q) {
        spec.qubits.push_back(q);
    }
    return spec;
}

void MeasurementSpec::validate(int n_qubits) const {
    std::set<int> seen;
    for (int q : qubits) {
        if (q < 0 || q >= n_qubits) {
            throw IndexError("measured qubit " + std::to_string(q) + " out of range");
        }
        if (!seen.insert(q).second) {
            throw ConfigError("measured qubits must be distinct");
        }
    }
}

int qubit_count(Eigen::Index dim) {
    if (dim < 2 || (dim & (dim - 1)) != 0) {
        throw ConfigError("statevector length " + std::to_string(dim) + " is not a power of two >= 2");
    }
    int n = 0;
    while ((Eigen::Index{1} << n) < dim) {
        ++n;
    }
    return n;
}

namespace detail {

Eigen::MatrixXd z_sign_table(const MeasurementSpec &spec, int n_qubits) {
    const Eigen::Index dim = Eigen::Index{1} << n_qubits;
    Eigen::MatrixXd signs(spec.size(), dim);
    for (int i = 0; i < spec.size(); ++i) {
        for (Eigen::Index b = 0; b < dim; ++b) {
            signs(i, b) = bit_set(b, spec.qubits[static_cast<std::size_t>(i)], n_qubits) ? -1.0 : 1.0;
        }
    }
    return signs;
}

} // namespace detail

std::vector<double> gate_angles(const Circuit &circuit, const ParamVector &params) {
    if (static_cast<std::size_t>(params.size()) != circuit.param_count) {
        throw ConfigError("parameter vector has " + std::to_string(params.size()) + " entries, circuit expects " +
                          std::to_string(circuit.param_count));
    }
    std::vector<double> angles(circuit.gates.size(), 0.0);
    for (std::size_t k = 0; k < circuit.gates.size(); ++k) {
        const Gate &g = circuit.gates[k];
        if (g.param_index) {
            angles[k] = g.sign * params[static_cast<Eigen::Index>(*g.param_index)];
        }
    }
    return angles;
}

AdjointGradients adjoint_backward(const Circuit &circuit, const ParamVector &params, StateBatch<double> final_states,
                                  const MeasurementSpec &spec, const Eigen::MatrixXd &upstream) {
    if (!circuit.real()) {
        throw ModeError("adjoint sweep requires a real circuit");
    }
    const int n = qubit_count(final_states.rows());
    spec.validate(n);
    if (upstream.rows() != spec.size() || upstream.cols() != final_states.cols()) {
        throw ConfigError("upstream gradient shape does not match measurement x batch");
    }
    const std::vector<double> angles = gate_angles(circuit, params);

    // lambda = O_w psi, with O_w diagonal per column.
    const Eigen::MatrixXd weights = detail::z_sign_table(spec, n).transpose() * upstream;
    StateBatch<double> psi = std::move(final_states);
    StateBatch<double> lambda = weights.cwiseProduct(psi);

    ParamVector grad = ParamVector::Zero(params.size());
    const Eigen::Index dim = psi.rows();
    for (std::size_t k = circuit.gates.size(); k-- > 0;) {
        const Gate &gate = circuit.gates[k];
        if (gate.kind == GateKind::RY) {
            const Eigen::Index stride = detail::stride_of(gate.target, n);
            double d_angle = 0.0;
            for (Eigen::Index base = 0; base < dim; base += 2 * stride) {
                for (Eigen::Index off = 0; off < stride; ++off) {
                    const Eigen::Index i0 = base + off;
                    const Eigen::Index i1 = i0 + stride;
                    d_angle += lambda.row(i1).dot(psi.row(i0)) - lambda.row(i0).dot(psi.row(i1));
                }
            }
            grad[static_cast<Eigen::Index>(*gate.param_index)] += gate.sign * d_angle;
        }
        // Both RY(-a) and the self-inverse entanglers undo gate k.
        const double inverse = gate.parameterized() ? -angles[k] : 0.0;
        apply_gate(psi, gate, inverse);
        apply_gate(lambda, gate, inverse);
    }
    return AdjointGradients{std::move(grad), 2.0 * lambda};
}

RealStatevector grad_input_adjoint(const Circuit &circuit, const ParamVector &params, const RealStatevector &input,
                                   const MeasurementSpec &spec, const Eigen::VectorXd &upstream) {
    StateBatch<double> states = input;
    run_circuit(states, circuit, params);
    Eigen::MatrixXd up = upstream;
    AdjointGradients grads = adjoint_backward(circuit, params, std::move(states), spec, up);
    return grads.input.col(0);
}

RealStatevector grad_input_adjoint(const Circuit &, const ParamVector &, const ComplexStatevector &,
                                   const MeasurementSpec &, const Eigen::VectorXd &) {
    throw ModeError("input-amplitude gradients are unsupported for complex statevectors");
}

} // namespace qvf
