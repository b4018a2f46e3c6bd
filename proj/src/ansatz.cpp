#include "qvf/ansatz.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace qvf {

std::string to_string(AnsatzStyle style) {
    return style == AnsatzStyle::QvfReal ? "qvf_real" : "strongly_entangled";
}

std::string to_string(InitScheme scheme) { return scheme == InitScheme::Identity ? "identity" : "gaussian"; }

std::string to_string(EntanglerKind kind) { return kind == EntanglerKind::CNOT ? "cnot" : "cz"; }

AnsatzStyle parse_ansatz_style(const std::string &name) {
    if (name == "qvf_real") {
        return AnsatzStyle::QvfReal;
    }
    if (name == "strongly_entangled") {
        return AnsatzStyle::StronglyEntangled;
    }
    throw ConfigError("unknown ansatz style '" + name + "'");
}

InitScheme parse_init_scheme(const std::string &name) {
    if (name == "identity") {
        return InitScheme::Identity;
    }
    if (name == "gaussian") {
        return InitScheme::Gaussian;
    }
    throw ConfigError("unknown init scheme '" + name + "'");
}

EntanglerKind parse_entangler(const std::string &name) {
    if (name == "cnot") {
        return EntanglerKind::CNOT;
    }
    if (name == "cz") {
        return EntanglerKind::CZ;
    }
    throw ConfigError("unknown entangler '" + name + "'");
}

namespace {

void append_ring(std::vector<Gate> &gates, int n, EntanglerKind kind) {
    if (n < 2) {
        return;
    }
    for (int q = 0; q < n; ++q) {
        const int next = (q + 1) % n;
        gates.push_back(kind == EntanglerKind::CNOT ? Gate::cnot(q, next) : Gate::cz(q, next));
    }
}

} // namespace

AnsatzLayout build_layout(int n_qubits, int depth, int reps, AnsatzStyle style, InitScheme scheme,
                          EntanglerKind entangler) {
    if (n_qubits < 1 || depth < 0 || reps < 1) {
        throw ConfigError("ansatz needs n >= 1, J >= 0, reps >= 1");
    }
    AnsatzLayout layout;
    layout.n_qubits = n_qubits;
    layout.depth = depth;
    layout.reps_per_layer = reps;
    layout.style = style;
    layout.init_scheme = scheme;
    layout.entangler = style == AnsatzStyle::StronglyEntangled ? EntanglerKind::CNOT : entangler;
    layout.circuit.n_qubits = n_qubits;

    std::size_t next_param = 0;
    std::vector<Gate> &gates = layout.circuit.gates;
    for (int layer = 0; layer < depth; ++layer) {
        layout.layer_offsets.push_back(gates.size());
        std::vector<Gate> block;
        if (style == AnsatzStyle::QvfReal) {
            for (int r = 0; r < reps; ++r) {
                for (int q = 0; q < n_qubits; ++q) {
                    block.push_back(Gate::ry(q, next_param++));
                }
                append_ring(block, n_qubits, layout.entangler);
            }
        } else {
            for (int q = 0; q < n_qubits; ++q) {
                block.push_back(Gate::rotation(GateKind::RZ, q, next_param++));
                block.push_back(Gate::rotation(GateKind::RY, q, next_param++));
                block.push_back(Gate::rotation(GateKind::RZ, q, next_param++));
            }
            append_ring(block, n_qubits, EntanglerKind::CNOT);
        }
        gates.insert(gates.end(), block.begin(), block.end());

        if (scheme == InitScheme::Identity) {
            for (auto it = block.rbegin(); it != block.rend(); ++it) {
                Gate adj = *it;
                if (adj.parameterized()) {
                    layout.mirror_pairs.emplace_back(*it->param_index, next_param);
                    adj.param_index = next_param++;
                    adj.sign = -it->sign;
                }
                gates.push_back(adj);
            }
        }
    }
    layout.circuit.param_count = next_param;
    layout.circuit.validate();
    return layout;
}

double gaussian_init_sigma(int depth) { return depth > 0 ? 1.0 / (2.0 * std::sqrt(static_cast<double>(depth))) : 0.0; }

ParamVector init_params(const AnsatzLayout &layout, InitScheme scheme, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParamVector params = ParamVector::Zero(static_cast<Eigen::Index>(layout.param_count()));
    if (scheme == InitScheme::Identity) {
        if (!layout.mirrored()) {
            throw ConfigError("identity initialization needs a mirrored (identity-scheme) layout");
        }
        std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
        for (const auto &[forward, mirror] : layout.mirror_pairs) {
            const double a = angle(rng);
            params[static_cast<Eigen::Index>(forward)] = a;
            params[static_cast<Eigen::Index>(mirror)] = a;
        }
        return params;
    }
    std::normal_distribution<double> angle(0.0, gaussian_init_sigma(layout.depth));
    for (Eigen::Index k = 0; k < params.size(); ++k) {
        params[k] = angle(rng);
    }
    return params;
}

std::size_t probed_parameter(const AnsatzLayout &layout) {
    if (layout.depth < 1) {
        throw ConfigError("variance probe needs at least one layer");
    }
    const std::size_t start = layout.layer_offsets[static_cast<std::size_t>(layout.depth / 2)];
    for (std::size_t k = start; k < layout.circuit.gates.size(); ++k) {
        if (layout.circuit.gates[k].param_index) {
            return *layout.circuit.gates[k].param_index;
        }
    }
    throw ConfigError("layout has no rotation to probe");
}

namespace {

template <typename Scalar>
double probe_derivative(const AnsatzLayout &layout, const ParamVector &params, std::size_t probe) {
    Statevector<Scalar> zero = Statevector<Scalar>::Zero(Eigen::Index{1} << layout.n_qubits);
    zero[0] = Scalar(1);
    const Eigen::VectorXd upstream = Eigen::VectorXd::Ones(1);
    return grad_param_shift(layout.circuit, params, zero, MeasurementSpec::first(1), upstream, probe);
}

} // namespace

VarianceReport gradient_variance_experiment(const std::vector<int> &n_list, const std::vector<AnsatzStyle> &styles,
                                            int samples, std::uint64_t seed, int depth) {
    if (samples < 2) {
        throw ConfigError("variance experiment needs T >= 2");
    }
    VarianceReport report;
    for (int n : n_list) {
        for (AnsatzStyle style : styles) {
            const AnsatzLayout layout = build_layout(n, depth, 1, style);
            const std::size_t probe = probed_parameter(layout);
            Eigen::VectorXd grads(samples);
            for (int t = 0; t < samples; ++t) {
                std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                  static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(style),
                                  static_cast<std::uint32_t>(t)};
                std::mt19937_64 rng(seq);
                std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
                ParamVector params(static_cast<Eigen::Index>(layout.param_count()));
                for (Eigen::Index k = 0; k < params.size(); ++k) {
                    params[k] = angle(rng);
                }
                grads[t] = style == AnsatzStyle::QvfReal
                               ? probe_derivative<double>(layout, params, probe)
                               : probe_derivative<std::complex<double>>(layout, params, probe);
            }
            VarianceRow row;
            row.n_qubits = n;
            row.style = style;
            row.depth = depth;
            row.samples = samples;
            row.probed_param = probe;
            row.mean = grads.mean();
            row.variance = (grads.array() - row.mean).square().sum() / (samples - 1);
            report.rows.push_back(row);
        }
    }
    return report;
}

} // namespace qvf
