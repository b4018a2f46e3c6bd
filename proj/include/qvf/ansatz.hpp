#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qvf/qsim.hpp"

namespace qvf {

enum class AnsatzStyle {
    /// RY rounds + entangler ring; closed on the real subspace.
    QvfReal,
    /// RZ-RY-RZ per qubit + CNOT ring; complex baseline.
    StronglyEntangled,
};

enum class InitScheme { Identity, Gaussian };
enum class EntanglerKind { CNOT, CZ };

std::string to_string(AnsatzStyle style);
std::string to_string(InitScheme scheme);
std::string to_string(EntanglerKind kind);
AnsatzStyle parse_ansatz_style(const std::string &name);
InitScheme parse_init_scheme(const std::string &name);
EntanglerKind parse_entangler(const std::string &name);

struct AnsatzLayout {
    int n_qubits = 1;
    int depth = 0;
    int reps_per_layer = 1;
    AnsatzStyle style = AnsatzStyle::QvfReal;
    InitScheme init_scheme = InitScheme::Gaussian;
    EntanglerKind entangler = EntanglerKind::CNOT;
    Circuit circuit;
    /// Index of the first gate of every layer.
    std::vector<std::size_t> layer_offsets;
    /// (forward parameter, mirrored parameter) pairs of identity layouts.
    std::vector<std::pair<std::size_t, std::size_t>> mirror_pairs;

    [[nodiscard]] std::size_t param_count() const { return circuit.param_count; }
    [[nodiscard]] bool mirrored() const { return init_scheme == InitScheme::Identity; }
};

/**
 * Builds J layers. A QVF_REAL layer is `reps` rounds of RY on every qubit
 * followed by an entangler ring (qubit i controls (i+1) mod n, none for
 * n = 1); a STRONGLY_ENTANGLED layer is RZ, RY, RZ on every qubit followed by
 * a CNOT ring. With the IDENTITY scheme every layer is that block followed by
 * its adjoint: reversed gates, fresh parameters bound with sign -1.
 */
AnsatzLayout build_layout(int n_qubits, int depth, int reps, AnsatzStyle style,
                          InitScheme scheme = InitScheme::Gaussian, EntanglerKind entangler = EntanglerKind::CNOT);

/// Standard deviation of the depth-coupled Gaussian initialization.
double gaussian_init_sigma(int depth);

/**
 * IDENTITY: forward angles ~ U[0, 2pi), mirrored angles copied from their
 * partners so every layer composes to the identity. GAUSSIAN: all angles
 * ~ N(0, gaussian_init_sigma(J)^2).
 */
ParamVector init_params(const AnsatzLayout &layout, InitScheme scheme, std::uint64_t seed);

struct VarianceRow {
    int n_qubits = 0;
    AnsatzStyle style = AnsatzStyle::QvfReal;
    int depth = 0;
    int samples = 0;
    std::size_t probed_param = 0;
    double mean = 0.0;
    double variance = 0.0;
};

struct VarianceReport {
    std::vector<VarianceRow> rows;
};

/// Parameter probed by the variance experiment: first rotation of the middle layer.
std::size_t probed_parameter(const AnsatzLayout &layout);

/**
 * For each n and style: T angle vectors ~ U[0, 2pi), parameter-shift
 * derivative of <Z_0> on |0...0> with respect to probed_parameter(), reported
 * as sample mean and unbiased variance. Sample t uses its own generator
 * derived from (seed, n, style, t).
 */
VarianceReport gradient_variance_experiment(const std::vector<int> &n_list, const std::vector<AnsatzStyle> &styles,
                                            int samples, std::uint64_t seed, int depth = 5);

} // namespace qvf
