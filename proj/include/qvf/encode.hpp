#pragma once

/**
 * @file encode.hpp
 * Neural amplitude encoding: coordinates (and a latent code) pass through a
 * small dense network that predicts an energy per basis state; the Gibbs
 * distribution of those energies fixes the amplitudes alpha_i = sqrt(P_i)
 * with zero phase.
 *
 * Batched routines take one query per column.
 */

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qvf/qsim.hpp"

namespace qvf {

enum class Activation {
    /// Positional encoding followed by ReLU layers.
    ReluPe,
    /// Sine layers on raw coordinates.
    Siren,
};

std::string to_string(Activation activation);
Activation parse_activation(const std::string &name);

struct EncoderConfig {
    Activation activation = Activation::Siren;
    int pe_frequencies = 10;
    int hidden_dim = 128;
    int hidden_layers = 3;
    int coord_dim = 2;
    int latent_dim = 0;
    /// 2^n for an n-qubit circuit.
    int output_dim = 32;
    double beta = 1.0;
    double siren_omega0 = 30.0;
    /// Frequency scale of the hidden sine layers.
    double siren_hidden_omega = 1.0;

    void validate() const;
    /// Width of the encoded coordinate block (2 L d for ReLU+PE, d for SIREN).
    [[nodiscard]] int coord_width() const;
    [[nodiscard]] int input_width() const { return coord_width() + latent_dim; }
};

struct LayerShape {
    int in = 0;
    int out = 0;
    Eigen::Index weight_offset = 0;
    Eigen::Index bias_offset = 0;
};

/// Dense network mapping encoded inputs to an energy spectrum. All weights
/// live in one flat vector (per layer: column-major W, then b).
class EnergyNet {
  public:
    EnergyNet() = default;
    EnergyNet(EncoderConfig config, Eigen::VectorXd params);

    /// SIREN: first layer U(-1/d_in, 1/d_in) (coordinate columns use d_in = coord_width),
    /// later layers U(+-sqrt(6/d_in)/omega);
    /// ReLU+PE: He normal. Biases U(+-1/sqrt(d_in)) for SIREN, zero for ReLU.
    static EnergyNet initialized(const EncoderConfig &config, std::uint64_t seed);

    [[nodiscard]] const EncoderConfig &config() const { return config_; }
    [[nodiscard]] const std::vector<LayerShape> &layers() const { return layers_; }
    [[nodiscard]] const Eigen::VectorXd &params() const { return params_; }
    Eigen::VectorXd &params() { return params_; }
    [[nodiscard]] Eigen::Index param_count() const { return params_.size(); }

    [[nodiscard]] Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
    [[nodiscard]] Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

    /// Parameter count implied by a configuration.
    static Eigen::Index count_params(const EncoderConfig &config);

  private:
    EncoderConfig config_;
    std::vector<LayerShape> layers_;
    Eigen::VectorXd params_;
};

/// Concatenation over k = 0..L-1 and coordinate dims of (sin(2^k pi x), cos(2^k pi x)).
Eigen::VectorXd positional_encode(const Eigen::VectorXd &theta, int frequencies);
Eigen::MatrixXd positional_encode_columns(const Eigen::MatrixXd &theta, int frequencies);

/// Network input: encoded coordinates stacked over latent codes.
Eigen::MatrixXd encoder_inputs(const EncoderConfig &config, const Eigen::MatrixXd &coords,
                               const Eigen::MatrixXd &latents);

struct GibbsDistribution {
    Eigen::VectorXd probabilities;
};

/// P_i = exp(-beta (E_i - E_min)) / sum_j exp(-beta (E_j - E_min)); throws NumericError on non-finite E.
GibbsDistribution gibbs_normalize(const Eigen::VectorXd &energies, double beta);
/// Column-wise Gibbs normalization of a batch of spectra.
Eigen::MatrixXd gibbs_normalize_columns(const Eigen::MatrixXd &energies, double beta);

/// alpha_i = sqrt(P_i), all phases zero.
RealStatevector amplitudes_from_gibbs(const GibbsDistribution &distribution);

/// Energy spectrum for one query.
Eigen::VectorXd energy_forward(const EnergyNet &net, const Eigen::VectorXd &theta, const Eigen::VectorXd &latent);

/// Intermediates of a batched forward pass, consumed by encoder_backward.
struct EncoderTrace {
    Eigen::MatrixXd input;
    /// Pre-activations (W x + b) of every layer.
    std::vector<Eigen::MatrixXd> pre;
    /// Layer inputs: act[0] = input, act[l] = activation of layer l - 1.
    std::vector<Eigen::MatrixXd> act;
    Eigen::MatrixXd energies;
    Eigen::MatrixXd probabilities;
    Eigen::MatrixXd amplitudes;

    [[nodiscard]] bool empty() const { return pre.empty(); }
};

EncoderTrace encoder_forward(const EnergyNet &net, const Eigen::MatrixXd &coords, const Eigen::MatrixXd &latents);

struct EncoderGradients {
    /// Same layout as EnergyNet::params(); empty when weight gradients were not requested.
    Eigen::VectorXd params;
    /// d/dz, one column per query.
    Eigen::MatrixXd latent;
};

/// Lower bound on sqrt(P) in d alpha / d P = 1 / (2 sqrt(P)).
inline constexpr double kAmplitudeFloor = 1e-12;

/**
 * Backpropagates d(surrogate)/d(alpha) = grad_alpha through the amplitude map,
 * the Gibbs softmax and the network. Returns exact gradients of
 * sum(grad_alpha .* alpha). Throws UsageError on an empty trace.
 */
EncoderGradients encoder_backward(const EnergyNet &net, const EncoderTrace &trace, const Eigen::MatrixXd &grad_alpha,
                                  bool weight_gradients = true);

} // namespace qvf
