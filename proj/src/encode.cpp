#include "qvf/encode.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace qvf {

std::string to_string(Activation activation) { return activation == Activation::Siren ? "siren" : "relu_pe"; }

Activation parse_activation(const std::string &name) {
    if (name == "siren") {
        return Activation::Siren;
    }
    if (name == "relu_pe") {
        return Activation::ReluPe;
    }
    throw ConfigError("unknown activation '" + name + "' (expected siren or relu_pe)");
}

void EncoderConfig::validate() const {
    if (coord_dim != 2 && coord_dim != 3) {
        throw ConfigError("coordinate dimension must be 2 or 3");
    }
    if (output_dim < 2 || (output_dim & (output_dim - 1)) != 0) {
        throw ConfigError("encoder output_dim must be a power of two >= 2");
    }
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw ConfigError("beta must be a positive finite number");
    }
    if (hidden_dim < 1 || hidden_layers < 1 || latent_dim < 0) {
        throw ConfigError("encoder needs hidden_dim >= 1, hidden_layers >= 1, latent_dim >= 0");
    }
    if (activation == Activation::ReluPe && pe_frequencies < 1) {
        throw ConfigError("positional encoding needs at least one frequency");
    }
    if (activation == Activation::Siren && !(siren_omega0 > 0.0 && siren_hidden_omega > 0.0)) {
        throw ConfigError("SIREN frequency scales must be positive");
    }
}

int EncoderConfig::coord_width() const {
    return activation == Activation::ReluPe ? 2 * pe_frequencies * coord_dim : coord_dim;
}

namespace {

std::vector<LayerShape> layer_shapes(const EncoderConfig &config) {
    std::vector<LayerShape> shapes;
    Eigen::Index offset = 0;
    int in = config.input_width();
    for (int l = 0; l <= config.hidden_layers; ++l) {
        const int out = l == config.hidden_layers ? config.output_dim : config.hidden_dim;
        LayerShape s{in, out, offset, offset + static_cast<Eigen::Index>(in) * out};
        offset = s.bias_offset + out;
        shapes.push_back(s);
        in = out;
    }
    return shapes;
}

/// Frequency multiplier on the pre-activation of SIREN layer l.
double siren_scale(const EncoderConfig &config, std::size_t layer) {
    return layer == 0 ? config.siren_omega0 : config.siren_hidden_omega;
}

} // namespace

EnergyNet::EnergyNet(EncoderConfig config, Eigen::VectorXd params)
    : config_(config), layers_(layer_shapes(config)), params_(std::move(params)) {
    config_.validate();
    if (params_.size() != count_params(config_)) {
        throw ConfigError("encoder weight vector has " + std::to_string(params_.size()) + " entries, expected " +
                          std::to_string(count_params(config_)));
    }
}

Eigen::Index EnergyNet::count_params(const EncoderConfig &config) {
    const auto shapes = layer_shapes(config);
    return shapes.back().bias_offset + shapes.back().out;
}

EnergyNet EnergyNet::initialized(const EncoderConfig &config, std::uint64_t seed) {
    config.validate();
    const auto shapes = layer_shapes(config);
    Eigen::VectorXd params(count_params(config));
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        const LayerShape &s = shapes[l];
        const double fan_in = s.in;
        auto w = params.segment(s.weight_offset, static_cast<Eigen::Index>(s.in) * s.out);
        auto b = params.segment(s.bias_offset, s.out);
        if (config.activation == Activation::Siren) {
            const double bound = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / config.siren_hidden_omega;
            // Coordinate columns of the first layer are scaled by the coordinate width alone.
            const Eigen::Index coord_entries = l == 0 ? static_cast<Eigen::Index>(s.out) * config.coord_width() : 0;
            const double coord_bound = 1.0 / config.coord_width();
            std::uniform_real_distribution<double> unit(-1.0, 1.0);
            std::uniform_real_distribution<double> bd(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                w[i] = (i < coord_entries ? coord_bound : bound) * unit(rng);
            }
            for (Eigen::Index i = 0; i < b.size(); ++i) {
                b[i] = bd(rng);
            }
        } else {
            std::normal_distribution<double> wd(0.0, std::sqrt(2.0 / fan_in));
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                w[i] = wd(rng);
            }
            b.setZero();
        }
    }
    return EnergyNet(config, std::move(params));
}

Eigen::Map<const Eigen::MatrixXd> EnergyNet::weight(std::size_t layer) const {
    const LayerShape &s = layers_.at(layer);
    return {params_.data() + s.weight_offset, s.out, s.in};
}

Eigen::Map<const Eigen::VectorXd> EnergyNet::bias(std::size_t layer) const {
    const LayerShape &s = layers_.at(layer);
    return {params_.data() + s.bias_offset, s.out};
}

Eigen::MatrixXd positional_encode_columns(const Eigen::MatrixXd &theta, int frequencies) {
    const Eigen::Index d = theta.rows();
    Eigen::MatrixXd out(2 * frequencies * d, theta.cols());
    for (int k = 0; k < frequencies; ++k) {
        const double scale = std::ldexp(std::numbers::pi, k);
        for (Eigen::Index j = 0; j < d; ++j) {
            const Eigen::Index row = 2 * (k * d + j);
            out.row(row) = (scale * theta.row(j)).array().sin();
            out.row(row + 1) = (scale * theta.row(j)).array().cos();
        }
    }
    return out;
}

Eigen::VectorXd positional_encode(const Eigen::VectorXd &theta, int frequencies) {
    return positional_encode_columns(theta, frequencies).col(0);
}

Eigen::MatrixXd encoder_inputs(const EncoderConfig &config, const Eigen::MatrixXd &coords,
                               const Eigen::MatrixXd &latents) {
    if (coords.rows() != config.coord_dim) {
        throw ConfigError("coordinates have " + std::to_string(coords.rows()) + " rows, encoder expects " +
                          std::to_string(config.coord_dim));
    }
    if (latents.rows() != config.latent_dim || (config.latent_dim > 0 && latents.cols() != coords.cols())) {
        throw ConfigError("latent block shape does not match the encoder");
    }
    Eigen::MatrixXd input(config.input_width(), coords.cols());
    if (config.activation == Activation::ReluPe) {
        input.topRows(config.coord_width()) = positional_encode_columns(coords, config.pe_frequencies);
    } else {
        input.topRows(config.coord_dim) = coords;
    }
    if (config.latent_dim > 0) {
        input.bottomRows(config.latent_dim) = latents;
    }
    return input;
}

GibbsDistribution gibbs_normalize(const Eigen::VectorXd &energies, double beta) {
    return {gibbs_normalize_columns(energies, beta).col(0)};
}

Eigen::MatrixXd gibbs_normalize_columns(const Eigen::MatrixXd &energies, double beta) {
    if (!energies.allFinite()) {
        throw NumericError("energy spectrum contains non-finite values");
    }
    // log-sum-exp: shift by the minimum energy (largest exponent) per column
    const Eigen::RowVectorXd e_min = energies.colwise().minCoeff();
    Eigen::MatrixXd p = (-beta * (energies.rowwise() - e_min)).array().exp().matrix();
    const Eigen::RowVectorXd z = p.colwise().sum();
    p.array().rowwise() /= z.array();
    return p;
}

RealStatevector amplitudes_from_gibbs(const GibbsDistribution &distribution) {
    return distribution.probabilities.cwiseSqrt();
}

namespace {

void forward_layers(const EnergyNet &net, EncoderTrace &trace) {
    const EncoderConfig &cfg = net.config();
    const std::size_t n_layers = net.layers().size();
    trace.pre.resize(n_layers);
    trace.act.resize(n_layers);
    trace.act[0] = trace.input;
    for (std::size_t l = 0; l < n_layers; ++l) {
        Eigen::MatrixXd &pre = trace.pre[l];
        pre.noalias() = net.weight(l) * trace.act[l];
        pre.colwise() += net.bias(l);
        if (l + 1 == n_layers) {
            trace.energies = pre;
        } else if (cfg.activation == Activation::Siren) {
            trace.act[l + 1] = (siren_scale(cfg, l) * pre.array()).sin().matrix();
        } else {
            trace.act[l + 1] = pre.cwiseMax(0.0);
        }
    }
}

} // namespace

EncoderTrace encoder_forward(const EnergyNet &net, const Eigen::MatrixXd &coords, const Eigen::MatrixXd &latents) {
    EncoderTrace trace;
    trace.input = encoder_inputs(net.config(), coords, latents);
    forward_layers(net, trace);
    trace.probabilities = gibbs_normalize_columns(trace.energies, net.config().beta);
    trace.amplitudes = trace.probabilities.cwiseSqrt();
    return trace;
}

Eigen::VectorXd energy_forward(const EnergyNet &net, const Eigen::VectorXd &theta, const Eigen::VectorXd &latent) {
    EncoderTrace trace;
    trace.input = encoder_inputs(net.config(), theta, latent);
    forward_layers(net, trace);
    return trace.energies.col(0);
}

EncoderGradients encoder_backward(const EnergyNet &net, const EncoderTrace &trace, const Eigen::MatrixXd &grad_alpha,
                                  bool weight_gradients) {
    if (trace.empty()) {
        throw UsageError("encoder_backward needs a trace from encoder_forward");
    }
    if (grad_alpha.rows() != trace.amplitudes.rows() || grad_alpha.cols() != trace.amplitudes.cols()) {
        throw ConfigError("grad_alpha shape does not match the cached forward pass");
    }
    const EncoderConfig &cfg = net.config();
    const Eigen::MatrixXd &p = trace.probabilities;

    // alpha = sqrt(P): dP = d alpha / (2 max(alpha, eps))
    const Eigen::MatrixXd grad_p =
        (grad_alpha.array() / (2.0 * trace.amplitudes.array().max(kAmplitudeFloor))).matrix();
    // P = softmax(-beta E): dE_j = -beta P_j (dP_j - sum_i P_i dP_i)
    const Eigen::RowVectorXd mean_grad = p.cwiseProduct(grad_p).colwise().sum();
    Eigen::MatrixXd grad = (-cfg.beta * p.array() * (grad_p.rowwise() - mean_grad).array()).matrix();

    EncoderGradients out;
    if (weight_gradients) {
        out.params = Eigen::VectorXd::Zero(net.param_count());
    }
    const std::size_t n_layers = net.layers().size();
    for (std::size_t l = n_layers; l-- > 0;) {
        // grad holds d/d(pre-activation) of layer l
        if (weight_gradients) {
            const LayerShape &s = net.layers()[l];
            Eigen::Map<Eigen::MatrixXd> gw(out.params.data() + s.weight_offset, s.out, s.in);
            gw.noalias() = grad * trace.act[l].transpose();
            out.params.segment(s.bias_offset, s.out) = grad.rowwise().sum();
        }
        if (l == 0 && cfg.latent_dim == 0) {
            break;
        }
        Eigen::MatrixXd grad_in = net.weight(l).transpose() * grad;
        if (l == 0) {
            out.latent = grad_in.bottomRows(cfg.latent_dim);
            break;
        }
        const Eigen::MatrixXd &pre = trace.pre[l - 1];
        if (cfg.activation == Activation::Siren) {
            const double w = siren_scale(cfg, l - 1);
            grad = (grad_in.array() * w * (w * pre.array()).cos()).matrix();
        } else {
            grad = (grad_in.array() * (pre.array() > 0.0).cast<double>()).matrix();
        }
    }
    if (cfg.latent_dim == 0) {
        out.latent = Eigen::MatrixXd(0, grad_alpha.cols());
    }
    return out;
}

} // namespace qvf
