#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qvf/ansatz.hpp"
#include "qvf/encode.hpp"
#include "qvf/fields.hpp"
#include "qvf/qsim.hpp"

namespace qvf {

/// Hyperparameters that fix the shape of a model.
struct ModelConfig {
    EncoderConfig encoder;
    int n_qubits = 5;
    int depth = 5;
    int reps_per_layer = 1;
    InitScheme init_scheme = InitScheme::Identity;
    EntanglerKind entangler = EntanglerKind::CNOT;
    /// Signal channels, read from the first m qubits.
    int output_channels = 3;

    void validate() const;
};

struct QvfModel {
    EnergyNet encoder;
    AnsatzLayout layout;
    ParamVector circuit_params;
    MeasurementSpec measurement;

    /// Fresh model: encoder initialized from `seed`, circuit from a derived stream.
    static QvfModel create(const ModelConfig &config, std::uint64_t seed);

    [[nodiscard]] ModelConfig config() const;
    [[nodiscard]] int output_channels() const { return static_cast<int>(measurement.size()); }
    [[nodiscard]] int latent_dim() const { return encoder.config().latent_dim; }
    void validate() const;
};

/// One latent code per training field, stored as columns.
struct LatentTable {
    Eigen::MatrixXd codes;
    double reg_weight = 1e-3;

    /// Codes drawn i.i.d. from N(0, I).
    static LatentTable sampled(int fields, int latent_dim, double reg_weight, std::uint64_t seed);

    [[nodiscard]] int size() const { return static_cast<int>(codes.cols()); }
    [[nodiscard]] int dim() const { return static_cast<int>(codes.rows()); }
    [[nodiscard]] Eigen::VectorXd code(int field) const;
};

/// Evaluation-only perturbations of the circuit readout.
struct PredictOptions {
    /// Finite-shot estimates per query; analytic expectations when unset.
    std::optional<long> shots;
    /// Gate-angle noise, a fresh draw per query and forward pass.
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    /// Queries evaluated per block.
    Eigen::Index block_size = 4096;
};

/// Expectations <Z_0..Z_{m-1}> for one coordinate.
Eigen::VectorXd forward(const QvfModel &model, const Eigen::VectorXd &theta, const Eigen::VectorXd &latent);

/// Predictions in [-1, 1] for every column of `coords`, all sharing one latent code.
Eigen::MatrixXd predict(const QvfModel &model, const Eigen::MatrixXd &coords, const Eigen::VectorXd &latent,
                        const PredictOptions &options = {});

enum class CircuitGradient {
    /// One reverse sweep; equals the parameter-shift difference in closed form.
    Adjoint,
    /// Two shifted circuit runs per gate and query.
    ParameterShift,
};

std::string to_string(CircuitGradient method);
CircuitGradient parse_circuit_gradient(const std::string &name);

/// Samples of one field, targets already mapped to [-1, 1].
struct FieldBatch {
    int field = 0;
    Eigen::MatrixXd coords;
    Eigen::MatrixXd targets;
};

struct ModelGradients {
    Eigen::VectorXd encoder;
    ParamVector circuit;
    /// Same shape as LatentTable::codes; zero columns for fields outside the batch.
    Eigen::MatrixXd latents;
};

struct LossResult {
    double loss = 0.0;
    /// Squared error per sample and channel of the whole batch, before the regularizer.
    double data_mse = 0.0;
    ModelGradients grads;
    /// Predictions of every batch, in order.
    std::vector<Eigen::MatrixXd> predictions;
};

/**
 * sum ||V - s||^2 / (total samples) + reg_weight * sum over distinct batch
 * fields of ||z_i||_2. The subgradient of ||z|| at z = 0 is taken as 0.
 */
LossResult loss_and_grads(const QvfModel &model, const LatentTable &latents, const std::vector<FieldBatch> &batches,
                          CircuitGradient method = CircuitGradient::Adjoint);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam moments for one parameter block.
class AdamState {
  public:
    AdamState() = default;
    explicit AdamState(Eigen::Index size) : m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

    /// One update of `params` (any contiguous block) from `grad`.
    void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd> &grad, double lr,
              const AdamConfig &cfg);

    [[nodiscard]] long steps() const { return t_; }

  private:
    Eigen::VectorXd m_;
    Eigen::VectorXd v_;
    long t_ = 0;
};

/// Multiplies the learning rate by `factor` after `window` epochs without a new best loss.
class PlateauScheduler {
  public:
    PlateauScheduler(double lr, int window, double factor);

    /// Records one epoch loss; returns true when the rate was reduced.
    bool observe(double loss);
    [[nodiscard]] double learning_rate() const { return lr_; }
    [[nodiscard]] int reductions() const { return reductions_; }

  private:
    double lr_;
    int window_;
    double factor_;
    double best_;
    int bad_epochs_ = 0;
    int reductions_ = 0;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    AdamConfig adam;
    int epochs = 5000;
    Eigen::Index coord_batch_size = 1024;
    int plateau_window = 50;
    double plateau_factor = 0.9;
    std::uint64_t seed = 0;
    CircuitGradient circuit_gradient = CircuitGradient::Adjoint;

    void validate() const;
};

struct EpochMetrics {
    int epoch = 0;
    double loss = 0.0;
    /// PSNR (dB) for images, MAE for signed distances, over the epoch's batches in raw units.
    double metric = 0.0;
    double lr = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics &)>;

/**
 * Joint Adam optimization of encoder weights, circuit angles and latent
 * codes. An epoch visits every field once in a seeded order, taking one step
 * on up to coord_batch_size of its samples. Throws NumericError with the
 * optimizer state when the loss stops being finite.
 */
std::vector<EpochMetrics> train(QvfModel &model, LatentTable &latents, const FieldDataset &dataset,
                                const TrainConfig &config, const EpochCallback &on_epoch = {});

struct MapConfig {
    int steps = 1000;
    double learning_rate = 1e-2;
    /// Weight of ||z||_2 in the objective.
    double reg_weight = 1e-6;
    /// Observations per step; the sum is rescaled to the full set when subsampled.
    Eigen::Index batch_size = 1024;
    /// Independent starts; the code with the lowest full objective wins.
    int restarts = 1;
    std::uint64_t seed = 0;
    AdamConfig adam;
};

/**
 * argmin_z sum_j ||V(z, x_j) - s_j||^2 + reg_weight ||z||_2 by Adam from
 * z ~ N(0, I); targets in [-1, 1]. The first start draws from `seed`, later
 * starts from derived streams.
 */
Eigen::VectorXd map_infer_latent(const QvfModel &model, const Eigen::MatrixXd &coords, const Eigen::MatrixXd &targets,
                                 const MapConfig &config);

/// (1 - t) z_a + t z_b.
Eigen::VectorXd interpolate_latents(const Eigen::VectorXd &z_a, const Eigen::VectorXd &z_b, double t);

} // namespace qvf
