#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qvf/checkpoint.hpp"
#include "qvf/fields.hpp"
#include "qvf/model.hpp"

namespace qvf::cli {

/// Flat run configuration. Optional entries left unset are resolved from the data.
struct RunConfig {
    std::string task;

    // data
    std::vector<std::string> data;
    std::vector<std::string> shapes;
    long samples_per_shape = 100000;
    double near_surface_fraction = 0.8;
    std::optional<double> sdf_clamp;
    std::string out_dir = ".";
    std::optional<std::string> checkpoint;

    // model
    int n_qubits = 5;
    int depth = 5;
    int reps = 1;
    int hidden_dim = 128;
    int hidden_layers = 3;
    /// 10 for images, 6 for shapes when unset.
    std::optional<int> pe_frequencies;
    /// 0 for a single field, 64 for a collection when unset.
    std::optional<int> latent_dim;
    double beta = 1.0;
    std::string activation = "siren";
    double siren_omega0 = 30.0;
    double siren_hidden_omega = 1.0;
    std::string init_scheme = "identity";
    std::string entangler = "cnot";
    /// Signal channels of the data when unset.
    std::optional<int> output_channels;

    // training
    double learning_rate = 1e-3;
    int epochs = 5000;
    long coord_batch_size = 1024;
    int plateau_window = 50;
    double plateau_factor = 0.9;
    double latent_reg = 1e-3;
    std::string circuit_gradient = "adjoint";
    std::uint64_t seed = 0;
    int log_every = 100;

    // rendering
    /// Image side (or [height, width]) or grid resolution; training size / 64 when unset.
    std::optional<std::array<int, 2>> resolution;
    std::optional<long> shots;
    double noise_sigma = 0.0;
    int field = 0;
    double iso = 0.0;

    // studies
    std::vector<int> n_list = {2, 4, 6, 8};
    int samples = 500;
    std::vector<std::string> styles = {"qvf_real", "strongly_entangled"};
    std::vector<long> shots_list = {100, 500, 1000, 10000};
    std::vector<double> sigma_list = {0.01, 0.05, 0.1};
    int repeats = 5;

    // completion
    double keep_fraction = 0.5;
    std::uint64_t mask_seed = 0;
    int crop_axis = 2;
    double crop_threshold = 0.0;
    std::vector<double> noise_ratios = {0.0, 0.005, 0.01, 0.02, 0.03};
    /// Kept samples used for completion; 0 keeps all.
    long max_observations = 0;
    int map_steps = 1000;
    double map_lr = 1e-2;
    double map_reg = 1e-6;
    long map_batch_size = 1024;
    int map_restarts = 1;

    // interpolation
    int field_a = 0;
    int field_b = 1;
    int steps = 5;

    [[nodiscard]] std::string checkpoint_path() const;
};

/**
 * `qvf <task> [--config file.json] [--key value ...]`. Values parse as JSON
 * when they can, otherwise as strings; flags override the file. Unknown keys,
 * wrong types and missing paths throw ConfigError naming the key.
 */
RunConfig parse_command_line(const std::vector<std::string> &args);

FieldDataset load_dataset(const RunConfig &config);
ModelConfig model_config(const RunConfig &config, const FieldDataset &dataset);
TrainConfig train_config(const RunConfig &config);
MapConfig map_config(const RunConfig &config);

/// Raw-unit predictions of one latent code at `coords`.
Eigen::MatrixXd render_values(const Checkpoint &checkpoint, const Eigen::VectorXd &latent,
                              const Eigen::MatrixXd &coords, const PredictOptions &options = {});
Image render_image(const Checkpoint &checkpoint, const Eigen::VectorXd &latent, int height, int width,
                   const PredictOptions &options = {});
Mesh render_mesh(const Checkpoint &checkpoint, const Eigen::VectorXd &latent, int resolution, double iso = 0.0,
                 const PredictOptions &options = {});

struct SweepPoint {
    double setting = 0.0;
    /// One PSNR per repeat.
    std::vector<double> psnr;
    double median_psnr = 0.0;
};

struct SweepReport {
    double analytic_psnr = 0.0;
    std::vector<SweepPoint> points;
};

/// Image PSNR of field `field` against `reference` under finite shots per query, `repeats` seeds each.
SweepReport shots_sweep(const Checkpoint &checkpoint, int field, const FieldSamples &reference,
                        const std::vector<long> &shots, int repeats, std::uint64_t seed);
/// Same, under gate-angle noise of each sigma.
SweepReport noise_sweep(const Checkpoint &checkpoint, int field, const FieldSamples &reference,
                        const std::vector<double> &sigmas, int repeats, std::uint64_t seed);

struct InpaintResult {
    Eigen::VectorXd latent;
    /// Held-out MSE (raw units) with the inferred code and with z = 0.
    double map_mse = 0.0;
    double prior_mse = 0.0;
    MaskSplit split;
};

/// MAP code from the kept samples of `target` (raw values), scored on the held-out ones.
InpaintResult inpaint(const Checkpoint &checkpoint, const FieldSamples &target, const Mask &mask,
                      const MapConfig &map);

struct CompletionResult {
    double noise_ratio = 0.0;
    Eigen::VectorXd latent;
    /// Held-out MAE in raw units.
    double held_out_mae = 0.0;
};

/**
 * Shape completion from the kept samples, whose coordinate along the mask
 * axis is perturbed by noise_ratio * N(0, 1). Every ratio reuses the same
 * normal draws and MAP seed.
 */
std::vector<CompletionResult> complete_shape(const Checkpoint &checkpoint, const FieldSamples &target,
                                             const Mask &mask, const std::vector<double> &noise_ratios,
                                             long max_observations, const MapConfig &map, std::uint64_t seed);

/// Runs one task; returns the process exit code.
int run(const RunConfig &config, std::ostream &out, std::ostream &err);

/// Parses and runs, mapping errors to exit codes: 2 configuration, 3 data, 4 numeric, 1 other.
int main_entry(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace qvf::cli
