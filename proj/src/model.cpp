#include "qvf/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "qvf/random.hpp"

namespace qvf {

void ModelConfig::validate() const {
    if (n_qubits < 1 || n_qubits > 20) {
        throw ConfigError("n_qubits must lie in [1, 20]");
    }
    if (depth < 0 || reps_per_layer < 1) {
        throw ConfigError("depth must be >= 0 and reps_per_layer >= 1");
    }
    if (output_channels < 1 || output_channels > n_qubits) {
        throw ConfigError("output_channels must lie in [1, n_qubits]");
    }
    if (encoder.output_dim != (1 << n_qubits)) {
        throw ConfigError("encoder output_dim must equal 2^n_qubits");
    }
    encoder.validate();
}

QvfModel QvfModel::create(const ModelConfig &config, std::uint64_t seed) {
    ModelConfig cfg = config;
    cfg.encoder.output_dim = 1 << std::clamp(cfg.n_qubits, 1, 20);
    cfg.validate();
    QvfModel model;
    model.encoder = EnergyNet::initialized(cfg.encoder, derive_seed(seed, {0}));
    model.layout = build_layout(cfg.n_qubits, cfg.depth, cfg.reps_per_layer, AnsatzStyle::QvfReal, cfg.init_scheme,
                                cfg.entangler);
    model.circuit_params = init_params(model.layout, cfg.init_scheme, derive_seed(seed, {1}));
    model.measurement = MeasurementSpec::first(cfg.output_channels);
    return model;
}

ModelConfig QvfModel::config() const {
    ModelConfig cfg;
    cfg.encoder = encoder.config();
    cfg.n_qubits = layout.n_qubits;
    cfg.depth = layout.depth;
    cfg.reps_per_layer = layout.reps_per_layer;
    cfg.init_scheme = layout.init_scheme;
    cfg.entangler = layout.entangler;
    cfg.output_channels = output_channels();
    return cfg;
}

void QvfModel::validate() const {
    if (!layout.circuit.real()) {
        throw ConfigError("model circuits must keep real amplitudes real");
    }
    if (encoder.config().output_dim != (1 << layout.n_qubits)) {
        throw ConfigError("encoder output_dim must equal 2^n_qubits");
    }
    if (static_cast<std::size_t>(circuit_params.size()) != layout.param_count()) {
        throw ConfigError("circuit parameter count does not match the layout");
    }
    measurement.validate(layout.n_qubits);
}

LatentTable LatentTable::sampled(int fields, int latent_dim, double reg_weight, std::uint64_t seed) {
    if (fields < 1 || latent_dim < 0) {
        throw ConfigError("latent table needs >= 1 field and latent_dim >= 0");
    }
    LatentTable table;
    table.reg_weight = reg_weight;
    table.codes.resize(latent_dim, fields);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    for (auto &x : table.codes.reshaped()) {
        x = nd(rng);
    }
    return table;
}

Eigen::VectorXd LatentTable::code(int field) const {
    if (field < 0 || field >= size()) {
        throw ConfigError("field index " + std::to_string(field) + " outside the latent table");
    }
    return codes.col(field);
}

namespace {

Eigen::MatrixXd replicate_latent(const Eigen::VectorXd &latent, Eigen::Index cols) {
    return latent.replicate(1, cols);
}

/// Circuit outputs for the amplitudes of an encoder pass.
StateBatch<double> evolve(const QvfModel &model, const Eigen::MatrixXd &amplitudes) {
    StateBatch<double> states = amplitudes;
    run_circuit(states, model.layout.circuit, model.circuit_params);
    return states;
}

/// Gradient of ||z||_2, zero at the origin.
Eigen::VectorXd norm_grad(const Eigen::VectorXd &z) {
    const double n = z.norm();
    return n > 0.0 ? Eigen::VectorXd(z / n) : Eigen::VectorXd::Zero(z.size());
}

} // namespace

Eigen::VectorXd forward(const QvfModel &model, const Eigen::VectorXd &theta, const Eigen::VectorXd &latent) {
    return predict(model, theta, latent).col(0);
}

Eigen::MatrixXd predict(const QvfModel &model, const Eigen::MatrixXd &coords, const Eigen::VectorXd &latent,
                        const PredictOptions &options) {
    model.validate();
    if (options.shots && *options.shots < 1) {
        throw ConfigError("shots must be >= 1");
    }
    if (options.noise_sigma < 0.0) {
        throw ConfigError("noise sigma must be >= 0");
    }
    const Eigen::Index total = coords.cols();
    const Eigen::Index block = std::max<Eigen::Index>(1, options.block_size);
    Eigen::MatrixXd out(model.output_channels(), total);
    for (Eigen::Index start = 0; start < total; start += block) {
        const Eigen::Index cols = std::min(block, total - start);
        const EncoderTrace trace =
            encoder_forward(model.encoder, coords.middleCols(start, cols), replicate_latent(latent, cols));
        StateBatch<double> states = trace.amplitudes;
        if (options.noise_sigma > 0.0) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                auto column = states.col(c);
                const auto id = static_cast<std::uint64_t>(start + c);
                run_circuit(column, model.layout.circuit, model.circuit_params,
                            NoiseSpec{options.noise_sigma, derive_seed(options.seed, {0, id})});
            }
        } else {
            run_circuit(states, model.layout.circuit, model.circuit_params);
        }
        if (options.shots) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                const RealStatevector state = states.col(c);
                const auto id = static_cast<std::uint64_t>(start + c);
                out.col(start + c) =
                    sample_shots(state, model.measurement, *options.shots, derive_seed(options.seed, {1, id}));
            }
        } else {
            out.middleCols(start, cols) = expect_z(states, model.measurement);
        }
    }
    return out;
}

std::string to_string(CircuitGradient method) {
    return method == CircuitGradient::Adjoint ? "adjoint" : "parameter_shift";
}

CircuitGradient parse_circuit_gradient(const std::string &name) {
    if (name == "adjoint") {
        return CircuitGradient::Adjoint;
    }
    if (name == "parameter_shift") {
        return CircuitGradient::ParameterShift;
    }
    throw ConfigError("unknown circuit_gradient '" + name + "' (expected adjoint or parameter_shift)");
}

LossResult loss_and_grads(const QvfModel &model, const LatentTable &latents, const std::vector<FieldBatch> &batches,
                          CircuitGradient method) {
    model.validate();
    if (latents.dim() != model.latent_dim()) {
        throw ConfigError("latent table dimension does not match the encoder");
    }
    Eigen::Index total = 0;
    for (const FieldBatch &b : batches) {
        if (b.coords.cols() != b.targets.cols() || b.targets.rows() != model.output_channels()) {
            throw ConfigError("batch targets do not match the model outputs");
        }
        if (b.field < 0 || b.field >= latents.size()) {
            throw ConfigError("batch field index outside the latent table");
        }
        total += b.coords.cols();
    }
    if (total == 0) {
        throw ConfigError("loss needs at least one sample");
    }

    LossResult result;
    ModelGradients &g = result.grads;
    g.encoder = Eigen::VectorXd::Zero(model.encoder.param_count());
    g.circuit = ParamVector::Zero(model.circuit_params.size());
    g.latents = Eigen::MatrixXd::Zero(latents.dim(), latents.size());
    const Circuit &circuit = model.layout.circuit;
    double sq_error = 0.0;

    for (const FieldBatch &b : batches) {
        const Eigen::Index cols = b.coords.cols();
        const Eigen::VectorXd z = latents.code(b.field);
        const EncoderTrace trace = encoder_forward(model.encoder, b.coords, replicate_latent(z, cols));
        StateBatch<double> states = evolve(model, trace.amplitudes);
        Eigen::MatrixXd pred = expect_z(states, model.measurement);
        const Eigen::MatrixXd diff = pred - b.targets;
        sq_error += diff.squaredNorm();
        const Eigen::MatrixXd upstream = 2.0 * diff / static_cast<double>(total);

        Eigen::MatrixXd grad_alpha;
        if (method == CircuitGradient::Adjoint) {
            AdjointGradients adj =
                adjoint_backward(circuit, model.circuit_params, std::move(states), model.measurement, upstream);
            g.circuit += adj.params;
            grad_alpha = std::move(adj.input);
        } else {
            grad_alpha.resize(trace.amplitudes.rows(), cols);
            for (Eigen::Index c = 0; c < cols; ++c) {
                const RealStatevector alpha = trace.amplitudes.col(c);
                const Eigen::VectorXd up = upstream.col(c);
                g.circuit += grad_params_shift(circuit, model.circuit_params, alpha, model.measurement, up);
                grad_alpha.col(c) = grad_input_adjoint(circuit, model.circuit_params, alpha, model.measurement, up);
            }
        }
        const EncoderGradients enc = encoder_backward(model.encoder, trace, grad_alpha);
        g.encoder += enc.params;
        if (latents.dim() > 0) {
            g.latents.col(b.field) += enc.latent.rowwise().sum();
        }
        result.predictions.push_back(std::move(pred));
    }

    result.data_mse = sq_error / static_cast<double>(total * model.output_channels());
    result.loss = sq_error / static_cast<double>(total);
    if (latents.dim() > 0) {
        std::set<int> seen;
        for (const FieldBatch &b : batches) {
            if (seen.insert(b.field).second) {
                const Eigen::VectorXd z = latents.code(b.field);
                result.loss += latents.reg_weight * z.norm();
                g.latents.col(b.field) += latents.reg_weight * norm_grad(z);
            }
        }
    }
    return result;
}

void AdamState::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd> &grad, double lr,
                     const AdamConfig &cfg) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
        throw ConfigError("Adam state size does not match the parameter block");
    }
    ++t_;
    m_ = cfg.beta1 * m_ + (1.0 - cfg.beta1) * grad;
    v_ = cfg.beta2 * v_ + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg.epsilon);
}

PlateauScheduler::PlateauScheduler(double lr, int window, double factor)
    : lr_(lr), window_(window), factor_(factor), best_(std::numeric_limits<double>::infinity()) {
    if (!(lr > 0.0) || window < 1 || !(factor > 0.0 && factor < 1.0)) {
        throw ConfigError("scheduler needs lr > 0, window >= 1 and factor in (0, 1)");
    }
}

bool PlateauScheduler::observe(double loss) {
    if (loss < best_) {
        best_ = loss;
        bad_epochs_ = 0;
        return false;
    }
    if (++bad_epochs_ < window_) {
        return false;
    }
    lr_ *= factor_;
    bad_epochs_ = 0;
    ++reductions_;
    return true;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("learning_rate must be > 0");
    }
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
        throw ConfigError("plateau_factor must lie in (0, 1)");
    }
    if (plateau_window < 1 || epochs < 0 || coord_batch_size < 1) {
        throw ConfigError("plateau_window and coord_batch_size must be >= 1, epochs >= 0");
    }
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.epsilon > 0.0)) {
        throw ConfigError("Adam needs betas in [0, 1) and epsilon > 0");
    }
}

namespace {

/// Picks `count` distinct indices of [0, n) by a partial Fisher-Yates pass over `pool`.
std::vector<Eigen::Index> draw_subset(std::vector<Eigen::Index> &pool, Eigen::Index count, std::mt19937_64 &rng) {
    const auto n = static_cast<Eigen::Index>(pool.size());
    if (count >= n) {
        std::vector<Eigen::Index> all(pool.size());
        std::iota(all.begin(), all.end(), Eigen::Index{0});
        return all;
    }
    for (Eigen::Index i = 0; i < count; ++i) {
        std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    return {pool.begin(), pool.begin() + count};
}

std::string state_dump(const QvfModel &model, const LatentTable &latents, int epoch, int field, double lr,
                       double loss) {
    std::ostringstream s;
    s << "non-finite training loss (" << loss << ") at epoch " << epoch << ", field " << field << "; lr=" << lr
      << " |encoder|=" << model.encoder.params().norm() << " |circuit|=" << model.circuit_params.norm()
      << " |latents|=" << latents.codes.norm();
    return s.str();
}

} // namespace

std::vector<EpochMetrics> train(QvfModel &model, LatentTable &latents, const FieldDataset &dataset,
                                const TrainConfig &config, const EpochCallback &on_epoch) {
    config.validate();
    dataset.validate();
    model.validate();
    if (dataset.coord_dim() != model.encoder.config().coord_dim) {
        throw ConfigError("dataset coordinates do not match the encoder's coord_dim");
    }
    if (dataset.channels() != model.output_channels()) {
        throw ConfigError("dataset channels do not match the model's output channels");
    }
    if (latents.size() != static_cast<int>(dataset.fields.size()) || latents.dim() != model.latent_dim()) {
        throw ConfigError("latent table must hold one code of latent_dim per field");
    }

    const int n_fields = static_cast<int>(dataset.fields.size());
    std::vector<Eigen::MatrixXd> targets;
    std::vector<std::vector<Eigen::Index>> pools;
    for (const FieldSamples &f : dataset.fields) {
        targets.push_back(dataset.scale.to_unit(f.values));
        pools.emplace_back(static_cast<std::size_t>(f.size()));
        std::iota(pools.back().begin(), pools.back().end(), Eigen::Index{0});
    }

    std::mt19937_64 rng(derive_seed(config.seed, {2}));
    AdamState enc_opt(model.encoder.param_count());
    AdamState circ_opt(model.circuit_params.size());
    std::vector<AdamState> latent_opt(static_cast<std::size_t>(n_fields), AdamState(latents.dim()));
    PlateauScheduler scheduler(config.learning_rate, config.plateau_window, config.plateau_factor);
    std::vector<int> order(static_cast<std::size_t>(n_fields));
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochMetrics> log;
    log.reserve(static_cast<std::size_t>(config.epochs));
    const bool images = dataset.kind == FieldKind::Image2D;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double lr = scheduler.learning_rate();
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        double err_sum = 0.0;
        double err_count = 0.0;
        for (int field : order) {
            const auto fi = static_cast<std::size_t>(field);
            const std::vector<Eigen::Index> idx = draw_subset(pools[fi], config.coord_batch_size, rng);
            FieldBatch batch{field, dataset.fields[fi].coords(Eigen::all, idx), targets[fi](Eigen::all, idx)};
            const LossResult r = loss_and_grads(model, latents, {batch}, config.circuit_gradient);
            if (!std::isfinite(r.loss) || !r.grads.encoder.allFinite() || !r.grads.circuit.allFinite()) {
                throw NumericError(state_dump(model, latents, epoch, field, lr, r.loss));
            }
            loss_sum += r.loss;
            const Eigen::MatrixXd raw_err = (r.predictions.front() - batch.targets) * dataset.scale.half_range;
            err_sum += images ? raw_err.squaredNorm() : raw_err.cwiseAbs().sum();
            err_count += static_cast<double>(raw_err.size());

            enc_opt.step(model.encoder.params(), r.grads.encoder, lr, config.adam);
            circ_opt.step(model.circuit_params, r.grads.circuit, lr, config.adam);
            if (latents.dim() > 0) {
                latent_opt[fi].step(latents.codes.col(field), r.grads.latents.col(field), lr, config.adam);
            }
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.loss = loss_sum / n_fields;
        m.metric = images ? psnr_from_mse(err_sum / err_count) : err_sum / err_count;
        m.lr = lr;
        log.push_back(m);
        if (on_epoch) {
            on_epoch(m);
        }
        scheduler.observe(m.loss);
    }
    return log;
}

namespace {

Eigen::VectorXd map_descent(const QvfModel &model, const Eigen::MatrixXd &coords, const Eigen::MatrixXd &targets,
                            const MapConfig &config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd z(model.latent_dim());
    for (auto &x : z) {
        x = nd(rng);
    }
    if (z.size() == 0) {
        return z;
    }
    const Eigen::Index n = coords.cols();
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), Eigen::Index{0});
    AdamState opt(z.size());
    for (int step = 0; step < config.steps; ++step) {
        Eigen::VectorXd grad = config.reg_weight * norm_grad(z);
        if (n > 0) {
            const std::vector<Eigen::Index> idx = draw_subset(pool, config.batch_size, rng);
            const auto cols = static_cast<Eigen::Index>(idx.size());
            const double rescale = static_cast<double>(n) / static_cast<double>(cols);
            const EncoderTrace trace =
                encoder_forward(model.encoder, coords(Eigen::all, idx), replicate_latent(z, cols));
            StateBatch<double> states = evolve(model, trace.amplitudes);
            const Eigen::MatrixXd diff = expect_z(states, model.measurement) - targets(Eigen::all, idx);
            AdjointGradients adj = adjoint_backward(model.layout.circuit, model.circuit_params, std::move(states),
                                                    model.measurement, 2.0 * rescale * diff);
            grad += encoder_backward(model.encoder, trace, adj.input, false).latent.rowwise().sum();
        }
        opt.step(z, grad, config.learning_rate, config.adam);
    }
    return z;
}

} // namespace

Eigen::VectorXd map_infer_latent(const QvfModel &model, const Eigen::MatrixXd &coords, const Eigen::MatrixXd &targets,
                                 const MapConfig &config) {
    model.validate();
    if (config.steps < 0 || !(config.learning_rate > 0.0) || config.batch_size < 1 || config.reg_weight < 0.0 ||
        config.restarts < 1) {
        throw ConfigError(
            "MAP inference needs steps >= 0, learning_rate > 0, batch_size >= 1, reg_weight >= 0, restarts >= 1");
    }
    if (coords.cols() != targets.cols() || (coords.cols() > 0 && targets.rows() != model.output_channels())) {
        throw ConfigError("partial observations do not match the model outputs");
    }
    Eigen::VectorXd best;
    double best_objective = std::numeric_limits<double>::infinity();
    for (int r = 0; r < config.restarts; ++r) {
        const std::uint64_t seed = r == 0 ? config.seed : derive_seed(config.seed, {static_cast<std::uint64_t>(r)});
        Eigen::VectorXd z = map_descent(model, coords, targets, config, seed);
        if (config.restarts == 1) {
            return z;
        }
        double objective = config.reg_weight * z.norm();
        if (coords.cols() > 0) {
            objective += (predict(model, coords, z) - targets).squaredNorm();
        }
        if (objective < best_objective) {
            best_objective = objective;
            best = std::move(z);
        }
    }
    return best;
}

Eigen::VectorXd interpolate_latents(const Eigen::VectorXd &z_a, const Eigen::VectorXd &z_b, double t) {
    if (z_a.size() != z_b.size()) {
        throw ConfigError("latent codes to interpolate must share a dimension");
    }
    return (1.0 - t) * z_a + t * z_b;
}

} // namespace qvf
