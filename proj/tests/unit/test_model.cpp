#include <cmath>
#include <random>

#include "doctest.h"

#include "qvf/model.hpp"
#include "test_support.hpp"

using namespace qvf;
using namespace qvf::testing;

namespace {

ModelConfig toy_config(int n, int depth, int hidden, int latent_dim, int channels) {
    ModelConfig cfg;
    cfg.n_qubits = n;
    cfg.depth = depth;
    cfg.output_channels = channels;
    cfg.encoder.hidden_dim = hidden;
    cfg.encoder.hidden_layers = 2;
    cfg.encoder.latent_dim = latent_dim;
    cfg.encoder.siren_omega0 = 3.0;
    cfg.encoder.siren_hidden_omega = 1.0;
    return cfg;
}

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64 &rng, double lo = -1.0,
                               double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd m(rows, cols);
    for (auto &x : m.reshaped()) {
        x = u(rng);
    }
    return m;
}

FieldDataset constant_images(int count, int size, double value) {
    std::vector<Image> images;
    for (int i = 0; i < count; ++i) {
        Image img(size, size, 3);
        std::fill(img.pixels.begin(), img.pixels.end(), value);
        images.push_back(img);
    }
    return image_dataset(images);
}

/// Small smooth images that differ per field.
FieldDataset pattern_images(int count, int size) {
    std::vector<Image> images;
    for (int i = 0; i < count; ++i) {
        Image img(size, size, 3);
        for (int r = 0; r < size; ++r) {
            for (int c = 0; c < size; ++c) {
                for (int ch = 0; ch < 3; ++ch) {
                    img.at(r, c, ch) = 0.5 + 0.3 * std::sin(0.7 * (i + 1) * r / size + 1.3 * ch - 0.9 * i * c / size);
                }
            }
        }
        images.push_back(img);
    }
    return image_dataset(images);
}

} // namespace

TEST_CASE("forward: zero weights and identity circuit give a symmetric state") {
    ModelConfig cfg = toy_config(3, 2, 8, 0, 3);
    QvfModel model = QvfModel::create(cfg, 1);
    model.encoder.params().setZero();
    const Eigen::VectorXd v = forward(model, Eigen::Vector2d(0.3, -0.2), Eigen::VectorXd());
    CHECK(v.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward: n = 1 toy through the full chain") {
    ModelConfig cfg = toy_config(1, 0, 4, 0, 1);
    QvfModel model = QvfModel::create(cfg, 2);
    model.encoder.params().setZero();
    const LayerShape &last = model.encoder.layers().back();
    model.encoder.params()[last.bias_offset + 1] = std::log(2.0);
    const Eigen::VectorXd v = forward(model, Eigen::Vector2d(0.1, 0.9), Eigen::VectorXd());
    CHECK(v[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("predict: outputs stay within [-1, 1]") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        ModelConfig cfg = toy_config(3, 2, 8, 2, 3);
        cfg.init_scheme = trial % 2 ? InitScheme::Identity : InitScheme::Gaussian;
        QvfModel model = QvfModel::create(cfg, static_cast<std::uint64_t>(trial));
        model.encoder.params() *= 10.0;
        model.circuit_params = random_angles(static_cast<std::size_t>(model.circuit_params.size()), rng);
        const Eigen::MatrixXd v = predict(model, uniform_matrix(2, 64, rng), Eigen::Vector2d(3.0, -2.0));
        CHECK(v.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    }
}

TEST_CASE("predict: blocks, noise and shots") {
    std::mt19937_64 rng(4);
    QvfModel model = QvfModel::create(toy_config(3, 2, 8, 0, 3), 5);
    model.circuit_params = random_angles(static_cast<std::size_t>(model.circuit_params.size()), rng);
    const Eigen::MatrixXd coords = uniform_matrix(2, 50, rng);
    const Eigen::MatrixXd exact = predict(model, coords, Eigen::VectorXd());

    PredictOptions blocks;
    blocks.block_size = 7;
    CHECK((predict(model, coords, Eigen::VectorXd(), blocks) - exact).cwiseAbs().maxCoeff() < 1e-14);

    PredictOptions zero_noise;
    zero_noise.noise_sigma = 0.0;
    zero_noise.seed = 9;
    CHECK(predict(model, coords, Eigen::VectorXd(), zero_noise) == exact);

    PredictOptions noisy;
    noisy.noise_sigma = 0.1;
    noisy.seed = 9;
    const Eigen::MatrixXd a = predict(model, coords, Eigen::VectorXd(), noisy);
    CHECK(a == predict(model, coords, Eigen::VectorXd(), noisy));
    CHECK((a - exact).cwiseAbs().maxCoeff() > 1e-6);
    noisy.block_size = 3;
    CHECK((a - predict(model, coords, Eigen::VectorXd(), noisy)).cwiseAbs().maxCoeff() < 1e-13);

    PredictOptions shots;
    shots.shots = 100000;
    shots.seed = 1;
    const Eigen::MatrixXd est = predict(model, coords, Eigen::VectorXd(), shots);
    // standard error of a +-1 mean over 1e5 shots is at most 1/sqrt(1e5)
    CHECK((est - exact).cwiseAbs().maxCoeff() < 5.0 / std::sqrt(1e5));
    shots.shots = 0;
    CHECK_THROWS_AS(predict(model, coords, Eigen::VectorXd(), shots), ConfigError);
}

TEST_CASE("model construction checks") {
    ModelConfig cfg = toy_config(2, 1, 8, 0, 3);
    CHECK_THROWS_AS(QvfModel::create(cfg, 0), ConfigError);
    cfg.output_channels = 2;
    const QvfModel model = QvfModel::create(cfg, 0);
    CHECK(model.encoder.config().output_dim == 4);
    CHECK(model.layout.param_count() == 4);
    const ModelConfig back = model.config();
    CHECK(back.n_qubits == 2);
    CHECK(back.depth == 1);
    CHECK(back.init_scheme == InitScheme::Identity);
    CHECK(back.encoder.output_dim == 4);
    // Identity init: the circuit starts as the identity.
    RealStatevector s = RealStatevector::Zero(4);
    s[1] = 1.0;
    run_circuit(s, model.layout.circuit, model.circuit_params);
    CHECK(std::abs(s[1] - 1.0) < 1e-12);
}

TEST_CASE("loss_and_grads: perfect prediction and the latent regularizer") {
    std::mt19937_64 rng(6);
    const QvfModel model = QvfModel::create(toy_config(2, 1, 8, 2, 2), 7);
    LatentTable latents;
    latents.codes = Eigen::MatrixXd::Zero(2, 1);
    latents.reg_weight = 1e-3;
    const Eigen::MatrixXd coords = uniform_matrix(2, 4, rng);
    FieldBatch batch{0, coords, predict(model, coords, latents.code(0))};
    const LossResult perfect = loss_and_grads(model, latents, {batch});
    CHECK(perfect.loss < 1e-28);
    CHECK(perfect.grads.encoder.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(perfect.grads.circuit.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(perfect.grads.latents.cwiseAbs().maxCoeff() < 1e-14);

    latents.codes.col(0) = Eigen::Vector2d(3.0, 4.0);
    batch.targets = predict(model, coords, latents.code(0));
    const LossResult reg = loss_and_grads(model, latents, {batch});
    CHECK(reg.loss == doctest::Approx(5e-3).epsilon(1e-12));
    CHECK(reg.grads.latents(0, 0) == doctest::Approx(0.6e-3).epsilon(1e-9));
    CHECK(reg.grads.latents(1, 0) == doctest::Approx(0.8e-3).epsilon(1e-9));
}

TEST_CASE("loss_and_grads: matches central finite differences on every parameter group") {
    std::mt19937_64 rng(8);
    for (const CircuitGradient method : {CircuitGradient::Adjoint, CircuitGradient::ParameterShift}) {
        for (int trial = 0; trial < 4; ++trial) {
            ModelConfig cfg = toy_config(2, 2, 8, 3, 2);
            cfg.encoder.activation = trial % 2 ? Activation::ReluPe : Activation::Siren;
            cfg.encoder.pe_frequencies = 2;
            cfg.init_scheme = InitScheme::Gaussian;
            QvfModel model = QvfModel::create(cfg, static_cast<std::uint64_t>(trial + 20));
            model.circuit_params = random_angles(static_cast<std::size_t>(model.circuit_params.size()), rng);
            LatentTable latents = LatentTable::sampled(2, 3, 0.05, static_cast<std::uint64_t>(trial));
            const std::vector<FieldBatch> batches{{0, uniform_matrix(2, 2, rng), uniform_matrix(2, 2, rng)},
                                                  {1, uniform_matrix(2, 2, rng), uniform_matrix(2, 2, rng)}};
            const LossResult base = loss_and_grads(model, latents, batches, method);
            const auto loss_of = [&](const QvfModel &m, const LatentTable &l) {
                return loss_and_grads(m, l, batches, method).loss;
            };
            const double h = 1e-6;
            int bad = 0;
            for (Eigen::Index i = 0; i < model.encoder.param_count(); ++i) {
                QvfModel p = model, q = model;
                p.encoder.params()[i] += h;
                q.encoder.params()[i] -= h;
                bad += !close_rel(base.grads.encoder[i], (loss_of(p, latents) - loss_of(q, latents)) / (2 * h), 1e-4,
                                  1e-8);
            }
            for (Eigen::Index i = 0; i < model.circuit_params.size(); ++i) {
                QvfModel p = model, q = model;
                p.circuit_params[i] += h;
                q.circuit_params[i] -= h;
                bad += !close_rel(base.grads.circuit[i], (loss_of(p, latents) - loss_of(q, latents)) / (2 * h), 1e-4,
                                  1e-8);
            }
            for (Eigen::Index i = 0; i < latents.codes.size(); ++i) {
                LatentTable p = latents, q = latents;
                p.codes.reshaped()[i] += h;
                q.codes.reshaped()[i] -= h;
                bad += !close_rel(base.grads.latents.reshaped()[i], (loss_of(model, p) - loss_of(model, q)) / (2 * h),
                                  1e-4, 1e-8);
            }
            CHECK(bad == 0);
        }
    }
}

TEST_CASE("loss_and_grads: adjoint and parameter-shift circuit gradients agree") {
    std::mt19937_64 rng(9);
    ModelConfig cfg = toy_config(3, 3, 8, 2, 3);
    QvfModel model = QvfModel::create(cfg, 11);
    model.circuit_params = random_angles(static_cast<std::size_t>(model.circuit_params.size()), rng);
    const LatentTable latents = LatentTable::sampled(1, 2, 1e-3, 4);
    const std::vector<FieldBatch> batches{{0, uniform_matrix(2, 16, rng), uniform_matrix(3, 16, rng)}};
    const LossResult a = loss_and_grads(model, latents, batches, CircuitGradient::Adjoint);
    const LossResult b = loss_and_grads(model, latents, batches, CircuitGradient::ParameterShift);
    CHECK((a.grads.circuit - b.grads.circuit).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.grads.encoder - b.grads.encoder).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.grads.latents - b.grads.latents).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("AdamState: first step moves each coordinate by lr against the gradient sign") {
    AdamState opt(3);
    Eigen::VectorXd p = Eigen::Vector3d(1.0, 2.0, 3.0);
    opt.step(p, Eigen::Vector3d(0.5, -2.0, 0.0), 0.1, AdamConfig{});
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(p[1] == doctest::Approx(2.1).epsilon(1e-7));
    CHECK(p[2] == 3.0);
    CHECK(opt.steps() == 1);
    CHECK_THROWS_AS(opt.step(p.head(2), Eigen::Vector2d::Zero(), 0.1, AdamConfig{}), ConfigError);
}

TEST_CASE("PlateauScheduler: one reduction per plateau") {
    PlateauScheduler s(1e-3, 50, 0.9);
    CHECK_FALSE(s.observe(1.0));
    int reductions = 0;
    for (int e = 0; e < 49; ++e) {
        reductions += s.observe(1.0);
    }
    CHECK(reductions == 0);
    CHECK(s.observe(1.0));
    CHECK(s.learning_rate() == 0.9 * 1e-3);
    for (int e = 0; e < 49; ++e) {
        reductions += s.observe(1.5);
    }
    CHECK(reductions == 0);
    CHECK(s.observe(1.2));
    CHECK(s.reductions() == 2);
    const double lr = s.learning_rate();
    for (int e = 0; e < 200; ++e) {
        s.observe(0.5 - 1e-3 * e);
    }
    CHECK(s.learning_rate() == lr);
    CHECK_THROWS_AS(PlateauScheduler(1e-3, 50, 1.0), ConfigError);
}

TEST_CASE("LatentTable: prior draws match N(0, I)") {
    const LatentTable t = LatentTable::sampled(2000, 6, 1e-3, 12);
    const Eigen::VectorXd mean = t.codes.rowwise().mean();
    const Eigen::MatrixXd centered = t.codes.colwise() - mean;
    const Eigen::MatrixXd cov = centered * centered.transpose() / (t.size() - 1);
    const double se = 1.0 / std::sqrt(2000.0);
    CHECK(mean.cwiseAbs().maxCoeff() < 4.0 * se);
    CHECK((cov - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 4.0 * std::sqrt(2.0) * se);
    CHECK_THROWS_AS(static_cast<void>(t.code(2000)), ConfigError);
}

TEST_CASE("train: constant image is fitted by the bias path") {
    ModelConfig cfg = toy_config(3, 2, 16, 0, 3);
    cfg.encoder.hidden_layers = 3;
    cfg.encoder.siren_omega0 = 30.0;
    cfg.encoder.siren_hidden_omega = 30.0;
    QvfModel model = QvfModel::create(cfg, 13);
    LatentTable latents = LatentTable::sampled(1, 0, 1e-3, 0);
    // raw 0.75 maps to 0.5 on the expectation scale
    const FieldDataset ds = constant_images(1, 8, 0.75);
    TrainConfig tc;
    tc.epochs = 500;
    double best = INFINITY;
    const auto log = train(model, latents, ds, tc, [&](const EpochMetrics &m) { best = std::min(best, m.loss); });
    REQUIRE(log.size() == 500);
    CHECK(best < 1e-4);
    for (std::size_t i = 1; i < log.size(); ++i) {
        CHECK(log[i].lr <= log[i - 1].lr);
    }
}

TEST_CASE("train: identical seeds give identical logs and parameters") {
    const auto run = [](std::uint64_t seed) {
        ModelConfig cfg = toy_config(2, 1, 8, 2, 2);
        cfg.encoder.coord_dim = 3;
        QvfModel model = QvfModel::create(cfg, seed);
        LatentTable latents = LatentTable::sampled(2, 2, 1e-3, seed);
        std::vector<FieldSamples> fields;
        for (int f = 0; f < 2; ++f) {
            fields.push_back(sample_sdf(f ? Primitive{Box{}} : Primitive{Sphere{}}, 300, 0.5, 40 + f));
        }
        FieldDataset ds = sdf_dataset(fields);
        ds.fields[0].values = ds.fields[0].values.replicate(2, 1);
        ds.fields[1].values = ds.fields[1].values.replicate(2, 1);
        TrainConfig tc;
        tc.epochs = 20;
        tc.coord_batch_size = 64;
        tc.seed = seed;
        const auto log = train(model, latents, ds, tc);
        return std::make_tuple(log, model.encoder.params(), model.circuit_params, latents.codes);
    };
    const auto [log_a, enc_a, circ_a, lat_a] = run(3);
    const auto [log_b, enc_b, circ_b, lat_b] = run(3);
    REQUIRE(log_a.size() == log_b.size());
    for (std::size_t i = 0; i < log_a.size(); ++i) {
        CHECK(log_a[i].loss == log_b[i].loss);
        CHECK(log_a[i].metric == log_b[i].metric);
        CHECK(log_a[i].lr == log_b[i].lr);
    }
    CHECK(enc_a == enc_b);
    CHECK(circ_a == circ_b);
    CHECK(lat_a == lat_b);
    const auto [log_c, enc_c, circ_c, lat_c] = run(4);
    CHECK(enc_c != enc_a);
}

TEST_CASE("train: shape and configuration errors") {
    QvfModel model = QvfModel::create(toy_config(3, 1, 8, 0, 3), 1);
    LatentTable latents = LatentTable::sampled(1, 0, 1e-3, 0);
    const FieldDataset ds = constant_images(1, 4, 0.5);
    TrainConfig tc;
    tc.epochs = 1;
    tc.learning_rate = 0.0;
    CHECK_THROWS_AS(train(model, latents, ds, tc), ConfigError);
    tc.learning_rate = 1e-3;
    LatentTable wrong = LatentTable::sampled(2, 0, 1e-3, 0);
    CHECK_THROWS_AS(train(model, wrong, ds, tc), ConfigError);
    QvfModel narrow = QvfModel::create(toy_config(3, 1, 8, 0, 1), 1);
    CHECK_THROWS_AS(train(narrow, latents, ds, tc), ConfigError);
    QvfModel diverging = model;
    diverging.encoder.params()[0] = NAN;
    CHECK_THROWS_AS(train(diverging, latents, ds, tc), NumericError);
}

TEST_CASE("map_infer_latent: regularizer alone shrinks the code") {
    const QvfModel model = QvfModel::create(toy_config(2, 1, 8, 4, 2), 1);
    MapConfig mc;
    mc.reg_weight = 1.0;
    mc.seed = 5;
    const Eigen::VectorXd z = map_infer_latent(model, Eigen::MatrixXd(2, 0), Eigen::MatrixXd(2, 0), mc);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    Eigen::VectorXd z0(4);
    for (auto &x : z0) {
        x = nd(rng);
    }
    CHECK(z.norm() < 0.1 * z0.norm());
    mc.steps = 0;
    CHECK(map_infer_latent(model, Eigen::MatrixXd(2, 0), Eigen::MatrixXd(2, 0), mc) == z0);
}

TEST_CASE("map_infer_latent: recovers codes of a trained toy collection") {
    ModelConfig cfg = toy_config(3, 2, 32, 4, 3);
    cfg.encoder.hidden_layers = 2;
    cfg.encoder.siren_omega0 = 10.0;
    cfg.encoder.siren_hidden_omega = 1.0;
    QvfModel model = QvfModel::create(cfg, 21);
    LatentTable latents = LatentTable::sampled(3, 4, 1e-3, 22);
    const FieldDataset ds = pattern_images(3, 8);
    TrainConfig tc;
    tc.epochs = 1500;
    tc.learning_rate = 3e-3;
    train(model, latents, ds, tc);

    const Eigen::MatrixXd targets = ds.scale.to_unit(ds.fields[0].values);
    const Eigen::MatrixXd &coords = ds.fields[0].coords;
    const double train_err = mse(predict(model, coords, latents.code(0)), targets);

    MapConfig full;
    full.reg_weight = 0.0;
    full.seed = 3;
    // The objective is not convex in z; several starts guard against a poor basin.
    full.restarts = 8;
    const Eigen::VectorXd z_full = map_infer_latent(model, coords, targets, full);
    CHECK(mse(predict(model, coords, z_full), targets) <= 2.0 * train_err);

    const MaskSplit split = split_by_mask(ds.fields[0], Mask::random(0.5, 4));
    const FieldSamples kept = ds.fields[0].subset(split.kept);
    const FieldSamples held = ds.fields[0].subset(split.held_out);
    MapConfig partial;
    partial.seed = 7;
    const Eigen::VectorXd z_map = map_infer_latent(model, kept.coords, ds.scale.to_unit(kept.values), partial);
    const Eigen::MatrixXd held_targets = ds.scale.to_unit(held.values);
    const double map_err = mse(predict(model, held.coords, z_map), held_targets);
    std::vector<double> random_errs;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 10; ++i) {
        Eigen::VectorXd z(4);
        for (auto &x : z) {
            x = nd(rng);
        }
        random_errs.push_back(mse(predict(model, held.coords, z), held_targets));
    }
    std::nth_element(random_errs.begin(), random_errs.begin() + 5, random_errs.end());
    CHECK(map_err < random_errs[5]);
}

TEST_CASE("interpolate_latents") {
    const Eigen::Vector3d a(1.0, -2.0, 0.5);
    const Eigen::Vector3d b(-1.0, 2.0, -0.5);
    CHECK(interpolate_latents(a, b, 0.0) == Eigen::VectorXd(a));
    CHECK(interpolate_latents(a, b, 1.0) == Eigen::VectorXd(b));
    CHECK(interpolate_latents(a, b, 0.5).isZero());
    CHECK_THROWS_AS(interpolate_latents(a, Eigen::Vector2d::Zero(), 0.5), ConfigError);
}
