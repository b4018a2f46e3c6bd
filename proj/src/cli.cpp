#include "qvf/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qvf/ansatz.hpp"
#include "qvf/errors.hpp"
#include "qvf/random.hpp"

namespace qvf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- config parsing

[[noreturn]] void type_error(const std::string &key, const char *expected) {
    throw ConfigError("config key '" + key + "' must be " + expected);
}

void assign(int &dst, const json &v, const std::string &key) {
    if (!v.is_number_integer()) {
        type_error(key, "an integer");
    }
    const auto x = v.get<long long>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        type_error(key, "an integer in int range");
    }
    dst = static_cast<int>(x);
}

void assign(long &dst, const json &v, const std::string &key) {
    if (!v.is_number_integer()) {
        type_error(key, "an integer");
    }
    dst = v.get<long>();
}

void assign(std::uint64_t &dst, const json &v, const std::string &key) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
        type_error(key, "a non-negative integer");
    }
    dst = v.get<std::uint64_t>();
}

void assign(double &dst, const json &v, const std::string &key) {
    if (!v.is_number()) {
        type_error(key, "a number");
    }
    dst = v.get<double>();
}

void assign(std::string &dst, const json &v, const std::string &key) {
    if (!v.is_string()) {
        type_error(key, "a string");
    }
    dst = v.get<std::string>();
}

template <class T> void assign(std::optional<T> &dst, const json &v, const std::string &key) {
    if (v.is_null()) {
        dst.reset();
        return;
    }
    T value{};
    assign(value, v, key);
    dst = value;
}

template <class T> void assign(std::vector<T> &dst, const json &v, const std::string &key) {
    if (!v.is_array()) {
        type_error(key, "a list");
    }
    std::vector<T> out;
    for (const json &item : v) {
        T value{};
        assign(value, item, key);
        out.push_back(std::move(value));
    }
    dst = std::move(out);
}

/// A single path is accepted where a list is expected.
void assign_paths(std::vector<std::string> &dst, const json &v, const std::string &key) {
    if (v.is_string()) {
        dst = {v.get<std::string>()};
        return;
    }
    assign(dst, v, key);
}

/// An integer side length or [height, width].
void assign_resolution(std::optional<std::array<int, 2>> &dst, const json &v, const std::string &key) {
    if (v.is_null()) {
        dst.reset();
    } else if (v.is_number_integer()) {
        int side = 0;
        assign(side, v, key);
        dst = std::array<int, 2>{side, side};
    } else if (v.is_array() && v.size() == 2) {
        std::array<int, 2> hw{};
        assign(hw[0], v[0], key);
        assign(hw[1], v[1], key);
        dst = hw;
    } else {
        type_error(key, "an integer or [height, width]");
    }
}

using Setter = std::function<void(RunConfig &, const json &)>;

#define QVF_KEY(name) {#name, [](RunConfig &c, const json &v) { assign(c.name, v, #name); }}

const std::map<std::string, Setter> &setters() {
    static const std::map<std::string, Setter> table = {
        QVF_KEY(task),
        {"data", [](RunConfig &c, const json &v) { assign_paths(c.data, v, "data"); }},
        QVF_KEY(shapes),
        QVF_KEY(samples_per_shape),
        QVF_KEY(near_surface_fraction),
        QVF_KEY(sdf_clamp),
        QVF_KEY(out_dir),
        QVF_KEY(checkpoint),
        QVF_KEY(n_qubits),
        QVF_KEY(depth),
        QVF_KEY(reps),
        QVF_KEY(hidden_dim),
        QVF_KEY(hidden_layers),
        QVF_KEY(pe_frequencies),
        QVF_KEY(latent_dim),
        QVF_KEY(beta),
        QVF_KEY(activation),
        QVF_KEY(siren_omega0),
        QVF_KEY(siren_hidden_omega),
        QVF_KEY(init_scheme),
        QVF_KEY(entangler),
        QVF_KEY(output_channels),
        QVF_KEY(learning_rate),
        QVF_KEY(epochs),
        QVF_KEY(coord_batch_size),
        QVF_KEY(plateau_window),
        QVF_KEY(plateau_factor),
        QVF_KEY(latent_reg),
        QVF_KEY(circuit_gradient),
        QVF_KEY(seed),
        QVF_KEY(log_every),
        {"resolution", [](RunConfig &c, const json &v) { assign_resolution(c.resolution, v, "resolution"); }},
        QVF_KEY(shots),
        QVF_KEY(noise_sigma),
        QVF_KEY(field),
        QVF_KEY(iso),
        QVF_KEY(n_list),
        QVF_KEY(samples),
        QVF_KEY(styles),
        QVF_KEY(shots_list),
        QVF_KEY(sigma_list),
        QVF_KEY(repeats),
        QVF_KEY(keep_fraction),
        QVF_KEY(mask_seed),
        QVF_KEY(crop_axis),
        QVF_KEY(crop_threshold),
        QVF_KEY(noise_ratios),
        QVF_KEY(max_observations),
        QVF_KEY(map_steps),
        QVF_KEY(map_lr),
        QVF_KEY(map_reg),
        QVF_KEY(map_batch_size),
        QVF_KEY(map_restarts),
        QVF_KEY(field_a),
        QVF_KEY(field_b),
        QVF_KEY(steps),
    };
    return table;
}

#undef QVF_KEY

void apply(RunConfig &config, const std::string &key, const json &value) {
    const auto it = setters().find(key);
    if (it == setters().end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    it->second(config, value);
}

json parse_flag_value(const std::string &text) {
    try {
        return json::parse(text);
    } catch (const json::exception &) {
        return text;
    }
}

const std::set<std::string> kTasks = {"train",  "render",  "eval",     "variance",   "shots",
                                      "noise",  "inpaint", "complete", "interpolate"};
const std::set<std::string> kCheckpointTasks = {"render", "eval",     "shots",      "noise",
                                                "inpaint", "complete", "interpolate"};
const std::set<std::string> kDataTasks = {"train", "eval", "shots", "noise", "inpaint", "complete"};

void validate(const RunConfig &c) {
    if (c.task.empty()) {
        throw UsageError("no task given; expected one of train, render, eval, variance, shots, noise, inpaint, "
                         "complete, interpolate");
    }
    if (kTasks.count(c.task) == 0) {
        throw ConfigError("config key 'task': unknown task '" + c.task + "'");
    }
    for (const std::string &p : c.data) {
        if (!fs::exists(p)) {
            throw ConfigError("config key 'data': path '" + p + "' does not exist");
        }
    }
    if (kDataTasks.count(c.task) != 0 && c.data.empty() && c.shapes.empty()) {
        throw ConfigError("config key 'data': task '" + c.task + "' needs data paths or shapes");
    }
    if (kCheckpointTasks.count(c.task) != 0 && !fs::exists(c.checkpoint_path())) {
        throw ConfigError("config key 'checkpoint': path '" + c.checkpoint_path() + "' does not exist");
    }
    if (c.shots && *c.shots < 1) {
        throw ConfigError("config key 'shots' must be >= 1");
    }
    if (c.noise_sigma < 0.0) {
        throw ConfigError("config key 'noise_sigma' must be >= 0");
    }
    if (c.repeats < 1) {
        throw ConfigError("config key 'repeats' must be >= 1");
    }
    if (c.steps < 2) {
        throw ConfigError("config key 'steps' must be >= 2");
    }
    if (c.samples_per_shape < 1) {
        throw ConfigError("config key 'samples_per_shape' must be >= 1");
    }
    if (c.resolution && ((*c.resolution)[0] < 2 || (*c.resolution)[1] < 2)) {
        throw ConfigError("config key 'resolution' must be >= 2");
    }
    if (c.crop_axis < 0 || c.crop_axis > 2) {
        throw ConfigError("config key 'crop_axis' must be 0, 1 or 2");
    }
    for (long s : c.shots_list) {
        if (s < 1) {
            throw ConfigError("config key 'shots_list' entries must be >= 1");
        }
    }
}

// ---------------------------------------------------------------- data

enum class FileKind { Image, Sdf, Other };

FileKind file_kind(const fs::path &p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
        return FileKind::Image;
    }
    if (ext == ".sdf" || ext == ".txt" || ext == ".xyzd") {
        return FileKind::Sdf;
    }
    return FileKind::Other;
}

std::vector<fs::path> expand_paths(const std::vector<std::string> &entries) {
    std::vector<fs::path> out;
    for (const std::string &e : entries) {
        if (fs::is_directory(e)) {
            std::vector<fs::path> files;
            for (const auto &item : fs::directory_iterator(e)) {
                if (item.is_regular_file() && file_kind(item.path()) != FileKind::Other) {
                    files.push_back(item.path());
                }
            }
            std::sort(files.begin(), files.end());
            if (files.empty()) {
                throw DataError("directory '" + e + "' holds no image or sample files");
            }
            out.insert(out.end(), files.begin(), files.end());
        } else {
            if (file_kind(e) == FileKind::Other) {
                throw DataError("'" + e + "' is neither an image (.ppm/.pgm) nor a sample file (.sdf/.txt)");
            }
            out.emplace_back(e);
        }
    }
    return out;
}

double median(std::vector<double> v) {
    if (v.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << text;
}

void write_report(const RunConfig &c, const std::string &name, const json &report, std::ostream &out) {
    write_text(fs::path(c.out_dir) / name, report.dump(2) + "\n");
    out << report.dump() << '\n';
}

int checked_field(const Checkpoint &ck, int field, const char *key) {
    if (field < 0 || field >= ck.latents.size()) {
        throw IndexError(std::string("config key '") + key + "': field " + std::to_string(field) +
                         " outside the checkpoint's " + std::to_string(ck.latents.size()) + " fields");
    }
    return field;
}

json field_metrics(const Checkpoint &ck, const Eigen::MatrixXd &pred, const Eigen::MatrixXd &ref) {
    if (ck.kind == FieldKind::Image2D) {
        const double m = mse(pred, ref);
        return {{"mse", m}, {"psnr", number(psnr_from_mse(m))}};
    }
    return {{"mae", mae(pred, ref)}};
}

PredictOptions predict_options(const RunConfig &c) {
    PredictOptions opts;
    opts.shots = c.shots;
    opts.noise_sigma = c.noise_sigma;
    opts.seed = c.seed;
    return opts;
}

void warn_single_field(const Checkpoint &ck, std::ostream &err) {
    if (ck.latents.size() == 1 || ck.latents.dim() == 0) {
        err << "qvf: warning: checkpoint holds a single field; completion falls back to the memorized field\n";
    }
}

// ---------------------------------------------------------------- tasks

int cmd_train(const RunConfig &c, std::ostream &out) {
    const FieldDataset dataset = load_dataset(c);
    const ModelConfig mc = model_config(c, dataset);
    const TrainConfig tc = train_config(c);
    tc.validate();
    fs::create_directories(c.out_dir);

    Checkpoint ck;
    ck.model = QvfModel::create(mc, c.seed);
    ck.latents = LatentTable::sampled(static_cast<int>(dataset.fields.size()), mc.encoder.latent_dim, c.latent_reg,
                                      derive_seed(c.seed, {4}));
    ck.kind = dataset.kind;
    ck.names = dataset.names;
    ck.image_height = dataset.image_height;
    ck.image_width = dataset.image_width;
    ck.scale = dataset.scale;
    const char *metric = dataset.kind == FieldKind::Image2D ? "psnr" : "mae";
    ck.history = train(ck.model, ck.latents, dataset, tc, [&](const EpochMetrics &m) {
        if (c.log_every > 0 && (m.epoch % c.log_every == 0 || m.epoch == tc.epochs)) {
            out << "epoch " << m.epoch << " loss " << m.loss << ' ' << metric << ' ' << m.metric << " lr " << m.lr
                << '\n'
                << std::flush;
        }
    });

    save_checkpoint(c.checkpoint_path(), ck);
    std::ostringstream log;
    write_metric_log(log, ck.history, ck.kind);
    write_text(fs::path(c.out_dir) / "metrics.jsonl", log.str());

    json fields = json::array();
    std::vector<double> per_field;
    for (std::size_t i = 0; i < dataset.fields.size(); ++i) {
        const FieldSamples &f = dataset.fields[i];
        const Eigen::MatrixXd pred = render_values(ck, ck.latents.code(static_cast<int>(i)), f.coords);
        json entry = field_metrics(ck, pred, f.values);
        entry["name"] = ck.names[i];
        per_field.push_back(dataset.kind == FieldKind::Image2D ? psnr(pred, f.values) : mae(pred, f.values));
        fields.push_back(entry);
    }
    const double mean = std::accumulate(per_field.begin(), per_field.end(), 0.0) / static_cast<double>(per_field.size());
    json report = {{"task", "train"}, {"epochs", tc.epochs}, {"fields", fields}};
    report[std::string("mean_") + metric] = number(mean);
    write_report(c, "train.json", report, out);
    return 0;
}

int cmd_render(const RunConfig &c, std::ostream &out) {
    const Checkpoint ck = load_checkpoint(c.checkpoint_path());
    const int field = checked_field(ck, c.field, "field");
    const Eigen::VectorXd z = ck.latents.code(field);
    fs::create_directories(c.out_dir);
    json report = {{"task", "render"}, {"field", field}};
    if (ck.kind == FieldKind::Image2D) {
        const int h = c.resolution ? (*c.resolution)[0] : ck.image_height;
        const int w = c.resolution ? (*c.resolution)[1] : ck.image_width;
        const Image img = render_image(ck, z, h, w, predict_options(c));
        const fs::path path = fs::path(c.out_dir) / "render.ppm";
        write_pnm(img, path);
        report["output"] = path.string();
        report["height"] = h;
        report["width"] = w;
    } else {
        const int res = c.resolution ? (*c.resolution)[0] : 64;
        const Mesh mesh = render_mesh(ck, z, res, c.iso, predict_options(c));
        const fs::path path = fs::path(c.out_dir) / "render.obj";
        write_obj(mesh, path);
        report["output"] = path.string();
        report["resolution"] = res;
        report["vertices"] = mesh.vertices.size();
        report["faces"] = mesh.faces.size();
    }
    report["shots"] = c.shots ? json(*c.shots) : json(nullptr);
    report["noise_sigma"] = c.noise_sigma;
    write_report(c, "render.json", report, out);
    return 0;
}

int cmd_eval(const RunConfig &c, std::ostream &out) {
    const Checkpoint ck = load_checkpoint(c.checkpoint_path());
    const FieldDataset dataset = load_dataset(c);
    if (dataset.kind != ck.kind || static_cast<int>(dataset.fields.size()) != ck.latents.size()) {
        throw ConfigError("config key 'data': evaluation data must match the checkpoint's fields");
    }
    fs::create_directories(c.out_dir);
    json fields = json::array();
    for (std::size_t i = 0; i < dataset.fields.size(); ++i) {
        const FieldSamples &f = dataset.fields[i];
        const Eigen::MatrixXd pred =
            render_values(ck, ck.latents.code(static_cast<int>(i)), f.coords, predict_options(c));
        json entry = field_metrics(ck, pred, f.values);
        entry["name"] = ck.names[i];
        fields.push_back(entry);
    }
    write_report(c, "eval.json", {{"task", "eval"}, {"fields", fields}}, out);
    return 0;
}

int cmd_variance(const RunConfig &c, std::ostream &out) {
    std::vector<AnsatzStyle> styles;
    for (const std::string &s : c.styles) {
        styles.push_back(parse_ansatz_style(s));
    }
    const VarianceReport rep = gradient_variance_experiment(c.n_list, styles, c.samples, c.seed, c.depth);
    fs::create_directories(c.out_dir);
    json rows = json::array();
    std::ostringstream csv;
    csv << "n_qubits,style,mean,variance,log10_variance,mean_std_error\n";
    csv.precision(17);
    for (const VarianceRow &r : rep.rows) {
        const double se = std::sqrt(r.variance / r.samples);
        rows.push_back({{"n_qubits", r.n_qubits},
                        {"style", to_string(r.style)},
                        {"mean", r.mean},
                        {"variance", r.variance},
                        {"log10_variance", number(std::log10(r.variance))},
                        {"mean_std_error", se}});
        csv << r.n_qubits << ',' << to_string(r.style) << ',' << r.mean << ',' << r.variance << ','
            << std::log10(r.variance) << ',' << se << '\n';
    }
    write_text(fs::path(c.out_dir) / "variance.csv", csv.str());
    write_report(c, "variance.json",
                 {{"task", "variance"}, {"samples", c.samples}, {"depth", c.depth}, {"seed", c.seed}, {"rows", rows}},
                 out);
    return 0;
}

json sweep_json(const SweepReport &rep, const char *setting) {
    json points = json::array();
    for (const SweepPoint &p : rep.points) {
        json runs = json::array();
        for (double v : p.psnr) {
            runs.push_back(number(v));
        }
        points.push_back({{setting, p.setting}, {"psnr", runs}, {"median_psnr", number(p.median_psnr)}});
    }
    return {{"analytic_psnr", number(rep.analytic_psnr)}, {"points", points}};
}

const FieldSamples &reference_field(const RunConfig &c, const Checkpoint &ck, const FieldDataset &dataset) {
    if (dataset.kind != FieldKind::Image2D || ck.kind != FieldKind::Image2D) {
        throw ModeError("shot and noise studies score images; use eval for shapes");
    }
    checked_field(ck, c.field, "field");
    if (c.field >= static_cast<int>(dataset.fields.size())) {
        throw IndexError("config key 'field': no reference image " + std::to_string(c.field) + " in the data");
    }
    return dataset.fields[static_cast<std::size_t>(c.field)];
}

int cmd_shots(const RunConfig &c, std::ostream &out) {
    const Checkpoint ck = load_checkpoint(c.checkpoint_path());
    const FieldDataset dataset = load_dataset(c);
    const FieldSamples &ref = reference_field(c, ck, dataset);
    const SweepReport rep = shots_sweep(ck, c.field, ref, c.shots_list, c.repeats, c.seed);
    fs::create_directories(c.out_dir);
    json report = sweep_json(rep, "shots");
    report["task"] = "shots";
    report["field"] = c.field;
    report["repeats"] = c.repeats;
    write_report(c, "shots.json", report, out);
    return 0;
}

int cmd_noise(const RunConfig &c, std::ostream &out) {
    const Checkpoint ck = load_checkpoint(c.checkpoint_path());
    const FieldDataset dataset = load_dataset(c);
    const FieldSamples &ref = reference_field(c, ck, dataset);
    const SweepReport rep = noise_sweep(ck, c.field, ref, c.sigma_list, c.repeats, c.seed);
    fs::create_directories(c.out_dir);
    json report = sweep_json(rep, "sigma");
    report["task"] = "noise";
    report["field"] = c.field;
    report["repeats"] = c.repeats;
    write_report(c, "noise.json", report, out);
    return 0;
}

int cmd_inpaint(const RunConfig &c, std::ostream &out, std::ostream &err) {
    const Checkpoint ck = load_checkpoint(c.checkpoint_path());
    const FieldDataset dataset = load_dataset(c);
    if (dataset.kind != FieldKind::Image2D || ck.kind != FieldKind::Image2D) {
        throw ModeError("inpainting needs an image checkpoint and images");
    }
    warn_single_field(ck, err);
    fs::create_directories(c.out_dir);
    const MapConfig map = map_config(c);
    json fields = json::array();
    std::vector<double> ratios;
    for (std::size_t i = 0; i < dataset.fields.size(); ++i) {
        const Mask mask = Mask::random(c.keep_fraction, derive_seed(c.mask_seed, {i}));
        const InpaintResult r = inpaint(ck, dataset.fields[i], mask, map);
        const Image img = render_image(ck, r.latent, dataset.image_height, dataset.image_width);
        write_pnm(img, fs::path(c.out_dir) / ("inpaint_" + std::to_string(i) + ".ppm"));
        ratios.push_back(r.map_mse / r.prior_mse);
        fields.push_back({{"name", dataset.names[i]},
                          {"held_out", r.split.held_out.size()},
                          {"map_mse", r.map_mse},
                          {"prior_mse", r.prior_mse},
                          {"map_psnr", number(psnr_from_mse(r.map_mse))},
                          {"prior_psnr", number(psnr_from_mse(r.prior_mse))}});
    }
    write_report(c, "inpaint.json",
                 {{"task", "inpaint"},
                  {"keep_fraction", c.keep_fraction},
                  {"fields", fields},
                  {"median_mse_ratio", number(median(ratios))}},
                 out);
    return 0;
}

int cmd_complete(const RunConfig &c, std::ostream &out, std::ostream &err) {
    const Checkpoint ck = load_checkpoint(c.checkpoint_path());
    const FieldDataset dataset = load_dataset(c);
    if (dataset.kind != FieldKind::Sdf3D || ck.kind != FieldKind::Sdf3D) {
        throw ModeError("shape completion needs a shape checkpoint and signed-distance samples");
    }
    warn_single_field(ck, err);
    fs::create_directories(c.out_dir);
    const MapConfig map = map_config(c);
    const Mask mask = Mask::half_space(c.crop_axis, c.crop_threshold);
    const int res = c.resolution ? (*c.resolution)[0] : 64;
    json fields = json::array();
    for (std::size_t i = 0; i < dataset.fields.size(); ++i) {
        const std::vector<CompletionResult> results = complete_shape(
            ck, dataset.fields[i], mask, c.noise_ratios, c.max_observations, map, derive_seed(c.seed, {i}));
        json rows = json::array();
        for (std::size_t k = 0; k < results.size(); ++k) {
            const Mesh mesh = render_mesh(ck, results[k].latent, res, c.iso);
            write_obj(mesh, fs::path(c.out_dir) /
                                ("complete_" + std::to_string(i) + "_" + std::to_string(k) + ".obj"));
            rows.push_back({{"noise_ratio", results[k].noise_ratio},
                            {"held_out_mae", results[k].held_out_mae},
                            {"faces", mesh.faces.size()}});
        }
        fields.push_back({{"name", dataset.names[i]}, {"results", rows}});
    }
    write_report(c, "complete.json", {{"task", "complete"}, {"fields", fields}}, out);
    return 0;
}

int cmd_interpolate(const RunConfig &c, std::ostream &out) {
    const Checkpoint ck = load_checkpoint(c.checkpoint_path());
    const Eigen::VectorXd za = ck.latents.code(checked_field(ck, c.field_a, "field_a"));
    const Eigen::VectorXd zb = ck.latents.code(checked_field(ck, c.field_b, "field_b"));
    fs::create_directories(c.out_dir);
    json frames = json::array();
    for (int j = 0; j < c.steps; ++j) {
        const double t = static_cast<double>(j) / (c.steps - 1);
        const Eigen::VectorXd z = interpolate_latents(za, zb, t);
        json frame = {{"t", t}};
        if (ck.kind == FieldKind::Image2D) {
            const int h = c.resolution ? (*c.resolution)[0] : ck.image_height;
            const int w = c.resolution ? (*c.resolution)[1] : ck.image_width;
            const fs::path path = fs::path(c.out_dir) / ("interp_" + std::to_string(j) + ".ppm");
            write_pnm(render_image(ck, z, h, w), path);
            frame["output"] = path.string();
        } else {
            const Mesh mesh = render_mesh(ck, z, c.resolution ? (*c.resolution)[0] : 64, c.iso);
            const fs::path path = fs::path(c.out_dir) / ("interp_" + std::to_string(j) + ".obj");
            write_obj(mesh, path);
            frame["output"] = path.string();
            frame["vertices"] = mesh.vertices.size();
            frame["faces"] = mesh.faces.size();
        }
        frames.push_back(frame);
    }
    write_report(c, "interpolate.json",
                 {{"task", "interpolate"}, {"field_a", c.field_a}, {"field_b", c.field_b}, {"frames", frames}}, out);
    return 0;
}

} // namespace

std::string RunConfig::checkpoint_path() const {
    return checkpoint ? *checkpoint : (fs::path(out_dir) / "checkpoint.qvf").string();
}

RunConfig parse_command_line(const std::vector<std::string> &args) {
    std::size_t i = 0;
    std::optional<std::string> task;
    if (!args.empty() && args[0].rfind("--", 0) != 0) {
        task = args[0];
        i = 1;
    }
    std::vector<std::pair<std::string, std::string>> flags;
    std::optional<std::string> config_file;
    for (; i < args.size(); i += 2) {
        if (args[i].rfind("--", 0) != 0 || args[i].size() < 3) {
            throw UsageError("expected --key value, got '" + args[i] + "'");
        }
        if (i + 1 >= args.size()) {
            throw UsageError("flag '" + args[i] + "' needs a value");
        }
        const std::string key = args[i].substr(2);
        if (key == "config") {
            config_file = args[i + 1];
        } else {
            flags.emplace_back(key, args[i + 1]);
        }
    }

    RunConfig config;
    if (config_file) {
        std::ifstream in(*config_file);
        if (!in) {
            throw ConfigError("config key 'config': cannot open '" + *config_file + "'");
        }
        json file;
        try {
            file = json::parse(in);
        } catch (const json::exception &e) {
            throw ConfigError("config file '" + *config_file + "' is not valid JSON: " + e.what());
        }
        if (!file.is_object()) {
            throw ConfigError("config file '" + *config_file + "' must hold a JSON object");
        }
        for (const auto &item : file.items()) {
            apply(config, item.key(), item.value());
        }
    }
    for (const auto &[key, value] : flags) {
        apply(config, key, parse_flag_value(value));
    }
    if (task) {
        config.task = *task;
    }
    validate(config);
    return config;
}

FieldDataset load_dataset(const RunConfig &c) {
    const std::vector<fs::path> files = expand_paths(c.data);
    std::vector<Image> images;
    std::vector<FieldSamples> samples;
    std::vector<std::string> image_names;
    std::vector<std::string> sample_names;
    for (const fs::path &p : files) {
        if (file_kind(p) == FileKind::Image) {
            images.push_back(read_pnm(p));
            image_names.push_back(p.stem().string());
        } else {
            samples.push_back(read_sdf_samples(p));
            sample_names.push_back(p.stem().string());
        }
    }
    for (std::size_t i = 0; i < c.shapes.size(); ++i) {
        const Primitive shape = parse_primitive(c.shapes[i]);
        samples.push_back(
            sample_sdf(shape, c.samples_per_shape, c.near_surface_fraction, derive_seed(c.seed, {3, i})));
        sample_names.push_back(c.shapes[i]);
    }
    if (!images.empty() && !samples.empty()) {
        throw ConfigError("config key 'data': images and signed-distance samples cannot be mixed");
    }
    if (!images.empty()) {
        return image_dataset(images, image_names);
    }
    if (samples.empty()) {
        throw ConfigError("config key 'data': no fields to load");
    }
    return sdf_dataset(std::move(samples), sample_names, c.sdf_clamp);
}

ModelConfig model_config(const RunConfig &c, const FieldDataset &dataset) {
    ModelConfig mc;
    mc.n_qubits = c.n_qubits;
    mc.depth = c.depth;
    mc.reps_per_layer = c.reps;
    mc.init_scheme = parse_init_scheme(c.init_scheme);
    mc.entangler = parse_entangler(c.entangler);
    mc.output_channels = c.output_channels.value_or(dataset.channels());
    if (mc.output_channels != dataset.channels()) {
        throw ConfigError("config key 'output_channels' must equal the data's " + std::to_string(dataset.channels()) +
                          " channels");
    }
    EncoderConfig &e = mc.encoder;
    e.activation = parse_activation(c.activation);
    e.pe_frequencies = c.pe_frequencies.value_or(dataset.kind == FieldKind::Image2D ? 10 : 6);
    e.hidden_dim = c.hidden_dim;
    e.hidden_layers = c.hidden_layers;
    e.coord_dim = dataset.coord_dim();
    e.latent_dim = c.latent_dim.value_or(dataset.fields.size() > 1 ? 64 : 0);
    e.beta = c.beta;
    e.siren_omega0 = c.siren_omega0;
    e.siren_hidden_omega = c.siren_hidden_omega;
    e.output_dim = 1 << std::clamp(c.n_qubits, 1, 20);
    mc.validate();
    return mc;
}

TrainConfig train_config(const RunConfig &c) {
    TrainConfig tc;
    tc.learning_rate = c.learning_rate;
    tc.epochs = c.epochs;
    tc.coord_batch_size = c.coord_batch_size;
    tc.plateau_window = c.plateau_window;
    tc.plateau_factor = c.plateau_factor;
    tc.seed = c.seed;
    tc.circuit_gradient = parse_circuit_gradient(c.circuit_gradient);
    return tc;
}

MapConfig map_config(const RunConfig &c) {
    MapConfig m;
    m.steps = c.map_steps;
    m.learning_rate = c.map_lr;
    m.reg_weight = c.map_reg;
    m.batch_size = c.map_batch_size;
    m.restarts = c.map_restarts;
    m.seed = c.seed;
    return m;
}

Eigen::MatrixXd render_values(const Checkpoint &ck, const Eigen::VectorXd &latent, const Eigen::MatrixXd &coords,
                              const PredictOptions &options) {
    return ck.scale.to_raw(predict(ck.model, coords, latent, options));
}

Image render_image(const Checkpoint &ck, const Eigen::VectorXd &latent, int height, int width,
                   const PredictOptions &options) {
    if (ck.kind != FieldKind::Image2D) {
        throw ModeError("image rendering needs an image checkpoint");
    }
    return samples_to_image(render_values(ck, latent, image_grid(height, width), options), height, width);
}

Mesh render_mesh(const Checkpoint &ck, const Eigen::VectorXd &latent, int resolution, double iso,
                 const PredictOptions &options) {
    if (ck.kind != FieldKind::Sdf3D) {
        throw ModeError("mesh extraction needs a shape checkpoint");
    }
    const std::array<int, 3> res{resolution, resolution, resolution};
    VoxelGrid grid(res);
    const Eigen::MatrixXd values = render_values(ck, latent, voxel_coords(res), options);
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
        grid.values[i] = values(0, static_cast<Eigen::Index>(i));
    }
    return marching_cubes(grid, iso);
}

namespace {

template <class Setting>
SweepReport sweep(const Checkpoint &ck, int field, const FieldSamples &reference, const std::vector<Setting> &settings,
                  int repeats, std::uint64_t seed, const std::function<PredictOptions(Setting, std::uint64_t)> &make) {
    if (repeats < 1) {
        throw ConfigError("sweeps need at least one repeat");
    }
    const Eigen::VectorXd z = ck.latents.code(checked_field(ck, field, "field"));
    SweepReport rep;
    rep.analytic_psnr = psnr(render_values(ck, z, reference.coords), reference.values);
    for (std::size_t s = 0; s < settings.size(); ++s) {
        SweepPoint point;
        point.setting = static_cast<double>(settings[s]);
        for (int r = 0; r < repeats; ++r) {
            const PredictOptions opts = make(settings[s], derive_seed(seed, {s, static_cast<std::uint64_t>(r)}));
            point.psnr.push_back(psnr(render_values(ck, z, reference.coords, opts), reference.values));
        }
        point.median_psnr = median(point.psnr);
        rep.points.push_back(std::move(point));
    }
    return rep;
}

} // namespace

SweepReport shots_sweep(const Checkpoint &ck, int field, const FieldSamples &reference, const std::vector<long> &shots,
                        int repeats, std::uint64_t seed) {
    return sweep<long>(ck, field, reference, shots, repeats, seed, [](long n, std::uint64_t s) {
        PredictOptions o;
        o.shots = n;
        o.seed = s;
        return o;
    });
}

SweepReport noise_sweep(const Checkpoint &ck, int field, const FieldSamples &reference,
                        const std::vector<double> &sigmas, int repeats, std::uint64_t seed) {
    return sweep<double>(ck, field, reference, sigmas, repeats, seed, [](double sigma, std::uint64_t s) {
        PredictOptions o;
        o.noise_sigma = sigma;
        o.seed = s;
        return o;
    });
}

InpaintResult inpaint(const Checkpoint &ck, const FieldSamples &target, const Mask &mask, const MapConfig &map) {
    InpaintResult r;
    r.split = split_by_mask(target, mask);
    if (r.split.held_out.empty()) {
        throw ConfigError("mask leaves no held-out samples to score");
    }
    const FieldSamples kept = target.subset(r.split.kept);
    const FieldSamples held = target.subset(r.split.held_out);
    r.latent = map_infer_latent(ck.model, kept.coords, ck.scale.to_unit(kept.values), map);
    r.map_mse = mse(render_values(ck, r.latent, held.coords), held.values);
    r.prior_mse = mse(render_values(ck, Eigen::VectorXd::Zero(ck.latents.dim()), held.coords), held.values);
    return r;
}

std::vector<CompletionResult> complete_shape(const Checkpoint &ck, const FieldSamples &target, const Mask &mask,
                                             const std::vector<double> &noise_ratios, long max_observations,
                                             const MapConfig &map, std::uint64_t seed) {
    if (mask.kind != Mask::Kind::HalfSpace) {
        throw ConfigError("shape completion crops with a half-space mask");
    }
    const MaskSplit split = split_by_mask(target, mask);
    if (split.held_out.empty()) {
        throw ConfigError("mask leaves no held-out samples to score");
    }
    std::vector<Eigen::Index> kept = split.kept;
    if (max_observations > 0 && static_cast<long>(kept.size()) > max_observations) {
        std::mt19937_64 rng(derive_seed(seed, {5}));
        std::shuffle(kept.begin(), kept.end(), rng);
        kept.resize(static_cast<std::size_t>(max_observations));
        std::sort(kept.begin(), kept.end());
    }
    const FieldSamples observed = target.subset(kept);
    const FieldSamples held = target.subset(split.held_out);
    const Eigen::MatrixXd observed_unit = ck.scale.to_unit(observed.values);

    std::mt19937_64 rng(derive_seed(seed, {6}));
    std::normal_distribution<double> nd;
    Eigen::RowVectorXd draws(observed.size());
    for (auto &x : draws) {
        x = nd(rng);
    }

    std::vector<CompletionResult> results;
    for (double ratio : noise_ratios) {
        if (!(ratio >= 0.0)) {
            throw ConfigError("noise ratios must be >= 0");
        }
        Eigen::MatrixXd coords = observed.coords;
        coords.row(mask.axis) = (coords.row(mask.axis) + ratio * draws).cwiseMax(-1.0).cwiseMin(1.0);
        CompletionResult r;
        r.noise_ratio = ratio;
        r.latent = map_infer_latent(ck.model, coords, observed_unit, map);
        r.held_out_mae = mae(render_values(ck, r.latent, held.coords), held.values);
        results.push_back(std::move(r));
    }
    return results;
}

int run(const RunConfig &c, std::ostream &out, std::ostream &err) {
    if (c.task == "train") {
        return cmd_train(c, out);
    }
    if (c.task == "render") {
        return cmd_render(c, out);
    }
    if (c.task == "eval") {
        return cmd_eval(c, out);
    }
    if (c.task == "variance") {
        return cmd_variance(c, out);
    }
    if (c.task == "shots") {
        return cmd_shots(c, out);
    }
    if (c.task == "noise") {
        return cmd_noise(c, out);
    }
    if (c.task == "inpaint") {
        return cmd_inpaint(c, out, err);
    }
    if (c.task == "complete") {
        return cmd_complete(c, out, err);
    }
    if (c.task == "interpolate") {
        return cmd_interpolate(c, out);
    }
    throw ConfigError("config key 'task': unknown task '" + c.task + "'");
}

int main_entry(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    try {
        return run(parse_command_line(args), out, err);
    } catch (const ConfigError &e) {
        err << "qvf: config error: " << e.what() << '\n';
        return 2;
    } catch (const UsageError &e) {
        err << "qvf: usage error: " << e.what() << '\n';
        return 2;
    } catch (const ModeError &e) {
        err << "qvf: error: " << e.what() << '\n';
        return 2;
    } catch (const IndexError &e) {
        err << "qvf: error: " << e.what() << '\n';
        return 2;
    } catch (const DataError &e) {
        err << "qvf: data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericError &e) {
        err << "qvf: numeric error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception &e) {
        err << "qvf: " << e.what() << '\n';
        return 1;
    }
}

} // namespace qvf::cli
