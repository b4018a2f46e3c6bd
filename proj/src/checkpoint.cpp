#include "qvf/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "qvf/errors.hpp"

namespace qvf {

namespace {

using nlohmann::json;

constexpr char kMagic[] = "QVFCKPT1\n";
constexpr std::size_t kMagicSize = sizeof(kMagic) - 1;

void put_u64(std::string &out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

std::uint64_t get_u64(const std::string &in, std::size_t pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)])) << (8 * i);
    }
    return v;
}

void put_doubles(std::string &out, const double *data, Eigen::Index count) {
    for (Eigen::Index i = 0; i < count; ++i) {
        put_u64(out, std::bit_cast<std::uint64_t>(data[i]));
    }
}

/// Non-finite metrics (a perfect fit's PSNR) become null.
json metric_value(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json history_json(const std::vector<EpochMetrics> &history) {
    json epochs = json::array();
    json loss = json::array();
    json metric = json::array();
    json lr = json::array();
    for (const EpochMetrics &m : history) {
        epochs.push_back(m.epoch);
        loss.push_back(metric_value(m.loss));
        metric.push_back(metric_value(m.metric));
        lr.push_back(m.lr);
    }
    return {{"epoch", epochs}, {"loss", loss}, {"metric", metric}, {"lr", lr}};
}

struct Blob {
    std::string name;
    std::vector<Eigen::Index> shape;
    const double *data = nullptr;
    Eigen::Index count = 0;
};

template <class T> T field(const json &obj, const char *key) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw DataError(std::string("checkpoint header lacks '") + key + "'");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception &) {
        throw DataError(std::string("checkpoint header field '") + key + "' has the wrong type");
    }
}

double nullable(const json &v, double fallback) {
    return v.is_null() ? fallback : v.get<double>();
}

} // namespace

std::string serialize_checkpoint(const Checkpoint &ck) {
    ck.model.validate();
    if (ck.latents.dim() != ck.model.latent_dim()) {
        throw ConfigError("latent table width does not match the model");
    }
    const EncoderConfig &enc = ck.model.encoder.config();
    const AnsatzLayout &layout = ck.model.layout;

    const std::vector<Blob> blobs = {
        {"encoder_weights", {ck.model.encoder.param_count()}, ck.model.encoder.params().data(),
         ck.model.encoder.param_count()},
        {"circuit_params", {ck.model.circuit_params.size()}, ck.model.circuit_params.data(),
         ck.model.circuit_params.size()},
        {"latent_codes", {ck.latents.codes.rows(), ck.latents.codes.cols()}, ck.latents.codes.data(),
         ck.latents.codes.size()},
    };
    json table = json::array();
    Eigen::Index offset = 0;
    for (const Blob &b : blobs) {
        table.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", offset}, {"count", b.count}});
        offset += b.count * 8;
    }

    json scale = {{"offset", ck.scale.offset}, {"half_range", ck.scale.half_range}};
    scale["clamp"] = ck.scale.clamp ? json(*ck.scale.clamp) : json(nullptr);

    const json header = {
        {"format", 1},
        {"encoder",
         {{"activation", to_string(enc.activation)},
          {"pe_frequencies", enc.pe_frequencies},
          {"hidden_dim", enc.hidden_dim},
          {"hidden_layers", enc.hidden_layers},
          {"coord_dim", enc.coord_dim},
          {"latent_dim", enc.latent_dim},
          {"output_dim", enc.output_dim},
          {"beta", enc.beta},
          {"siren_omega0", enc.siren_omega0},
          {"siren_hidden_omega", enc.siren_hidden_omega}}},
        {"layout",
         {{"style", to_string(layout.style)},
          {"n_qubits", layout.n_qubits},
          {"depth", layout.depth},
          {"reps_per_layer", layout.reps_per_layer},
          {"init_scheme", to_string(layout.init_scheme)},
          {"entangler", to_string(layout.entangler)}}},
        {"output_channels", ck.model.output_channels()},
        {"latent_reg_weight", ck.latents.reg_weight},
        {"field",
         {{"kind", to_string(ck.kind)},
          {"names", ck.names},
          {"image_height", ck.image_height},
          {"image_width", ck.image_width},
          {"scale", scale}}},
        {"history", history_json(ck.history)},
        {"blobs", table},
    };

    const std::string text = header.dump();
    std::string out(kMagic, kMagicSize);
    put_u64(out, text.size());
    out += text;
    for (const Blob &b : blobs) {
        put_doubles(out, b.data, b.count);
    }
    return out;
}

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &checkpoint) {
    const std::string bytes = serialize_checkpoint(checkpoint);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write checkpoint " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw DataError("failed writing checkpoint " + path.string());
    }
}

Checkpoint deserialize_checkpoint(const std::string &bytes) {
    if (bytes.size() < kMagicSize + 8 || bytes.compare(0, kMagicSize, kMagic) != 0) {
        throw DataError("not a checkpoint file");
    }
    const std::uint64_t header_len = get_u64(bytes, kMagicSize);
    const std::size_t body = kMagicSize + 8;
    if (header_len > bytes.size() - body) {
        throw DataError("checkpoint header is truncated");
    }
    json header;
    try {
        header = json::parse(bytes.substr(body, static_cast<std::size_t>(header_len)));
    } catch (const json::exception &e) {
        throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    if (field<int>(header, "format") != 1) {
        throw DataError("unsupported checkpoint format version");
    }
    const std::size_t blob_base = body + static_cast<std::size_t>(header_len);

    Checkpoint ck;
    try {
        const json &e = header.at("encoder");
        EncoderConfig enc;
        enc.activation = parse_activation(field<std::string>(e, "activation"));
        enc.pe_frequencies = field<int>(e, "pe_frequencies");
        enc.hidden_dim = field<int>(e, "hidden_dim");
        enc.hidden_layers = field<int>(e, "hidden_layers");
        enc.coord_dim = field<int>(e, "coord_dim");
        enc.latent_dim = field<int>(e, "latent_dim");
        enc.output_dim = field<int>(e, "output_dim");
        enc.beta = field<double>(e, "beta");
        enc.siren_omega0 = field<double>(e, "siren_omega0");
        enc.siren_hidden_omega = field<double>(e, "siren_hidden_omega");

        const json &l = header.at("layout");
        if (parse_ansatz_style(field<std::string>(l, "style")) != AnsatzStyle::QvfReal) {
            throw DataError("checkpoint circuit is not a real-amplitude layout");
        }
        ck.model.layout = build_layout(field<int>(l, "n_qubits"), field<int>(l, "depth"),
                                       field<int>(l, "reps_per_layer"), AnsatzStyle::QvfReal,
                                       parse_init_scheme(field<std::string>(l, "init_scheme")),
                                       parse_entangler(field<std::string>(l, "entangler")));
        ck.model.measurement = MeasurementSpec::first(field<int>(header, "output_channels"));
        ck.latents.reg_weight = field<double>(header, "latent_reg_weight");

        const json &f = header.at("field");
        const auto kind = field<std::string>(f, "kind");
        if (kind == to_string(FieldKind::Image2D)) {
            ck.kind = FieldKind::Image2D;
        } else if (kind == to_string(FieldKind::Sdf3D)) {
            ck.kind = FieldKind::Sdf3D;
        } else {
            throw DataError("unknown field kind '" + kind + "'");
        }
        ck.names = field<std::vector<std::string>>(f, "names");
        ck.image_height = field<int>(f, "image_height");
        ck.image_width = field<int>(f, "image_width");
        const json &s = f.at("scale");
        ck.scale.offset = field<double>(s, "offset");
        ck.scale.half_range = field<double>(s, "half_range");
        if (!s.at("clamp").is_null()) {
            ck.scale.clamp = field<double>(s, "clamp");
        }

        const json &h = header.at("history");
        const auto epochs = field<std::vector<int>>(h, "epoch");
        const json &loss = h.at("loss");
        const json &metric = h.at("metric");
        const auto lr = field<std::vector<double>>(h, "lr");
        if (loss.size() != epochs.size() || metric.size() != epochs.size() || lr.size() != epochs.size()) {
            throw DataError("checkpoint history columns differ in length");
        }
        const double inf = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < epochs.size(); ++i) {
            ck.history.push_back({epochs[i], nullable(loss[i], inf), nullable(metric[i], inf), lr[i]});
        }

        auto read_blob = [&](const char *name, Eigen::Index expected) {
            for (const json &b : header.at("blobs")) {
                if (field<std::string>(b, "name") != name) {
                    continue;
                }
                const auto count = field<Eigen::Index>(b, "count");
                const auto offset = field<std::size_t>(b, "offset");
                if (count != expected) {
                    throw DataError(std::string("blob '") + name + "' has " + std::to_string(count) +
                                    " values, expected " + std::to_string(expected));
                }
                const std::size_t start = blob_base + offset;
                if (start > bytes.size() || static_cast<std::size_t>(count) * 8 > bytes.size() - start) {
                    throw DataError(std::string("blob '") + name + "' runs past the end of the file");
                }
                Eigen::VectorXd v(count);
                for (Eigen::Index i = 0; i < count; ++i) {
                    v(i) = std::bit_cast<double>(get_u64(bytes, start + static_cast<std::size_t>(i) * 8));
                }
                return v;
            }
            throw DataError(std::string("checkpoint lacks blob '") + name + "'");
        };

        ck.model.encoder = EnergyNet(enc, read_blob("encoder_weights", EnergyNet::count_params(enc)));
        ck.model.circuit_params =
            read_blob("circuit_params", static_cast<Eigen::Index>(ck.model.layout.param_count()));
        const auto fields = static_cast<Eigen::Index>(ck.names.size());
        const Eigen::VectorXd codes = read_blob("latent_codes", enc.latent_dim * fields);
        ck.latents.codes = codes.reshaped(enc.latent_dim, fields);
        ck.model.validate();
    } catch (const ConfigError &e) {
        throw DataError(std::string("checkpoint is inconsistent: ") + e.what());
    } catch (const json::exception &e) {
        throw DataError(std::string("checkpoint header is malformed: ") + e.what());
    }
    if (ck.names.empty()) {
        throw DataError("checkpoint holds no fields");
    }
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint(buf.str());
}

std::string metric_record(const EpochMetrics &m, FieldKind kind) {
    json rec = {{"epoch", m.epoch}, {"loss", metric_value(m.loss)}, {"lr", m.lr}};
    rec[kind == FieldKind::Image2D ? "psnr" : "mae"] = metric_value(m.metric);
    return rec.dump();
}

void write_metric_log(std::ostream &out, const std::vector<EpochMetrics> &history, FieldKind kind) {
    for (const EpochMetrics &m : history) {
        out << metric_record(m, kind) << '\n';
    }
}

} // namespace qvf
