#include "qvf/fields.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace qvf {

#include "marching_cubes_tables.inc"

std::string to_string(FieldKind kind) { return kind == FieldKind::Image2D ? "image" : "sdf"; }

FieldSamples FieldSamples::subset(const std::vector<Eigen::Index> &index) const {
    return {coords(Eigen::all, index), values(Eigen::all, index)};
}

Eigen::MatrixXd TargetScale::to_unit(const Eigen::MatrixXd &raw) const {
    if (clamp) {
        return (raw.cwiseMax(-*clamp).cwiseMin(*clamp).array() - offset) / half_range;
    }
    return (raw.array() - offset) / half_range;
}

Eigen::MatrixXd TargetScale::to_raw(const Eigen::MatrixXd &unit) const {
    return (unit.array() * half_range + offset).matrix();
}

int FieldDataset::channels() const {
    return fields.empty() ? 0 : static_cast<int>(fields.front().values.rows());
}

void FieldDataset::validate() const {
    if (fields.empty()) {
        throw DataError("dataset has no fields");
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const FieldSamples &f = fields[i];
        const std::string which = "field " + std::to_string(i);
        if (f.size() == 0) {
            throw DataError(which + " has no samples");
        }
        if (f.coords.rows() != coord_dim() || f.values.cols() != f.size() || f.values.rows() != channels()) {
            throw DataError(which + " has inconsistent sample shapes");
        }
        if (!f.coords.allFinite() || !f.values.allFinite()) {
            throw DataError(which + " contains non-finite values");
        }
        if (f.coords.cwiseAbs().maxCoeff() > 1.0) {
            throw DataError(which + " has coordinates outside [-1, 1]");
        }
    }
    if (!(scale.half_range > 0.0)) {
        throw DataError("target scale must have a positive range");
    }
}

// ---------------------------------------------------------------- images

Image::Image(int h, int w, int c)
    : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, 0.0) {
    if (h < 1 || w < 1 || (c != 1 && c != 3)) {
        throw DataError("images need positive size and 1 or 3 channels");
    }
}

namespace {

/// Next header token of a PNM file, skipping whitespace and comments.
std::string pnm_token(std::istream &in, const std::filesystem::path &path) {
    std::string token;
    while (in) {
        const int ch = in.get();
        if (ch == '#') {
            std::string ignored;
            std::getline(in, ignored);
        } else if (std::isspace(ch)) {
            if (!token.empty()) {
                return token;
            }
        } else if (ch != EOF) {
            token.push_back(static_cast<char>(ch));
        }
    }
    if (token.empty()) {
        throw DataError(path.string() + ": truncated header");
    }
    return token;
}

int pnm_int(std::istream &in, const std::filesystem::path &path) {
    const std::string t = pnm_token(in, path);
    try {
        std::size_t used = 0;
        const int v = std::stoi(t, &used);
        if (used == t.size() && v > 0) {
            return v;
        }
    } catch (const std::exception &) {
    }
    throw DataError(path.string() + ": bad header field '" + t + "'");
}

} // namespace

Image read_pnm(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open image " + path.string());
    }
    const std::string magic = pnm_token(in, path);
    if (magic != "P6" && magic != "P5") {
        throw DataError(path.string() + ": only binary PPM (P6) and PGM (P5) are supported");
    }
    const int width = pnm_int(in, path);
    const int height = pnm_int(in, path);
    const int maxval = pnm_int(in, path);
    if (maxval > 255) {
        throw DataError(path.string() + ": only 8-bit images are supported");
    }
    Image image(height, width, magic == "P6" ? 3 : 1);
    std::vector<unsigned char> bytes(image.pixels.size());
    in.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw DataError(path.string() + ": truncated pixel data");
    }
    std::transform(bytes.begin(), bytes.end(), image.pixels.begin(),
                   [maxval](unsigned char b) { return static_cast<double>(b) / maxval; });
    return image;
}

void write_pnm(const Image &image, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write image " + path.string());
    }
    out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
    std::vector<unsigned char> bytes(image.pixels.size());
    std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(), [](double v) {
        return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    });
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Eigen::MatrixXd image_grid(int height, int width) {
    Eigen::MatrixXd coords(2, static_cast<Eigen::Index>(height) * width);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const Eigen::Index col = static_cast<Eigen::Index>(r) * width + c;
            coords(0, col) = (2.0 * c + 1.0) / width - 1.0;
            coords(1, col) = (2.0 * r + 1.0) / height - 1.0;
        }
    }
    return coords;
}

FieldSamples image_to_samples(const Image &image) {
    FieldSamples s;
    s.coords = image_grid(image.height, image.width);
    s.values = Eigen::Map<const Eigen::MatrixXd>(image.pixels.data(), image.channels,
                                                 static_cast<Eigen::Index>(image.height) * image.width);
    return s;
}

Image samples_to_image(const Eigen::MatrixXd &values, int height, int width) {
    if (values.cols() != static_cast<Eigen::Index>(height) * width) {
        throw ConfigError("value count does not match the image size");
    }
    Image image(height, width, static_cast<int>(values.rows()));
    Eigen::Map<Eigen::MatrixXd>(image.pixels.data(), values.rows(), values.cols()) = values;
    return image;
}

FieldDataset image_dataset(const std::vector<Image> &images, std::vector<std::string> names) {
    if (images.empty()) {
        throw DataError("no images given");
    }
    FieldDataset ds;
    ds.kind = FieldKind::Image2D;
    ds.scale = TargetScale::unit_interval();
    ds.image_height = images.front().height;
    ds.image_width = images.front().width;
    for (const Image &img : images) {
        if (img.height != ds.image_height || img.width != ds.image_width || img.channels != images.front().channels) {
            throw DataError("all images of a collection must share size and channel count");
        }
        ds.fields.push_back(image_to_samples(img));
    }
    names.resize(images.size());
    ds.names = std::move(names);
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------- signed distances

namespace {

struct DistanceVisitor {
    Eigen::Vector3d p;

    double operator()(const Sphere &s) const { return (p - s.center).norm() - s.radius; }
    double operator()(const Box &b) const {
        const Eigen::Vector3d q = (p - b.center).cwiseAbs() - b.half_extents;
        return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    double operator()(const Torus &t) const {
        const Eigen::Vector3d d = p - t.center;
        const double ring = std::hypot(d.x(), d.z()) - t.major_radius;
        return std::hypot(ring, d.y()) - t.minor_radius;
    }
};

struct SurfaceVisitor {
    std::mt19937_64 &rng;

    double uniform(double lo, double hi) const { return std::uniform_real_distribution<double>(lo, hi)(rng); }

    Eigen::Vector3d operator()(const Sphere &s) const {
        std::normal_distribution<double> nd;
        Eigen::Vector3d v;
        do {
            v = Eigen::Vector3d(nd(rng), nd(rng), nd(rng));
        } while (v.norm() < 1e-12);
        return s.center + s.radius * v.normalized();
    }
    Eigen::Vector3d operator()(const Box &b) const {
        const Eigen::Vector3d &h = b.half_extents;
        const Eigen::Vector3d area(h.y() * h.z(), h.x() * h.z(), h.x() * h.y());
        std::discrete_distribution<int> face_axis({area.x(), area.y(), area.z()});
        const int axis = face_axis(rng);
        Eigen::Vector3d p;
        for (int a = 0; a < 3; ++a) {
            p[a] = uniform(-h[a], h[a]);
        }
        p[axis] = uniform(0.0, 1.0) < 0.5 ? -h[axis] : h[axis];
        return b.center + p;
    }
    Eigen::Vector3d operator()(const Torus &t) const {
        const double big = t.major_radius;
        const double small = t.minor_radius;
        const double u = uniform(0.0, 2.0 * std::numbers::pi);
        double v = 0.0;
        // area element is proportional to (R + r cos v)
        do {
            v = uniform(0.0, 2.0 * std::numbers::pi);
        } while (uniform(0.0, big + small) > big + small * std::cos(v));
        const double ring = big + small * std::cos(v);
        return t.center + Eigen::Vector3d(ring * std::cos(u), small * std::sin(v), ring * std::sin(u));
    }
};

} // namespace

double signed_distance(const Primitive &shape, const Eigen::Vector3d &p) {
    return std::visit(DistanceVisitor{p}, shape);
}

std::string primitive_name(const Primitive &shape) {
    static constexpr const char *names[] = {"sphere", "box", "torus"};
    return names[shape.index()];
}

Primitive parse_primitive(const std::string &name) {
    if (name == "sphere") {
        return Sphere{};
    }
    if (name == "box") {
        return Box{};
    }
    if (name == "torus") {
        return Torus{};
    }
    throw ConfigError("unknown primitive '" + name + "' (expected sphere, box or torus)");
}

Eigen::Vector3d surface_point(const Primitive &shape, std::mt19937_64 &rng) {
    return std::visit(SurfaceVisitor{rng}, shape);
}

FieldSamples sample_sdf(const Primitive &shape, Eigen::Index count, double near_fraction, std::uint64_t seed) {
    if (count < 1) {
        throw ConfigError("sample count must be >= 1");
    }
    if (!(near_fraction >= 0.0 && near_fraction <= 1.0)) {
        throw ConfigError("near_surface_fraction must lie in [0, 1]");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> offset(0.0, kNearSurfaceStd);
    std::uniform_real_distribution<double> cube(-1.0, 1.0);
    const auto near = static_cast<Eigen::Index>(std::llround(near_fraction * static_cast<double>(count)));

    FieldSamples s{Eigen::MatrixXd(3, count), Eigen::MatrixXd(1, count)};
    for (Eigen::Index i = 0; i < count; ++i) {
        Eigen::Vector3d p;
        if (i < near) {
            p = surface_point(shape, rng) + Eigen::Vector3d(offset(rng), offset(rng), offset(rng));
            p = p.cwiseMax(-1.0).cwiseMin(1.0);
        } else {
            p = Eigen::Vector3d(cube(rng), cube(rng), cube(rng));
        }
        s.coords.col(i) = p;
        s.values(0, i) = signed_distance(shape, p);
    }
    return s;
}

FieldSamples read_sdf_samples(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open SDF sample file " + path.string());
    }
    std::vector<double> flat;
    std::string line;
    for (long line_no = 1; std::getline(in, line); ++line_no) {
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        std::istringstream fields(line);
        double rec[4];
        int got = 0;
        std::string token;
        while (fields >> token) {
            const std::string where = path.string() + ":" + std::to_string(line_no);
            if (got == 4) {
                throw DataError(where + ": expected 4 values, found more");
            }
            try {
                std::size_t used = 0;
                rec[got] = std::stod(token, &used);
                if (used != token.size()) {
                    throw std::invalid_argument(token);
                }
            } catch (const std::exception &) {
                throw DataError(where + ": cannot parse '" + token + "' as a number");
            }
            if (!std::isfinite(rec[got])) {
                throw DataError(where + ": non-finite value");
            }
            if (got < 3 && std::abs(rec[got]) > 1.0) {
                throw DataError(where + ": coordinate outside [-1, 1]");
            }
            ++got;
        }
        if (got == 0) {
            continue;
        }
        if (got != 4) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 4 values, found " +
                            std::to_string(got));
        }
        flat.insert(flat.end(), rec, rec + 4);
    }
    if (flat.empty()) {
        throw DataError(path.string() + ": no samples");
    }
    const Eigen::Map<const Eigen::MatrixXd> table(flat.data(), 4, static_cast<Eigen::Index>(flat.size() / 4));
    return {table.topRows(3), table.bottomRows(1)};
}

void write_sdf_samples(const FieldSamples &samples, const std::filesystem::path &path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.precision(17);
    for (Eigen::Index i = 0; i < samples.size(); ++i) {
        out << samples.coords(0, i) << ' ' << samples.coords(1, i) << ' ' << samples.coords(2, i) << ' '
            << samples.values(0, i) << '\n';
    }
}

FieldDataset sdf_dataset(std::vector<FieldSamples> fields, std::vector<std::string> names,
                         std::optional<double> clamp) {
    FieldDataset ds;
    ds.kind = FieldKind::Sdf3D;
    ds.fields = std::move(fields);
    names.resize(ds.fields.size());
    ds.names = std::move(names);
    if (clamp && !(*clamp > 0.0)) {
        throw ConfigError("sdf_clamp must be positive");
    }
    double band = 0.0;
    for (const FieldSamples &f : ds.fields) {
        band = std::max(band, f.values.cwiseAbs().maxCoeff());
    }
    if (clamp) {
        band = *clamp;
    }
    ds.scale = TargetScale{0.0, band, clamp};
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------- metrics

namespace {

void require_same_shape(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0) {
        throw ConfigError("metric inputs must be non-empty and share a shape");
    }
}

} // namespace

double mse(const Eigen::MatrixXd &pred, const Eigen::MatrixXd &ref) {
    require_same_shape(pred, ref);
    return (pred - ref).squaredNorm() / static_cast<double>(pred.size());
}

double psnr_from_mse(double mse_value) {
    if (mse_value == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return -10.0 * std::log10(mse_value);
}

double psnr(const Eigen::MatrixXd &pred, const Eigen::MatrixXd &ref) { return psnr_from_mse(mse(pred, ref)); }

double mae(const Eigen::MatrixXd &pred, const Eigen::MatrixXd &ref) {
    require_same_shape(pred, ref);
    return (pred - ref).cwiseAbs().sum() / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------- masks

void Mask::validate() const {
    if (kind == Kind::RandomSubset && !(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
        throw ConfigError("keep_fraction must lie in (0, 1]");
    }
    if (kind == Kind::HalfSpace && (axis < 0 || axis > 2)) {
        throw ConfigError("mask axis must be 0, 1 or 2");
    }
}

MaskSplit split_by_mask(const FieldSamples &samples, const Mask &mask) {
    mask.validate();
    const Eigen::Index n = samples.size();
    std::vector<bool> keep(static_cast<std::size_t>(n), false);
    if (mask.kind == Mask::Kind::HalfSpace) {
        if (mask.axis >= samples.coords.rows()) {
            throw ConfigError("mask axis exceeds the coordinate dimension");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            keep[static_cast<std::size_t>(i)] = samples.coords(mask.axis, i) < mask.threshold;
        }
    } else {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::mt19937_64 rng(mask.seed);
        std::shuffle(order.begin(), order.end(), rng);
        const auto kept = static_cast<std::size_t>(std::llround(mask.keep_fraction * static_cast<double>(n)));
        for (std::size_t i = 0; i < kept; ++i) {
            keep[static_cast<std::size_t>(order[i])] = true;
        }
    }
    MaskSplit split;
    for (Eigen::Index i = 0; i < n; ++i) {
        (keep[static_cast<std::size_t>(i)] ? split.kept : split.held_out).push_back(i);
    }
    return split;
}

// ---------------------------------------------------------------- surfaces

VoxelGrid::VoxelGrid(std::array<int, 3> res) : resolution(res) {
    if (res[0] < 2 || res[1] < 2 || res[2] < 2) {
        throw ConfigError("voxel grids need at least 2 nodes per axis");
    }
    values.assign(static_cast<std::size_t>(res[0]) * res[1] * res[2], 0.0);
}

double VoxelGrid::cell_diagonal() const {
    double sq = 0.0;
    for (int r : resolution) {
        sq += std::pow(2.0 / (r - 1), 2);
    }
    return std::sqrt(sq);
}

Eigen::MatrixXd voxel_coords(std::array<int, 3> resolution) {
    const VoxelGrid shape(resolution);
    Eigen::MatrixXd coords(3, static_cast<Eigen::Index>(shape.values.size()));
    Eigen::Index col = 0;
    for (int k = 0; k < resolution[2]; ++k) {
        for (int j = 0; j < resolution[1]; ++j) {
            for (int i = 0; i < resolution[0]; ++i, ++col) {
                coords.col(col) << shape.node_coord(0, i), shape.node_coord(1, j), shape.node_coord(2, k);
            }
        }
    }
    return coords;
}

VoxelGrid sample_grid(const Primitive &shape, std::array<int, 3> resolution) {
    VoxelGrid grid(resolution);
    const Eigen::MatrixXd coords = voxel_coords(resolution);
    for (Eigen::Index i = 0; i < coords.cols(); ++i) {
        grid.values[static_cast<std::size_t>(i)] = signed_distance(shape, coords.col(i));
    }
    return grid;
}

namespace {

constexpr std::array<std::array<int, 3>, 8> kCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};
constexpr std::array<std::array<int, 2>, 12> kEdgeCorners = {{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

} // namespace

Mesh marching_cubes(const VoxelGrid &grid, double iso) {
    const auto [nx, ny, nz] = grid.resolution;
    if (grid.values.size() != static_cast<std::size_t>(nx) * ny * nz) {
        throw ConfigError("voxel grid value count does not match its resolution");
    }
    Mesh mesh;
    std::unordered_map<std::int64_t, int> edge_vertex;
    const auto node_id = [&](int i, int j, int k) {
        return static_cast<std::int64_t>(i) + static_cast<std::int64_t>(nx) * (j + static_cast<std::int64_t>(ny) * k);
    };

    for (int k = 0; k + 1 < nz; ++k) {
        for (int j = 0; j + 1 < ny; ++j) {
            for (int i = 0; i + 1 < nx; ++i) {
                std::array<double, 8> v{};
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    v[c] = grid.value(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
                    if (v[c] < iso) {
                        cube |= 1 << c;
                    }
                }
                if (kEdgeTable[cube] == 0) {
                    continue;
                }
                std::array<int, 12> vert{};
                for (int e = 0; e < 12; ++e) {
                    if ((kEdgeTable[cube] & (1 << e)) == 0) {
                        continue;
                    }
                    auto [a, b] = kEdgeCorners[e];
                    // key the edge by its lower node and axis so neighbours share it
                    if (kCorner[b][0] + kCorner[b][1] + kCorner[b][2] < kCorner[a][0] + kCorner[a][1] + kCorner[a][2]) {
                        std::swap(a, b);
                    }
                    const int axis = kCorner[b][0] != kCorner[a][0] ? 0 : (kCorner[b][1] != kCorner[a][1] ? 1 : 2);
                    const std::int64_t key =
                        node_id(i + kCorner[a][0], j + kCorner[a][1], k + kCorner[a][2]) * 3 + axis;
                    const auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<int>(mesh.vertices.size()));
                    if (inserted) {
                        const Eigen::Vector3d pa(grid.node_coord(0, i + kCorner[a][0]),
                                                 grid.node_coord(1, j + kCorner[a][1]),
                                                 grid.node_coord(2, k + kCorner[a][2]));
                        const Eigen::Vector3d pb(grid.node_coord(0, i + kCorner[b][0]),
                                                 grid.node_coord(1, j + kCorner[b][1]),
                                                 grid.node_coord(2, k + kCorner[b][2]));
                        const double t = (iso - v[a]) / (v[b] - v[a]);
                        mesh.vertices.push_back(pa + t * (pb - pa));
                    }
                    vert[e] = it->second;
                }
                const auto &tri = kTriTable[cube];
                for (int t = 0; tri[t] != -1; t += 3) {
                    mesh.faces.push_back({vert[tri[t]], vert[tri[t + 1]], vert[tri[t + 2]]});
                }
            }
        }
    }
    return mesh;
}

void write_obj(const Mesh &mesh, const std::filesystem::path &path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write mesh " + path.string());
    }
    out.precision(9);
    for (const Eigen::Vector3d &v : mesh.vertices) {
        out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    }
    for (const auto &f : mesh.faces) {
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
}

} // namespace qvf
