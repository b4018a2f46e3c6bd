#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "qvf/errors.hpp"

namespace qvf {

enum class FieldKind { Image2D, Sdf3D };

std::string to_string(FieldKind kind);

/// Samples of one field: coordinates in [-1, 1]^d (one per column) and their values (one per column).
struct FieldSamples {
    Eigen::MatrixXd coords;
    Eigen::MatrixXd values;

    [[nodiscard]] Eigen::Index size() const { return coords.cols(); }
    /// Columns `index` in order.
    [[nodiscard]] FieldSamples subset(const std::vector<Eigen::Index> &index) const;
};

/// Affine map between raw signal units and the [-1, 1] expectation range.
struct TargetScale {
    double offset = 0.0;
    double half_range = 1.0;
    /// Raw values are clamped to [-clamp, clamp] before mapping when set.
    std::optional<double> clamp;

    /// [0, 1] pixels.
    static TargetScale unit_interval() { return {0.5, 0.5, std::nullopt}; }

    [[nodiscard]] Eigen::MatrixXd to_unit(const Eigen::MatrixXd &raw) const;
    [[nodiscard]] Eigen::MatrixXd to_raw(const Eigen::MatrixXd &unit) const;
};

struct FieldDataset {
    FieldKind kind = FieldKind::Image2D;
    std::vector<FieldSamples> fields;
    TargetScale scale;
    std::vector<std::string> names;
    /// Image geometry, when every field is an image.
    int image_height = 0;
    int image_width = 0;

    [[nodiscard]] int coord_dim() const { return kind == FieldKind::Image2D ? 2 : 3; }
    [[nodiscard]] int channels() const;
    void validate() const;
};

// ---------------------------------------------------------------- images

/// H x W x C image, values in [0, 1], row-major with interleaved channels.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<double> pixels;

    Image() = default;
    Image(int h, int w, int c);

    double &at(int row, int col, int ch) { return pixels[index(row, col, ch)]; }
    [[nodiscard]] double at(int row, int col, int ch) const { return pixels[index(row, col, ch)]; }

  private:
    [[nodiscard]] std::size_t index(int row, int col, int ch) const {
        return (static_cast<std::size_t>(row) * width + col) * channels + ch;
    }
};

/// Binary PPM (P6, maxval 255) or PGM (P5) reader. Throws DataError.
Image read_pnm(const std::filesystem::path &path);
/// Writes P6 (3 channels) or P5 (1 channel); values are rounded to 8 bits.
void write_pnm(const Image &image, const std::filesystem::path &path);

/// Pixel-center coordinates of an H x W grid: x follows the column, y the row, both in (-1, 1).
Eigen::MatrixXd image_grid(int height, int width);

/// One sample per pixel in row-major order; channel values stay in [0, 1].
FieldSamples image_to_samples(const Image &image);
/// Inverse of image_to_samples for values laid out on image_grid(height, width).
Image samples_to_image(const Eigen::MatrixXd &values, int height, int width);

FieldDataset image_dataset(const std::vector<Image> &images, std::vector<std::string> names = {});

// ---------------------------------------------------------------- signed distances

struct Sphere {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double radius = 0.5;
};

struct Box {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d half_extents = Eigen::Vector3d::Constant(0.5);
};

/// Ring around the y axis through `center`.
struct Torus {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double major_radius = 0.5;
    double minor_radius = 0.2;
};

using Primitive = std::variant<Sphere, Box, Torus>;

double signed_distance(const Primitive &shape, const Eigen::Vector3d &p);
std::string primitive_name(const Primitive &shape);
/// Parses "sphere", "box" or "torus" into the default-sized primitive.
Primitive parse_primitive(const std::string &name);

/// Uniform point on the primitive's surface.
Eigen::Vector3d surface_point(const Primitive &shape, std::mt19937_64 &rng);

inline constexpr double kNearSurfaceStd = 0.05;

/**
 * `count` samples: round(near_fraction * count) surface points with isotropic
 * N(0, 0.05^2) offsets, the rest uniform in [-1, 1]^3. Coordinates are
 * clipped to the cube; values are exact distances.
 */
FieldSamples sample_sdf(const Primitive &shape, Eigen::Index count, double near_fraction, std::uint64_t seed);

/// "x y z d" records, '#' comments and blank lines allowed. Throws DataError naming the line.
FieldSamples read_sdf_samples(const std::filesystem::path &path);
void write_sdf_samples(const FieldSamples &samples, const std::filesystem::path &path);

/// Targets are mapped by 1 / b with b the largest |d| over all fields (or the clamp band).
FieldDataset sdf_dataset(std::vector<FieldSamples> fields, std::vector<std::string> names = {},
                         std::optional<double> clamp = std::nullopt);

// ---------------------------------------------------------------- metrics

double mse(const Eigen::MatrixXd &pred, const Eigen::MatrixXd &ref);
/// 10 log10(1 / MSE); +infinity when MSE is zero.
double psnr_from_mse(double mse_value);
double psnr(const Eigen::MatrixXd &pred, const Eigen::MatrixXd &ref);
double mae(const Eigen::MatrixXd &pred, const Eigen::MatrixXd &ref);

// ---------------------------------------------------------------- masks

struct Mask {
    enum class Kind { HalfSpace, RandomSubset };
    Kind kind = Kind::RandomSubset;
    /// Half-space: keep samples whose coordinate `axis` is below `threshold`.
    int axis = 0;
    double threshold = 0.0;
    /// Random subset: keep round(keep_fraction * N) samples chosen by `seed`.
    double keep_fraction = 0.5;
    std::uint64_t seed = 0;

    static Mask half_space(int axis, double threshold) { return {Kind::HalfSpace, axis, threshold, 1.0, 0}; }
    static Mask random(double keep_fraction, std::uint64_t seed) {
        return {Kind::RandomSubset, 0, 0.0, keep_fraction, seed};
    }
    void validate() const;
};

struct MaskSplit {
    std::vector<Eigen::Index> kept;
    std::vector<Eigen::Index> held_out;
};

/// Partition of sample indices; both lists ascending.
MaskSplit split_by_mask(const FieldSamples &samples, const Mask &mask);

// ---------------------------------------------------------------- surfaces

/// Node values over [-1, 1]^3, x fastest: value(i, j, k) = values[i + nx (j + ny k)].
struct VoxelGrid {
    std::array<int, 3> resolution{2, 2, 2};
    std::vector<double> values;

    VoxelGrid() = default;
    explicit VoxelGrid(std::array<int, 3> res);

    [[nodiscard]] double node_coord(int axis, int i) const {
        return -1.0 + 2.0 * i / (resolution[static_cast<std::size_t>(axis)] - 1);
    }
    [[nodiscard]] double value(int i, int j, int k) const {
        return values[static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(resolution[0]) *
                          (static_cast<std::size_t>(j) + static_cast<std::size_t>(resolution[1]) * k)];
    }
    /// Length of one cell's diagonal.
    [[nodiscard]] double cell_diagonal() const;
};

/// Node coordinates in storage order, one per column.
Eigen::MatrixXd voxel_coords(std::array<int, 3> resolution);
VoxelGrid sample_grid(const Primitive &shape, std::array<int, 3> resolution);

struct Mesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> faces;

    [[nodiscard]] bool empty() const { return faces.empty(); }
};

/// Triangulates {value == iso}; vertices are shared between neighbouring cells.
Mesh marching_cubes(const VoxelGrid &grid, double iso = 0.0);
void write_obj(const Mesh &mesh, const std::filesystem::path &path);

} // namespace qvf
