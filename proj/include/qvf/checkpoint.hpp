#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "qvf/fields.hpp"
#include "qvf/model.hpp"

namespace qvf {

/// Everything a trained run leaves behind.
struct Checkpoint {
    QvfModel model;
    LatentTable latents;
    FieldKind kind = FieldKind::Image2D;
    std::vector<std::string> names;
    int image_height = 0;
    int image_width = 0;
    TargetScale scale;
    std::vector<EpochMetrics> history;
};

/**
 * Layout: the bytes "QVFCKPT1\n", the header length as a little-endian
 * uint64, a JSON header with sorted keys, then little-endian float64 blobs
 * (encoder weights, circuit angles, latent codes column-major) at the offsets
 * the header lists. Identical checkpoints serialize to identical bytes.
 */
void save_checkpoint(const std::filesystem::path &path, const Checkpoint &checkpoint);
std::string serialize_checkpoint(const Checkpoint &checkpoint);

/// Throws DataError on a truncated, mislabeled or inconsistent file.
Checkpoint load_checkpoint(const std::filesystem::path &path);
Checkpoint deserialize_checkpoint(const std::string &bytes);

/// One JSON object per line: {"epoch", "loss", "psnr" or "mae", "lr"}.
std::string metric_record(const EpochMetrics &metrics, FieldKind kind);
void write_metric_log(std::ostream &out, const std::vector<EpochMetrics> &history, FieldKind kind);

} // namespace qvf
