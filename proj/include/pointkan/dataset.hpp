#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pointkan/training.hpp"

namespace pointkan {

/// Parses one point per line, three whitespace-separated reals. Blank lines
/// and `#` comments are ignored. Malformed lines raise a parse error naming
/// the line number.
PointCloud load_points_file(const std::filesystem::path& path);

/// Writes `x y z` lines at 17 significant digits (write-to-temp-then-rename).
void save_points_file(const std::filesystem::path& path, const PointCloud& cloud);

struct ManifestEntry {
  std::string path;  // relative to the manifest location
  int label = -1;
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
};

/// Text manifest: first line `classes: name0,name1,...`, then one
/// `relative/path.xyz <label>` per line.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Loads every entry of a manifest into memory, labels attached.
Dataset load_dataset(const std::filesystem::path& manifest_path);

struct SynthOptions {
  std::vector<std::string> shapes = {"sphere", "cube", "cylinder"};
  std::size_t per_class = 100;
  std::size_t points = 1024;
  double noise = 0.0;  // isotropic Gaussian jitter sigma
  std::uint64_t seed = 0;
};

/// Uniform surface sampling of the named shapes with jitter and a random
/// rotation about the vertical axis, centroid-normalized, written as point
/// files plus a manifest. Deterministic under the seed.
DatasetManifest synth_dataset(const std::filesystem::path& out_dir, const SynthOptions& opts);

}  // namespace pointkan
