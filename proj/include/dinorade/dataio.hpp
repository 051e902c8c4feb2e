#pragma once

// Synthetic scene generation and the on-disk frame / manifest formats.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dinorade/box.hpp"
#include "dinorade/geometry.hpp"

namespace dinorade::dataio {

/// Dense float32 array with an explicit shape (row-major, last axis fastest).
struct FloatArray {
  std::vector<int> shape;
  std::vector<float> data;

  int dim(std::size_t axis) const { return shape.at(axis); }
  bool operator==(const FloatArray&) const = default;
};

/// Linear-power radar projections on the raw grid.
struct RadarProjections {
  FloatArray p_rad;  // {n_range_raw, n_azimuth_raw, n_doppler}
  FloatArray p_rae;  // {n_range_raw, n_azimuth_raw, n_elevation_raw}

  /// Throws DataError for negative or non-finite power, or mismatched
  /// range/azimuth dimensions.
  void validate() const;
};

struct Frame {
  RadarProjections projections;
  FloatArray image;  // {H, W, 3}, values in [0, 1]
  geometry::CameraModel camera;
  std::vector<Box3D> boxes;
  /// Pixel at which the generator centered each box's rendered rectangle;
  /// empty for boxes outside the image. Same length as boxes.
  std::vector<std::optional<geometry::Pixel>> rendered_centers;
  std::string condition_tag;
};

enum class OcclusionMode { kNone, kPartial, kHeavy, kFull };

std::string_view occlusion_name(OcclusionMode m);
std::optional<OcclusionMode> parse_occlusion(std::string_view name);
/// Fraction of the image area overwritten with noise.
double occlusion_fraction(OcclusionMode m);

struct OcclusionSpec {
  OcclusionMode mode = OcclusionMode::kNone;
  std::uint64_t rng_seed = 0;
};

/// Per-class dimension prior, radar cross-section and render color.
struct ClassPrior {
  Eigen::Vector3d mean_dims;  // length, width, height in meters
  double rcs;                 // peak linear power of the radar blob
  std::array<float, 3> color;
};

struct SceneConfig {
  int n_range_raw = 64;
  int n_azimuth_raw = 32;
  int n_doppler = 16;
  int n_elevation_raw = 8;
  std::pair<double, double> elevation_angle_bounds_rad{-0.7853981633974483, 0.7853981633974483};
  double velocity_window_mps = 10.0;  // Doppler axis spans [-window, +window]
  double max_speed_mps = 8.0;
  double noise_mean = 1.0;
  double dims_jitter = 0.1;           // relative, uniform
  /// When set, blob shape and power no longer depend on the class, so class
  /// identity is only observable in the camera image.
  bool class_agnostic_radar = false;
  int min_bin_separation = 3;         // Chebyshev distance on the feature grid
  int max_retries = 500;
  double min_blob_px = 6.0;
  geometry::RegionOfInterest roi;
  std::array<ClassPrior, kNumClasses> priors = default_priors();

  static std::array<ClassPrior, kNumClasses> default_priors();
  void validate(const geometry::GridSpec& grid) const;
};

/// Deterministic synthetic frame. `grid` is the feature-level grid whose
/// range/azimuth extent the raw radar grid shares. Throws DataError naming
/// the seed when objects cannot be placed within the retry budget.
Frame generate_scene(std::uint64_t rng_seed, int n_objects, const geometry::GridSpec& grid,
                     const geometry::CameraModel& cam, const OcclusionSpec& occlusion,
                     const SceneConfig& cfg = {});

void write_frame(const Frame& frame, const std::filesystem::path& path);
/// Throws FormatError (malformed header, dimension, truncation) or DataError.
Frame read_frame(const std::filesystem::path& path);

struct ManifestEntry {
  std::filesystem::path path;  // resolved against the dataset directory
  std::string condition_tag;
};

inline constexpr const char* kManifestName = "manifest.json";

/// Reads `<directory>/manifest.json`; throws DataError when the manifest is
/// missing or references a file that does not exist.
std::vector<ManifestEntry> dataset_manifest(const std::filesystem::path& directory);
/// Entries are written relative to the directory when possible.
void write_manifest(const std::filesystem::path& directory, const std::vector<ManifestEntry>& entries);

}  // namespace dinorade::dataio
