#pragma once

// Coordinate-frame algebra between the radar polar grid, the ego Cartesian
// frame and camera pixels.
//
// Ego frame: x forward, y left, z up. Azimuth is measured counter-clockwise
// from +x, elevation upward from the x-y plane. Pixel coordinates are
// continuous with (0, 0) at the top-left corner of the first pixel.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "dinorade/box.hpp"

namespace dinorade::geometry {

struct PolarCoord {
  double range_m = 0.0;
  double azimuth_rad = 0.0;
  double elevation_rad = 0.0;
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

struct CameraModel {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d extrinsics = Eigen::Matrix4d::Identity();  // radar frame -> camera frame
  int height_px = 0;
  int width_px = 0;

  /// Throws ConfigError when the intrinsics are not upper triangular with
  /// positive focal lengths or the extrinsic rotation is not proper.
  void validate() const;

  nlohmann::json to_json() const;
  static CameraModel from_json(const nlohmann::json& j);

  /// Camera with square pixels and the given horizontal field of view,
  /// mounted height_m above the radar origin and looking along +x.
  static CameraModel forward_looking(int height_px, int width_px, double hfov_rad, double height_m);
};

struct GridSpec {
  int n_range = 1;
  int n_azimuth = 1;
  int n_elevation = 1;  // E, number of height segments
  std::pair<double, double> range_bounds_m{0.0, 1.0};
  std::pair<double, double> azimuth_bounds_rad{-1.0, 1.0};
  std::pair<double, double> elevation_bounds_m{-2.0, 6.0};  // ego height z

  void validate() const;

  double range_step() const { return (range_bounds_m.second - range_bounds_m.first) / n_range; }
  double azimuth_step() const {
    return (azimuth_bounds_rad.second - azimuth_bounds_rad.first) / n_azimuth;
  }
  double elevation_step() const {
    return (elevation_bounds_m.second - elevation_bounds_m.first) / n_elevation;
  }
  double range_center(int i) const { return range_bounds_m.first + (i + 0.5) * range_step(); }
  double azimuth_center(int j) const { return azimuth_bounds_rad.first + (j + 0.5) * azimuth_step(); }
  double elevation_center(int k) const {
    return elevation_bounds_m.first + (k + 0.5) * elevation_step();
  }
  /// Continuous bin coordinates: bin i's center maps to exactly i.
  double range_to_bin(double r) const { return (r - range_bounds_m.first) / range_step() - 0.5; }
  double azimuth_to_bin(double a) const {
    return (a - azimuth_bounds_rad.first) / azimuth_step() - 0.5;
  }
  double bin_to_range(double u) const { return range_bounds_m.first + (u + 0.5) * range_step(); }
  double bin_to_azimuth(double u) const {
    return azimuth_bounds_rad.first + (u + 0.5) * azimuth_step();
  }
};

struct RegionOfInterest {
  std::pair<double, double> x_bounds_m{0.0, 72.0};
  std::pair<double, double> y_bounds_m{-6.4, 6.4};
  std::pair<double, double> z_bounds_m{-2.0, 6.0};

  void validate() const;
};

Eigen::Vector3d polar_to_cartesian(const PolarCoord& p);

/// Throws GeometryError for the origin.
PolarCoord cartesian_to_polar(const Eigen::Vector3d& xyz);

/// Pinhole projection of a radar-frame point; empty when the point is behind
/// the camera or lands outside the image.
std::optional<Pixel> project_to_image(const Eigen::Vector3d& point_radar, const CameraModel& cam);

/// Projected query anchors, one per (range bin, azimuth bin, height segment).
struct ReferencePoints {
  int n_range = 0;
  int n_azimuth = 0;
  int n_elevation = 0;
  std::vector<double> coords;        // {R, A, E, 2}: (u / W, v / H) in [0, 1]
  std::vector<std::uint8_t> mask;    // {R, A, E}

  std::size_t index(int r, int a, int e) const {
    return (static_cast<std::size_t>(r) * n_azimuth + a) * n_elevation + e;
  }
};

/// Point at slant range r, azimuth az and ego height z. The ground distance is
/// floored at 1e-3 m when |z| >= r.
Eigen::Vector3d point_from_range_azimuth_height(double range_m, double azimuth_rad, double z_m);

/// 3D anchor of a query bin: bin-center slant range and azimuth, height at the
/// segment center. Empty when the segment height is not reachable at that range.
std::optional<Eigen::Vector3d> query_anchor(const GridSpec& grid, int r, int a, int e);

ReferencePoints reference_points(const GridSpec& grid, const CameraModel& cam);

/// Closed-interval test on the box center.
bool roi_contains(const Box3D& box, const RegionOfInterest& roi);

}  // namespace dinorade::geometry
