#include "dinorade/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "dinorade/errors.hpp"

namespace dinorade::geometry {

namespace {

void require_increasing(const std::pair<double, double>& b, const char* what) {
  if (!(b.first < b.second)) throw ConfigError(std::string(what) + " bounds must be strictly increasing");
}

}  // namespace

void CameraModel::validate() const {
  const auto& k = intrinsics;
  if (k(1, 0) != 0.0 || k(2, 0) != 0.0 || k(2, 1) != 0.0)
    throw ConfigError("camera intrinsics must be upper triangular");
  if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0)) throw ConfigError("camera focal lengths must be positive");
  if (std::abs(k(2, 2) - 1.0) > 1e-12) throw ConfigError("camera intrinsics must have K(2,2) = 1");
  const Eigen::Matrix3d r = extrinsics.topLeftCorner<3, 3>();
  if (!(r * r.transpose()).isApprox(Eigen::Matrix3d::Identity(), 1e-6) ||
      std::abs(r.determinant() - 1.0) > 1e-6)
    throw ConfigError("camera extrinsic rotation must be orthonormal with determinant +1");
  if (!extrinsics.row(3).isApprox(Eigen::RowVector4d(0, 0, 0, 1)))
    throw ConfigError("camera extrinsics must be a homogeneous rigid transform");
  if (height_px <= 0 || width_px <= 0) throw ConfigError("camera image size must be positive");
}

nlohmann::json CameraModel::to_json() const {
  std::vector<double> k, e;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) k.push_back(intrinsics(r, c));
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) e.push_back(extrinsics(r, c));
  return {{"intrinsics", k}, {"extrinsics", e}, {"image_size", {height_px, width_px}}};
}

CameraModel CameraModel::from_json(const nlohmann::json& j) {
  CameraModel cam;
  try {
    const auto k = j.at("intrinsics").get<std::vector<double>>();
    const auto e = j.at("extrinsics").get<std::vector<double>>();
    const auto size = j.at("image_size").get<std::vector<int>>();
    if (k.size() != 9 || e.size() != 16 || size.size() != 2)
      throw ConfigError("camera JSON needs 9 intrinsics, 16 extrinsics and [H, W]");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) cam.intrinsics(r, c) = k[static_cast<std::size_t>(r * 3 + c)];
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) cam.extrinsics(r, c) = e[static_cast<std::size_t>(r * 4 + c)];
    cam.height_px = size[0];
    cam.width_px = size[1];
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("invalid camera JSON: ") + ex.what());
  }
  cam.validate();
  return cam;
}

CameraModel CameraModel::forward_looking(int height_px, int width_px, double hfov_rad, double height_m) {
  CameraModel cam;
  const double f = 0.5 * width_px / std::tan(0.5 * hfov_rad);
  cam.intrinsics << f, 0.0, 0.5 * width_px, 0.0, f, 0.5 * height_px, 0.0, 0.0, 1.0;
  // Camera axes: x right (-y ego), y down (-z ego), z forward (+x ego).
  Eigen::Matrix3d r;
  r << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  cam.extrinsics.setIdentity();
  cam.extrinsics.topLeftCorner<3, 3>() = r;
  cam.extrinsics.topRightCorner<3, 1>() = -r * Eigen::Vector3d(0.0, 0.0, height_m);
  cam.height_px = height_px;
  cam.width_px = width_px;
  return cam;
}

void GridSpec::validate() const {
  if (n_range < 1 || n_azimuth < 1 || n_elevation < 1) throw ConfigError("grid counts must be >= 1");
  require_increasing(range_bounds_m, "range");
  require_increasing(azimuth_bounds_rad, "azimuth");
  require_increasing(elevation_bounds_m, "elevation");
}

void RegionOfInterest::validate() const {
  require_increasing(x_bounds_m, "ROI x");
  require_increasing(y_bounds_m, "ROI y");
  require_increasing(z_bounds_m, "ROI z");
}

Eigen::Vector3d polar_to_cartesian(const PolarCoord& p) {
  const double ce = std::cos(p.elevation_rad);
  return {p.range_m * ce * std::cos(p.azimuth_rad), p.range_m * ce * std::sin(p.azimuth_rad),
          p.range_m * std::sin(p.elevation_rad)};
}

PolarCoord cartesian_to_polar(const Eigen::Vector3d& xyz) {
  const double r = xyz.norm();
  if (r == 0.0) throw GeometryError("cartesian_to_polar: degenerate point at the origin");
  const double ground = std::hypot(xyz.x(), xyz.y());
  return {r, ground == 0.0 ? 0.0 : std::atan2(xyz.y(), xyz.x()), std::atan2(xyz.z(), ground)};
}

std::optional<Pixel> project_to_image(const Eigen::Vector3d& point_radar, const CameraModel& cam) {
  const Eigen::Vector3d pc =
      cam.extrinsics.topLeftCorner<3, 3>() * point_radar + cam.extrinsics.topRightCorner<3, 1>();
  if (!(pc.z() > 0.0)) return std::nullopt;
  const Eigen::Vector3d h = cam.intrinsics * (pc / pc.z());
  const Pixel px{h.x(), h.y()};
  if (!(px.u >= 0.0 && px.u < cam.width_px && px.v >= 0.0 && px.v < cam.height_px)) return std::nullopt;
  return px;
}

Eigen::Vector3d point_from_range_azimuth_height(double range_m, double azimuth_rad, double z_m) {
  const double ground = std::sqrt(std::max(range_m * range_m - z_m * z_m, 1e-6));
  return {ground * std::cos(azimuth_rad), ground * std::sin(azimuth_rad), z_m};
}

std::optional<Eigen::Vector3d> query_anchor(const GridSpec& grid, int r, int a, int e) {
  const double range = grid.range_center(r);
  const double z = grid.elevation_center(e);
  if (std::abs(z) >= range) return std::nullopt;
  return point_from_range_azimuth_height(range, grid.azimuth_center(a), z);
}

ReferencePoints reference_points(const GridSpec& grid, const CameraModel& cam) {
  grid.validate();
  cam.validate();
  ReferencePoints rp;
  rp.n_range = grid.n_range;
  rp.n_azimuth = grid.n_azimuth;
  rp.n_elevation = grid.n_elevation;
  const std::size_t n = static_cast<std::size_t>(grid.n_range) * grid.n_azimuth * grid.n_elevation;
  rp.coords.assign(2 * n, 0.0);
  rp.mask.assign(n, 0);
  for (int r = 0; r < grid.n_range; ++r)
    for (int a = 0; a < grid.n_azimuth; ++a)
      for (int e = 0; e < grid.n_elevation; ++e) {
        const auto anchor = query_anchor(grid, r, a, e);
        if (!anchor) continue;
        const auto px = project_to_image(*anchor, cam);
        if (!px) continue;
        const std::size_t i = rp.index(r, a, e);
        rp.coords[2 * i] = px->u / cam.width_px;
        rp.coords[2 * i + 1] = px->v / cam.height_px;
        rp.mask[i] = 1;
      }
  return rp;
}

bool roi_contains(const Box3D& box, const RegionOfInterest& roi) {
  const auto in = [](double v, const std::pair<double, double>& b) { return v >= b.first && v <= b.second; };
  return in(box.center.x(), roi.x_bounds_m) && in(box.center.y(), roi.y_bounds_m) &&
         in(box.center.z(), roi.z_bounds_m);
}

}  // namespace dinorade::geometry
