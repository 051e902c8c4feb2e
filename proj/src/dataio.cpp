#include "dinorade/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "dinorade/container.hpp"
#include "dinorade/errors.hpp"

namespace dinorade::dataio {

using geometry::CameraModel;
using geometry::GridSpec;

std::string_view occlusion_name(OcclusionMode m) {
  switch (m) {
    case OcclusionMode::kNone: return "none";
    case OcclusionMode::kPartial: return "partial";
    case OcclusionMode::kHeavy: return "heavy";
    case OcclusionMode::kFull: return "full";
  }
  return "none";
}

std::optional<OcclusionMode> parse_occlusion(std::string_view name) {
  for (auto m : {OcclusionMode::kNone, OcclusionMode::kPartial, OcclusionMode::kHeavy, OcclusionMode::kFull})
    if (occlusion_name(m) == name) return m;
  return std::nullopt;
}

double occlusion_fraction(OcclusionMode m) {
  switch (m) {
    case OcclusionMode::kNone: return 0.0;
    case OcclusionMode::kPartial: return 0.25;
    case OcclusionMode::kHeavy: return 0.75;
    case OcclusionMode::kFull: return 1.0;
  }
  return 0.0;
}

void RadarProjections::validate() const {
  if (p_rad.shape.size() != 3 || p_rae.shape.size() != 3)
    throw DataError("radar projections must be 3D tensors");
  if (p_rad.shape[0] != p_rae.shape[0] || p_rad.shape[1] != p_rae.shape[1])
    throw DataError("RAD and RAE projections disagree on range/azimuth dimensions");
  for (const FloatArray* t : {&p_rad, &p_rae})
    for (float v : t->data)
      if (!(v >= 0.0f) || !std::isfinite(v)) throw DataError("radar power must be finite and non-negative");
}

std::array<ClassPrior, kNumClasses> SceneConfig::default_priors() {
  return {{
      {{4.5, 1.85, 1.5}, 40.0, {0.90f, 0.10f, 0.10f}},   // Sedan
      {{10.0, 2.6, 3.2}, 80.0, {0.10f, 0.25f, 0.90f}},   // Bus or Truck
      {{0.7, 0.7, 1.75}, 15.0, {0.10f, 0.85f, 0.10f}},   // Pedestrian
      {{2.1, 0.8, 1.5}, 22.0, {0.95f, 0.85f, 0.10f}},    // Motorcycle
      {{1.8, 0.6, 1.6}, 18.0, {0.85f, 0.10f, 0.85f}},    // Bicycle
  }};
}

void SceneConfig::validate(const GridSpec& grid) const {
  grid.validate();
  roi.validate();
  if (n_range_raw < 1 || n_azimuth_raw < 1 || n_doppler < 1 || n_elevation_raw < 1)
    throw ConfigError("raw radar dimensions must be >= 1");
  if (!(elevation_angle_bounds_rad.first < elevation_angle_bounds_rad.second))
    throw ConfigError("elevation angle bounds must be strictly increasing");
  if (!(velocity_window_mps > 0.0) || max_retries < 1) throw ConfigError("invalid scene parameters");
}

namespace {

struct Placed {
  Box3D box;
  geometry::PolarCoord polar;
  int bin_r, bin_a;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double diag(const Box3D& b) { return std::hypot(b.length(), b.width()); }

void add_noise_floor(FloatArray& t, std::mt19937_64& rng, double mean) {
  std::exponential_distribution<double> expo(1.0 / mean);
  for (float& v : t.data) v = static_cast<float>(expo(rng) + 1e-3);
}

// Gaussian blob added to a {R, A, K} tensor: full 2x2 covariance `cov` over
// the (range, azimuth) bins, separable along the third axis.
void add_blob(FloatArray& t, double amp, double ur, double ua, double uk, const Eigen::Matrix2d& cov, double sk) {
  const int nr = t.shape[0], na = t.shape[1], nk = t.shape[2];
  const Eigen::Matrix2d info = cov.inverse();
  std::vector<double> gk(static_cast<std::size_t>(nk));
  for (int k = 0; k < nk; ++k) gk[k] = std::exp(-0.5 * (k - uk) * (k - uk) / (sk * sk));
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < na; ++j) {
      const Eigen::Vector2d d(i - ur, j - ua);
      const double w = amp * std::exp(-0.5 * d.dot(info * d));
      if (w < 1e-9) continue;
      float* row = t.data.data() + (static_cast<std::size_t>(i) * na + j) * nk;
      for (int k = 0; k < nk; ++k) row[k] += static_cast<float>(w * gk[k]);
    }
}

void fill_rect(FloatArray& img, double u0, double v0, double u1, double v1, const std::array<float, 3>& rgb,
               std::mt19937_64* noise_rng) {
  const int h = img.shape[0], w = img.shape[1];
  // Pixels whose centers fall inside [u0, u1] x [v0, v1].
  const int x0 = std::max(0, static_cast<int>(std::ceil(u0 - 0.5)));
  const int x1 = std::min(w - 1, static_cast<int>(std::floor(u1 - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(v0 - 0.5)));
  const int y1 = std::min(h - 1, static_cast<int>(std::floor(v1 - 0.5)));
  std::uniform_real_distribution<float> jitter(-0.04f, 0.04f);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = rgb[static_cast<std::size_t>(c)];
        if (noise_rng) v = std::clamp(v + jitter(*noise_rng), 0.0f, 1.0f);
        img.data[(static_cast<std::size_t>(y) * w + x) * 3 + c] = v;
      }
}

void render_background(FloatArray& img, const CameraModel& cam, std::mt19937_64& rng) {
  const int h = img.shape[0], w = img.shape[1];
  double horizon = 0.5 * h;
  if (auto px = geometry::project_to_image({1e4, 0.0, 0.0}, cam)) horizon = px->v;
  std::uniform_real_distribution<float> jitter(-0.03f, 0.03f);
  for (int y = 0; y < h; ++y) {
    const bool sky = y + 0.5 < horizon;
    const std::array<float, 3> base = sky ? std::array<float, 3>{0.55f, 0.62f, 0.72f}
                                          : std::array<float, 3>{0.36f, 0.36f, 0.38f};
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.data[(static_cast<std::size_t>(y) * w + x) * 3 + c] = base[static_cast<std::size_t>(c)] + jitter(rng);
  }
}

void apply_occlusion(FloatArray& img, const OcclusionSpec& occ) {
  const double frac = occlusion_fraction(occ.mode);
  if (frac <= 0.0) return;
  std::mt19937_64 rng(occ.rng_seed);
  const int h = img.shape[0], w = img.shape[1];
  int rw = w, rh = h, x0 = 0, y0 = 0;
  if (frac < 1.0) {
    const double width_frac = uniform(rng, std::sqrt(frac), 1.0);
    rw = std::clamp(static_cast<int>(std::lround(width_frac * w)), 1, w);
    rh = std::clamp(static_cast<int>(std::lround(frac * w * h / rw)), 1, h);
    x0 = std::uniform_int_distribution<int>(0, w - rw)(rng);
    y0 = std::uniform_int_distribution<int>(0, h - rh)(rng);
  }
  std::uniform_real_distribution<float> noise(0.0f, 1.0f);
  for (int y = y0; y < y0 + rh; ++y)
    for (int x = x0; x < x0 + rw; ++x)
      for (int c = 0; c < 3; ++c) img.data[(static_cast<std::size_t>(y) * w + x) * 3 + c] = noise(rng);
}

}  // namespace

Frame generate_scene(std::uint64_t rng_seed, int n_objects, const GridSpec& grid, const CameraModel& cam,
                     const OcclusionSpec& occlusion, const SceneConfig& cfg) {
  cfg.validate(grid);
  cam.validate();
  if (n_objects < 0) throw ConfigError("n_objects must be >= 0");
  std::mt19937_64 rng(rng_seed);

  const auto& roi = cfg.roi;
  const auto& el_bounds = cfg.elevation_angle_bounds_rad;
  std::vector<Placed> placed;
  for (int obj = 0; obj < n_objects; ++obj) {
    bool ok = false;
    for (int attempt = 0; attempt < cfg.max_retries && !ok; ++attempt) {
      Placed p;
      p.box.cls = kAllClasses[std::uniform_int_distribution<int>(0, kNumClasses - 1)(rng)];
      const ClassPrior& prior = cfg.priors[static_cast<std::size_t>(class_index(p.box.cls))];
      for (int k = 0; k < 3; ++k)
        p.box.dims[k] = prior.mean_dims[k] * (1.0 + uniform(rng, -cfg.dims_jitter, cfg.dims_jitter));
      p.box.center = {uniform(rng, roi.x_bounds_m.first, roi.x_bounds_m.second),
                      uniform(rng, roi.y_bounds_m.first, roi.y_bounds_m.second),
                      uniform(rng, roi.z_bounds_m.first, roi.z_bounds_m.second)};
      p.box.yaw = normalize_angle(uniform(rng, -std::numbers::pi, std::numbers::pi));
      p.box.score = 1.0;
      if (p.box.center.norm() == 0.0) continue;
      p.polar = geometry::cartesian_to_polar(p.box.center);
      if (p.polar.range_m < grid.range_bounds_m.first || p.polar.range_m >= grid.range_bounds_m.second) continue;
      if (p.polar.azimuth_rad < grid.azimuth_bounds_rad.first ||
          p.polar.azimuth_rad >= grid.azimuth_bounds_rad.second)
        continue;
      if (p.polar.elevation_rad < el_bounds.first || p.polar.elevation_rad >= el_bounds.second) continue;
      p.bin_r = static_cast<int>(std::lround(grid.range_to_bin(p.polar.range_m)));
      p.bin_a = static_cast<int>(std::lround(grid.azimuth_to_bin(p.polar.azimuth_rad)));
      if (p.bin_r < 0 || p.bin_r >= grid.n_range || p.bin_a < 0 || p.bin_a >= grid.n_azimuth) continue;
      bool clash = false;
      for (const Placed& q : placed) {
        const int cheb = std::max(std::abs(q.bin_r - p.bin_r), std::abs(q.bin_a - p.bin_a));
        const double dist = (q.box.center.head<2>() - p.box.center.head<2>()).norm();
        if (cheb < cfg.min_bin_separation || dist < 0.5 * (diag(q.box) + diag(p.box))) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      placed.push_back(p);
      ok = true;
    }
    if (!ok)
      throw DataError("scene generation failed for seed " + std::to_string(rng_seed) + ": could not place object " +
                      std::to_string(obj) + " after " + std::to_string(cfg.max_retries) + " retries");
  }

  Frame f;
  f.camera = cam;
  auto& rad = f.projections.p_rad;
  auto& rae = f.projections.p_rae;
  rad.shape = {cfg.n_range_raw, cfg.n_azimuth_raw, cfg.n_doppler};
  rae.shape = {cfg.n_range_raw, cfg.n_azimuth_raw, cfg.n_elevation_raw};
  rad.data.resize(static_cast<std::size_t>(cfg.n_range_raw) * cfg.n_azimuth_raw * cfg.n_doppler);
  rae.data.resize(static_cast<std::size_t>(cfg.n_range_raw) * cfg.n_azimuth_raw * cfg.n_elevation_raw);
  add_noise_floor(rad, rng, cfg.noise_mean);
  add_noise_floor(rae, rng, cfg.noise_mean);

  const double dr = (grid.range_bounds_m.second - grid.range_bounds_m.first) / cfg.n_range_raw;
  const double da = (grid.azimuth_bounds_rad.second - grid.azimuth_bounds_rad.first) / cfg.n_azimuth_raw;
  const double de = (el_bounds.second - el_bounds.first) / cfg.n_elevation_raw;
  for (const Placed& p : placed) {
    const ClassPrior& prior = cfg.priors[static_cast<std::size_t>(class_index(p.box.cls))];
    const double ur = (p.polar.range_m - grid.range_bounds_m.first) / dr - 0.5;
    const double ua = (p.polar.azimuth_rad - grid.azimuth_bounds_rad.first) / da - 0.5;
    const double ue = (p.polar.elevation_rad - el_bounds.first) / de - 0.5;
    const double speed = uniform(rng, -cfg.max_speed_mps, cfg.max_speed_mps);
    const double ud = (speed + cfg.velocity_window_mps) / (2.0 * cfg.velocity_window_mps) * cfg.n_doppler - 0.5;
    double amp;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Identity() * (0.6 * 0.6);
    if (cfg.class_agnostic_radar) {
      amp = 40.0 * uniform(rng, 0.8, 1.2);
      cov = Eigen::Matrix2d::Identity() * (0.8 * 0.8);
    } else {
      amp = prior.rcs * uniform(rng, 0.8, 1.2);
      // Footprint spread (0.3 l along the heading, 0.3 w across) rotated into
      // the local radial/tangential frame, scaled to bins and blurred by the
      // 0.6-bin point spread. The off-diagonal term carries the heading; only
      // p_rad keeps it, p_rae gets the axis-aligned marginals so its peak sits
      // on the object's own bin.
      const double rel = p.box.yaw - p.polar.azimuth_rad;
      const double ground = std::hypot(p.box.center.x(), p.box.center.y());
      Eigen::Matrix2d rot;
      rot << std::cos(rel), -std::sin(rel), std::sin(rel), std::cos(rel);
      const Eigen::Vector2d spread(0.3 * p.box.length(), 0.3 * p.box.width());
      const Eigen::Matrix2d metric = rot * spread.cwiseAbs2().asDiagonal() * rot.transpose();
      const Eigen::Vector2d to_bins(1.0 / dr, 1.0 / (ground * da));
      cov += to_bins.asDiagonal() * metric * to_bins.asDiagonal();
    }
    add_blob(rad, amp, ur, ua, ud, cov, 0.8);
    add_blob(rae, amp, ur, ua, ue, Eigen::Matrix2d(cov.diagonal().asDiagonal()), 0.7);
  }

  auto& img = f.image;
  img.shape = {cam.height_px, cam.width_px, 3};
  img.data.assign(static_cast<std::size_t>(cam.height_px) * cam.width_px * 3, 0.0f);
  render_background(img, cam, rng);

  // Painter's order: farthest first.
  std::vector<std::size_t> order(placed.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return placed[a].polar.range_m > placed[b].polar.range_m;
  });
  f.rendered_centers.assign(placed.size(), std::nullopt);
  const double fx = cam.intrinsics(0, 0), fy = cam.intrinsics(1, 1);
  for (std::size_t idx : order) {
    const Placed& p = placed[idx];
    const auto px = geometry::project_to_image(p.box.center, cam);
    if (!px) continue;
    const Eigen::Vector3d pc =
        cam.extrinsics.topLeftCorner<3, 3>() * p.box.center + cam.extrinsics.topRightCorner<3, 1>();
    const double depth = pc.z();
    const double rel = p.box.yaw - p.polar.azimuth_rad;
    const double lateral = std::abs(p.box.length() * std::sin(rel)) + std::abs(p.box.width() * std::cos(rel));
    const double half_w = std::max(0.5 * cfg.min_blob_px, 0.5 * fx * lateral / depth);
    const double half_h = std::max(0.5 * cfg.min_blob_px, 0.5 * fy * p.box.height() / depth);
    fill_rect(img, px->u - half_w, px->v - half_h, px->u + half_w, px->v + half_h,
              cfg.priors[static_cast<std::size_t>(class_index(p.box.cls))].color, &rng);
    f.rendered_centers[idx] = *px;
  }
  apply_occlusion(img, occlusion);

  for (const Placed& p : placed) f.boxes.push_back(p.box);
  return f;
}

namespace {

nlohmann::json box_to_json(const Box3D& b) {
  return {{"class", std::string(class_id(b.cls))},
          {"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"dims", {b.dims.x(), b.dims.y(), b.dims.z()}},
          {"yaw", b.yaw},
          {"score", b.score}};
}

Box3D box_from_json(const nlohmann::json& j) {
  Box3D b;
  const auto cls = parse_class(j.at("class").get<std::string>());
  if (!cls) throw FormatError(FormatError::Kind::kMalformedHeader, "unknown class " + j.at("class").dump());
  b.cls = *cls;
  const auto c = j.at("center").get<std::vector<double>>();
  const auto d = j.at("dims").get<std::vector<double>>();
  if (c.size() != 3 || d.size() != 3)
    throw FormatError(FormatError::Kind::kMalformedHeader, "box center/dims need 3 values");
  b.center = {c[0], c[1], c[2]};
  b.dims = {d[0], d[1], d[2]};
  b.yaw = j.at("yaw").get<double>();
  b.score = j.value("score", 1.0);
  return b;
}

}  // namespace

void write_frame(const Frame& frame, const std::filesystem::path& path) {
  frame.projections.validate();
  nlohmann::json header;
  header["format"] = "dinorade-frame";
  header["version"] = 1;
  header["camera"] = frame.camera.to_json();
  header["condition_tag"] = frame.condition_tag;
  header["boxes"] = nlohmann::json::array();
  for (const auto& b : frame.boxes) header["boxes"].push_back(box_to_json(b));
  header["rendered_centers"] = nlohmann::json::array();
  for (std::size_t i = 0; i < frame.boxes.size(); ++i) {
    const auto& rc = i < frame.rendered_centers.size() ? frame.rendered_centers[i] : std::nullopt;
    header["rendered_centers"].push_back(rc ? nlohmann::json{rc->u, rc->v} : nlohmann::json(nullptr));
  }
  write_container(path, "DRFRAME1", header,
                  {{"p_rad", frame.projections.p_rad.shape, frame.projections.p_rad.data},
                   {"p_rae", frame.projections.p_rae.shape, frame.projections.p_rae.data},
                   {"image", frame.image.shape, frame.image.data}});
}

Frame read_frame(const std::filesystem::path& path) {
  using Kind = FormatError::Kind;
  const Container c = read_container(path, "DRFRAME1");
  const std::string where = " in '" + path.string() + "'";
  Frame f;
  try {
    if (c.header.at("format").get<std::string>() != "dinorade-frame")
      throw FormatError(Kind::kMalformedHeader, "not a frame file" + where);
    try {
      f.camera = geometry::CameraModel::from_json(c.header.at("camera"));
    } catch (const ConfigError& e) {
      throw FormatError(Kind::kMalformedHeader, std::string(e.what()) + where);
    }
    f.condition_tag = c.header.value("condition_tag", "");
    for (const auto& jb : c.header.at("boxes")) f.boxes.push_back(box_from_json(jb));
    const auto& rcs = c.header.at("rendered_centers");
    if (rcs.size() != f.boxes.size())
      throw FormatError(Kind::kMalformedHeader, "rendered_centers length differs from boxes" + where);
    for (const auto& rc : rcs) {
      if (rc.is_null()) {
        f.rendered_centers.emplace_back(std::nullopt);
      } else {
        const auto uv = rc.get<std::vector<double>>();
        if (uv.size() != 2) throw FormatError(Kind::kMalformedHeader, "rendered center needs 2 values" + where);
        f.rendered_centers.emplace_back(geometry::Pixel{uv[0], uv[1]});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(Kind::kMalformedHeader, std::string("frame header: ") + e.what() + where);
  }
  const Payload& rad = c.payload("p_rad");
  const Payload& rae = c.payload("p_rae");
  const Payload& img = c.payload("image");
  if (rad.shape.size() != 3 || rae.shape.size() != 3 || img.shape.size() != 3)
    throw FormatError(Kind::kDimension, "frame payloads must be 3D" + where);
  if (rad.shape[0] != rae.shape[0] || rad.shape[1] != rae.shape[1])
    throw FormatError(Kind::kDimension, "RAD/RAE range-azimuth dimensions differ" + where);
  if (img.shape[0] != f.camera.height_px || img.shape[1] != f.camera.width_px || img.shape[2] != 3)
    throw FormatError(Kind::kDimension, "image dimensions do not match the camera model" + where);
  f.projections.p_rad = {rad.shape, rad.data};
  f.projections.p_rae = {rae.shape, rae.data};
  f.image = {img.shape, img.data};
  return f;
}

std::vector<ManifestEntry> dataset_manifest(const std::filesystem::path& directory) {
  const auto manifest = directory / kManifestName;
  std::ifstream in(manifest);
  if (!in) throw DataError("missing manifest '" + manifest.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + manifest.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.is_array()) throw DataError("manifest '" + manifest.string() + "' must be a JSON list");
  std::vector<ManifestEntry> out;
  for (const auto& e : j) {
    ManifestEntry m;
    try {
      m.path = e.at("path").get<std::string>();
      m.condition_tag = e.value("condition_tag", "");
    } catch (const nlohmann::json::exception& ex) {
      throw DataError("bad manifest entry " + e.dump() + ": " + ex.what());
    }
    if (m.path.is_relative()) m.path = directory / m.path;
    if (!std::filesystem::exists(m.path)) throw DataError("manifest references missing file '" + m.path.string() + "'");
    out.push_back(std::move(m));
  }
  return out;
}

void write_manifest(const std::filesystem::path& directory, const std::vector<ManifestEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    std::filesystem::path p = e.path;
    if (p.is_absolute()) {
      const auto rel = std::filesystem::relative(p, directory);
      if (!rel.empty() && rel.native()[0] != '.') p = rel;
    } else if (p.has_parent_path() && p.parent_path() == directory) {
      p = p.filename();
    }
    j.push_back({{"path", p.generic_string()}, {"condition_tag", e.condition_tag}});
  }
  std::ofstream out(directory / kManifestName);
  if (!out) throw DataError("cannot write manifest in '" + directory.string() + "'");
  out << j.dump(2) << "\n";
}

}  // namespace dinorade::dataio
