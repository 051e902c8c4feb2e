#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dinorade/dataio.hpp"
#include "dinorade/errors.hpp"
#include "dinorade/geometry.hpp"
#include "oracles.hpp"

using namespace dinorade;
using namespace dinorade::geometry;
constexpr double kPi = std::numbers::pi;

namespace {

CameraModel toy_camera() {
  CameraModel cam;
  cam.intrinsics << 50.0, 0.0, 32.0, 0.0, 40.0, 24.0, 0.0, 0.0, 1.0;
  cam.extrinsics.setIdentity();
  cam.height_px = 48;
  cam.width_px = 64;
  return cam;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("polar to cartesian axis cases") {
    const auto a = polar_to_cartesian({10.0, 0.0, 0.0});
    CHECK(a.x() == doctest::Approx(10.0));
    CHECK(a.y() == doctest::Approx(0.0));
    CHECK(a.z() == doctest::Approx(0.0));
    const auto b = polar_to_cartesian({1.0, kPi / 2, 0.0});
    CHECK(b.x() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b.y() == doctest::Approx(1.0));
    const auto p = cartesian_to_polar(polar_to_cartesian({5.0, 0.3, 0.1}));
    CHECK(std::abs(p.range_m - 5.0) < 1e-9);
    CHECK(std::abs(p.azimuth_rad - 0.3) < 1e-9);
    CHECK(std::abs(p.elevation_rad - 0.1) < 1e-9);
  }

  TEST_CASE("cartesian to polar axis cases and origin") {
    const auto a = cartesian_to_polar({10.0, 0.0, 0.0});
    CHECK(a.range_m == 10.0);
    CHECK(a.azimuth_rad == 0.0);
    CHECK(a.elevation_rad == 0.0);
    const auto b = cartesian_to_polar({0.0, 0.0, 3.0});
    CHECK(b.range_m == 3.0);
    CHECK(b.azimuth_rad == 0.0);
    CHECK(b.elevation_rad == doctest::Approx(kPi / 2));
    CHECK_THROWS_AS(cartesian_to_polar({0.0, 0.0, 0.0}), GeometryError);
  }

  TEST_CASE("round trip on random ROI points and on the stated polar ranges") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ux(0.1, 72.0), uy(-6.4, 6.4), uz(-2.0, 6.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Eigen::Vector3d p(ux(rng), uy(rng), uz(rng));
      worst = std::max(worst, (polar_to_cartesian(cartesian_to_polar(p)) - p).norm());
    }
    CHECK(worst < 1e-9);

    std::uniform_real_distribution<double> ur(0.1, 120.0), ua(-kPi / 2 + 1e-6, kPi / 2 - 1e-6), ue(-kPi / 4, kPi / 4);
    double worst_polar = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const PolarCoord p{ur(rng), ua(rng), ue(rng)};
      const PolarCoord q = cartesian_to_polar(polar_to_cartesian(p));
      worst_polar = std::max({worst_polar, std::abs(q.range_m - p.range_m), std::abs(q.azimuth_rad - p.azimuth_rad),
                              std::abs(q.elevation_rad - p.elevation_rad)});
    }
    CHECK(worst_polar < 1e-9);
  }

  TEST_CASE("projection: principal point, behind camera, scale consistency") {
    const CameraModel cam = toy_camera();
    const auto px = project_to_image({0.0, 0.0, 5.0}, cam);
    REQUIRE(px);
    CHECK(px->u == doctest::Approx(32.0));
    CHECK(px->v == doctest::Approx(24.0));
    CHECK_FALSE(project_to_image({0.0, 0.0, -5.0}, cam));
    CHECK_FALSE(project_to_image({100.0, 0.0, 1.0}, cam));  // lands outside the image

    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-0.3, 0.3), d(2.0, 20.0), lam(0.1, 10.0);
    for (int i = 0; i < 100; ++i) {
      const double z = d(rng);
      const Eigen::Vector3d p(u(rng) * z, u(rng) * z, z);
      const auto a = project_to_image(p, cam);
      const auto b = project_to_image(lam(rng) * p, cam);
      REQUIRE(a);
      REQUIRE(b);
      CHECK(std::abs(a->u - b->u) < 1e-9);
      CHECK(std::abs(a->v - b->v) < 1e-9);
    }
  }

  TEST_CASE("reference points match a hand-rolled pinhole oracle on a toy grid") {
    // Identity extrinsics: the optical axis is radar +z, so the upper height
    // segment is in front of the camera and the lower one behind it.
    GridSpec grid;
    grid.n_range = 4;
    grid.n_azimuth = 4;
    grid.n_elevation = 2;
    grid.range_bounds_m = {6.0, 10.0};
    grid.azimuth_bounds_rad = {-1.0, 1.0};
    grid.elevation_bounds_m = {-3.0, 5.0};
    CameraModel cam;
    cam.intrinsics << 3.0, 0.0, 32.0, 0.0, 2.5, 24.0, 0.0, 0.0, 1.0;
    cam.height_px = 48;
    cam.width_px = 64;
    const ReferencePoints rp = reference_points(grid, cam);
    REQUIRE(rp.coords.size() == 4 * 4 * 2 * 2);
    REQUIRE(rp.mask.size() == 4 * 4 * 2);
    int valid = 0, masked = 0;
    for (int r = 0; r < 4; ++r)
      for (int a = 0; a < 4; ++a)
        for (int e = 0; e < 2; ++e) {
          const double range = 6.0 + (r + 0.5) * 1.0;
          const double az = -1.0 + (a + 0.5) * 0.5;
          const double z = -3.0 + (e + 0.5) * 4.0;
          const double g = std::sqrt(range * range - z * z);
          const double X = g * std::cos(az), Y = g * std::sin(az), Z = z;
          const std::size_t i = rp.index(r, a, e);
          bool expect = false;
          double u = 0, v = 0;
          if (Z > 0) {
            u = 3.0 * X / Z + 32.0;
            v = 2.5 * Y / Z + 24.0;
            expect = u >= 0 && u < 64 && v >= 0 && v < 48;
          }
          CHECK(static_cast<bool>(rp.mask[i]) == expect);
          if (expect) {
            ++valid;
            CHECK(std::abs(rp.coords[2 * i] - u / 64.0) < 1e-6);
            CHECK(std::abs(rp.coords[2 * i + 1] - v / 48.0) < 1e-6);
          } else {
            ++masked;
          }
        }
    CHECK(valid == 16);
    CHECK(masked == 16);
  }

  TEST_CASE("desk reference points: valid ones in the unit square, depth <= 0 masked") {
    GridSpec grid;
    grid.n_range = 32;
    grid.n_azimuth = 16;
    grid.n_elevation = 4;
    grid.range_bounds_m = {0.0, 76.8};
    grid.azimuth_bounds_rad = {-kPi / 4, kPi / 4};
    const CameraModel cam = CameraModel::forward_looking(160, 256, kPi / 2, 0.5);
    const ReferencePoints rp = reference_points(grid, cam);
    int valid = 0;
    for (int r = 0; r < 32; ++r)
      for (int a = 0; a < 16; ++a)
        for (int e = 0; e < 4; ++e) {
          const std::size_t i = rp.index(r, a, e);
          const auto anchor = query_anchor(grid, r, a, e);
          if (anchor) {
            const Eigen::Vector3d pc = cam.extrinsics.topLeftCorner<3, 3>() * *anchor + cam.extrinsics.topRightCorner<3, 1>();
            if (pc.z() <= 0) CHECK(rp.mask[i] == 0);
          }
          if (!rp.mask[i]) continue;
          ++valid;
          CHECK(rp.coords[2 * i] >= 0.0);
          CHECK(rp.coords[2 * i] <= 1.0);
          CHECK(rp.coords[2 * i + 1] >= 0.0);
          CHECK(rp.coords[2 * i + 1] <= 1.0);
        }
    CHECK(valid > 32 * 16);
  }

  TEST_CASE("ROI membership by center, closed interval") {
    const RegionOfInterest roi;
    CHECK(roi_contains(oracle::make_box(36, 0, 0, 4, 2, 1.5, 0), roi));
    CHECK_FALSE(roi_contains(oracle::make_box(80, 0, 0, 4, 2, 1.5, 0), roi));
    CHECK(roi_contains(oracle::make_box(72, 0, 0, 4, 2, 1.5, 0), roi));
    CHECK(roi_contains(oracle::make_box(72, 6.4, -2, 4, 2, 1.5, 0), roi));
    CHECK_FALSE(roi_contains(oracle::make_box(10, 6.5, 0, 4, 2, 1.5, 0), roi));
  }

  TEST_CASE("generator's rendered centers agree with projection within 0.5 px") {
    GridSpec grid;
    grid.n_range = 32;
    grid.n_azimuth = 16;
    grid.n_elevation = 4;
    grid.range_bounds_m = {0.0, 76.8};
    grid.azimuth_bounds_rad = {-kPi / 4, kPi / 4};
    const CameraModel cam = CameraModel::forward_looking(160, 256, kPi / 2, 0.5);
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const dataio::Frame f = dataio::generate_scene(seed, 3, grid, cam, {});
      for (std::size_t i = 0; i < f.boxes.size(); ++i) {
        const auto px = project_to_image(f.boxes[i].center, cam);
        REQUIRE(px.has_value() == f.rendered_centers[i].has_value());
        if (!px) continue;
        CHECK(std::abs(px->u - f.rendered_centers[i]->u) <= 0.5);
        CHECK(std::abs(px->v - f.rendered_centers[i]->v) <= 0.5);
        ++checked;
      }
    }
    CHECK(checked > 0);
  }

  TEST_CASE("camera JSON round trip and validation") {
    const CameraModel cam = CameraModel::forward_looking(160, 256, kPi / 2, 0.5);
    const CameraModel back = CameraModel::from_json(cam.to_json());
    CHECK(back.intrinsics.isApprox(cam.intrinsics));
    CHECK(back.extrinsics.isApprox(cam.extrinsics));
    CHECK(back.height_px == 160);
    CHECK(back.width_px == 256);
    CameraModel bad = cam;
    bad.extrinsics(0, 0) = -bad.extrinsics(0, 0) + 2.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cam;
    bad.intrinsics(0, 0) = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("grid validation") {
    GridSpec g;
    g.n_range = 0;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g.n_range = 2;
    g.range_bounds_m = {5.0, 5.0};
    CHECK_THROWS_AS(g.validate(), ConfigError);
  }
}
