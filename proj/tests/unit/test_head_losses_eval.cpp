#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "dinorade/config.hpp"
#include "dinorade/detection_head.hpp"
#include "dinorade/errors.hpp"
#include "dinorade/evaluation.hpp"
#include "dinorade/losses.hpp"
#include "grad_check.hpp"
#include "oracles.hpp"

using namespace dinorade;
using ag::Tensor;
using oracle::make_box;
using testing::grad_check;
using testing::random_values;
constexpr double kPi = std::numbers::pi;

namespace {

geometry::GridSpec desk_grid() { return RunConfig::desk().model.grid; }

geometry::GridSpec tiny_grid() {
  geometry::GridSpec g;
  g.n_range = 8;
  g.n_azimuth = 6;
  g.n_elevation = 2;
  g.range_bounds_m = {0.0, 40.0};
  g.azimuth_bounds_rad = {-kPi / 4, kPi / 4};
  return g;
}

/// Box whose center sits exactly on bin (r, a) plus fractional offsets.
Box3D box_at_bin(const geometry::GridSpec& g, double ur, double ua, double z, double yaw,
                 ObjectClass cls = ObjectClass::kSedan) {
  const Eigen::Vector3d c = geometry::point_from_range_azimuth_height(g.bin_to_range(ur), g.bin_to_azimuth(ua), z);
  return make_box(c.x(), c.y(), c.z(), 4.5, 1.85, 1.5, yaw, cls);
}

double angle_diff(double a, double b) { return std::abs(normalize_angle(a - b)); }

}  // namespace

TEST_SUITE("detection_head") {
  TEST_CASE("output shapes and heatmap range") {
    nn::ParameterStore store;
    std::mt19937_64 rng(1);
    head::DetectionHead h(store, rng, 32);
    const auto out = h(Tensor::from({32, 16, 32}, random_values(rng, 32 * 16 * 32)));
    CHECK(out.heatmaps.shape() == ag::Shape{32, 16, 5});
    CHECK(out.regression.shape() == ag::Shape{32, 16, 8});
    for (double v : out.heatmaps.data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }

  TEST_CASE("Gaussian value one bin from the center") {
    CHECK(head::gaussian_peak(1.0, 0.0, 0.75) == doctest::Approx(std::exp(-1.0 / (2 * 0.75 * 0.75))).epsilon(1e-12));
    CHECK(head::gaussian_peak(1.0, 0.0, 0.75) == doctest::Approx(0.4111).epsilon(1e-4));
  }

  TEST_CASE("targets: unit peaks at center bins, regression at the peak") {
    const auto g = desk_grid();
    const std::vector<Box3D> boxes{box_at_bin(g, 10.2, 4.0, 0.5, 0.3),
                                   box_at_bin(g, 20.0, 11.0, 1.0, -2.0, ObjectClass::kPedestrian)};
    const auto t = head::render_targets(boxes, g, 0.75);
    CHECK(t.heatmap[t.bin(10, 4) * kNumClasses + 0] == 1.0);
    CHECK(t.heatmap[t.bin(20, 11) * kNumClasses + 2] == 1.0);
    CHECK(t.heatmap[t.bin(20, 11) * kNumClasses + 0] < 1e-12);
    CHECK(t.heatmap[t.bin(11, 4) * kNumClasses + 0] == doctest::Approx(head::gaussian_peak(1, 0, 0.75)));
    CHECK(t.mask[t.bin(10, 4)] == 1);
    CHECK(t.box_index[t.bin(20, 11)] == 1);
    CHECK(t.regression[t.bin(10, 4) * 8 + head::kOffsetRange] == doctest::Approx(0.2));
    int peaks = 0;
    for (double v : t.heatmap) peaks += v == 1.0;
    CHECK(peaks == 2);
  }

  TEST_CASE("wider sigma covers more bins") {
    const auto g = desk_grid();
    const Box3D b = box_at_bin(g, 15, 8, 0.5, 0.0);
    CHECK(head::support_area(b, g, 3.0) > head::support_area(b, g, 0.75));
  }

  TEST_CASE("decoding rendered targets recovers the boxes") {
    const auto g = desk_grid();
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> off(-0.49, 0.49), yaw(-kPi + 1e-3, kPi), z(-1.0, 3.0);
    const std::vector<Box3D> boxes{box_at_bin(g, 5 + off(rng), 3 + off(rng), z(rng), yaw(rng)),
                                   box_at_bin(g, 14 + off(rng), 9 + off(rng), z(rng), yaw(rng), ObjectClass::kBusOrTruck),
                                   box_at_bin(g, 25 + off(rng), 12 + off(rng), z(rng), yaw(rng), ObjectClass::kBicycle)};
    const auto t = head::render_targets(boxes, g, 0.75);
    const auto dets = head::decode(t.heatmap, t.regression, g);
    REQUIRE(dets.size() == 3);
    for (const Box3D& gt : boxes) {
      bool found = false;
      for (const Box3D& d : dets) {
        if (d.cls != gt.cls) continue;
        found = true;
        CHECK((d.center - gt.center).norm() < 1e-3);
        CHECK((d.dims - gt.dims).norm() < 1e-6);
        CHECK(angle_diff(d.yaw, gt.yaw) < 1e-3);
        CHECK(d.score == 1.0);
      }
      CHECK(found);
    }
  }

  TEST_CASE("empty heatmap decodes to nothing; equal neighbours keep one peak") {
    const auto g = tiny_grid();
    std::vector<double> hm(8 * 6 * kNumClasses, 0.0), reg(8 * 6 * 8, 0.0);
    CHECK(head::decode(hm, reg, g).empty());
    hm[(3 * 6 + 2) * kNumClasses] = 0.9;
    hm[(3 * 6 + 3) * kNumClasses] = 0.9;
    const auto d = head::decode(hm, reg, g);
    REQUIRE(d.size() == 1);
    const Box3D expect = head::decode_bin(std::span<const double>(reg).subspan((3 * 6 + 2) * 8, 8), 3, 2, g);
    CHECK((d[0].center - expect.center).norm() < 1e-12);
  }

  TEST_CASE("detection count is monotone in the threshold") {
    const auto g = tiny_grid();
    std::mt19937_64 rng(3);
    const auto hm = random_values(rng, 8 * 6 * kNumClasses, 0.0, 1.0);
    const auto reg = random_values(rng, 8 * 6 * 8, -0.4, 0.4);
    std::size_t prev = SIZE_MAX;
    for (double th = 0.0; th <= 1.0; th += 0.05) {
      const auto n = head::decode(hm, reg, g, {th, 50}).size();
      CHECK(n <= prev);
      prev = n;
    }
  }

  TEST_CASE("detection JSON round trip") {
    const Box3D b = make_box(10, -2, 0.5, 4, 2, 1.5, 0.7, ObjectClass::kMotorcycle, 0.42);
    std::ostringstream os;
    head::write_detections(os, "frame_000", {b});
    const Box3D c = head::detection_from_json(nlohmann::json::parse(os.str()));
    CHECK(c.cls == b.cls);
    CHECK(c.score == doctest::Approx(b.score));
    CHECK((c.center - b.center).norm() < 1e-12);
    CHECK(c.yaw == doctest::Approx(b.yaw));
  }
}

TEST_SUITE("losses") {
  TEST_CASE("focal loss limits and loop oracle") {
    const double eps = 1e-6;
    std::vector<double> t(40, 0.0), p(40, eps);
    t[7] = 1.0;
    p[7] = 1.0 - eps;
    CHECK(loss::focal_loss(Tensor::from({40}, p), t).item() < 1e-4);

    std::mt19937_64 rng(4);
    auto soft = random_values(rng, 40, 0.0, 0.99);
    soft[3] = 1.0;
    soft[20] = 1.0;
    const std::vector<double> half(40, 0.5);
    CHECK(std::abs(loss::focal_loss(Tensor::from({40}, half), soft).item() - oracle::focal_loop(half, soft)) < 1e-6);

    const std::vector<double> none(40, 0.0), low(40, eps);
    CHECK(loss::focal_loss(Tensor::from({40}, low), none).item() < 1e-4);

    const auto pr = random_values(rng, 40, 0.05, 0.95);
    CHECK(std::abs(loss::focal_loss(Tensor::from({40}, pr), soft).item() - oracle::focal_loop(pr, soft)) < 1e-9);
    CHECK(grad_check([&](const Tensor& x) { return loss::focal_loss(x, soft); }, {40}, pr, rng) < 1e-6);
  }

  TEST_CASE("box covariance cases") {
    const auto g1 = loss::box_to_gaussian(make_box(1, 2, 0, 2, 2, 1, 0.4));
    CHECK((g1.cov - Eigen::Matrix2d::Identity()).norm() < 1e-12);
    CHECK((g1.mean - Eigen::Vector2d(1, 2)).norm() == 0.0);
    const auto g2 = loss::box_to_gaussian(make_box(0, 0, 0, 4, 2, 1, kPi / 2));
    CHECK((g2.cov - Eigen::Vector2d(1, 4).asDiagonal().toDenseMatrix()).norm() < 1e-12);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
      const auto g = loss::box_to_gaussian(oracle::random_box(rng));
      CHECK(std::abs(g.cov(0, 1) - g.cov(1, 0)) < 1e-15);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(g.cov);
      CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
  }

  TEST_CASE("Wasserstein distance: identity, translation, oracle, symmetry, rotation") {
    std::mt19937_64 rng(6);
    const Box3D a = make_box(3, -1, 0, 4, 2, 1.5, 0.6);
    CHECK(loss::gwd_distance_sq(a, a) == doctest::Approx(0.0).scale(1.0));
    CHECK(loss::gwd_loss(a, a) == doctest::Approx(0.0).scale(1.0));
    Box3D shifted = a;
    shifted.center += Eigen::Vector3d(1.5, -2.0, 0.7);
    CHECK(loss::gwd_distance_sq(a, shifted) == doctest::Approx(1.5 * 1.5 + 2.0 * 2.0).epsilon(1e-12));
    const double d2 = loss::gwd_distance_sq(a, shifted);
    CHECK(loss::gwd_loss(a, shifted, 1.0) == doctest::Approx(1.0 - 1.0 / (1.0 + std::log1p(d2))));

    std::uniform_real_distribution<double> ang(-kPi, kPi);
    for (int i = 0; i < 100; ++i) {
      const Box3D p = oracle::random_box(rng), q = oracle::random_box(rng);
      const double ref = oracle::gwd_sq(p, q);
      CHECK(std::abs(loss::gwd_distance_sq(p, q) - ref) <= 1e-6 * std::max(ref, 1e-12));
      CHECK(std::abs(loss::gwd_distance_sq(q, p) - ref) <= 1e-6 * std::max(ref, 1e-12));
      const double th = ang(rng);
      const Eigen::Matrix3d rot = Eigen::AngleAxisd(th, Eigen::Vector3d::UnitZ()).toRotationMatrix();
      Box3D pr = p, qr = q;
      pr.center = rot * p.center;
      qr.center = rot * q.center;
      pr.yaw = normalize_angle(p.yaw + th);
      qr.yaw = normalize_angle(q.yaw + th);
      CHECK(std::abs(loss::gwd_distance_sq(pr, qr) - ref) <= 1e-6 * std::max(ref, 1e-9));
    }
  }

  TEST_CASE("smooth L1 cases") {
    const std::vector<std::uint8_t> on{1};
    CHECK(loss::smooth_l1(Tensor::from({1}, {0.3}), std::vector<double>{0.3}, on).item() == 0.0);
    CHECK(loss::smooth_l1(Tensor::from({1}, {0.5}), std::vector<double>{0.0}, on).item() == doctest::Approx(0.125));
    CHECK(loss::smooth_l1(Tensor::from({1}, {-2.0}), std::vector<double>{0.0}, on).item() == doctest::Approx(1.5));
    const std::vector<std::uint8_t> half{1, 0};
    CHECK(loss::smooth_l1(Tensor::from({2}, {0.5, 10.0}), std::vector<double>{0.0, 0.0}, half).item() ==
          doctest::Approx(0.125));
  }

  TEST_CASE("total loss: perfect prediction, weights, breakdown, gradient") {
    const auto g = tiny_grid();
    const std::vector<Box3D> boxes{box_at_bin(g, 2.3, 1.8, 0.4, 0.9),
                                   box_at_bin(g, 5.9, 4.1, 1.0, -1.2, ObjectClass::kPedestrian)};
    const auto t = head::render_targets(boxes, g, 0.75);
    std::vector<double> onehot(t.heatmap.size());
    for (std::size_t i = 0; i < onehot.size(); ++i) onehot[i] = t.heatmap[i] == 1.0 ? 1.0 : 0.0;
    head::HeadOutput perfect{Tensor::from({8, 6, kNumClasses}, onehot), Tensor::from({8, 6, 8}, t.regression)};
    CHECK(loss::total_loss(perfect, t, g, {}).total.item() < 1e-3);

    std::mt19937_64 rng(7);
    head::HeadOutput noisy{Tensor::from({8, 6, kNumClasses}, random_values(rng, onehot.size(), 0.05, 0.95)),
                           Tensor::from({8, 6, 8}, random_values(rng, t.regression.size(), -1.0, 1.0))};
    const auto focal_only = loss::total_loss(noisy, t, g, {1.0, 0.0, 0.0, 1.0});
    CHECK(focal_only.total.item() == doctest::Approx(focal_only.focal).epsilon(1e-12));
    CHECK(focal_only.focal ==
          doctest::Approx(loss::focal_loss(noisy.heatmaps, t.heatmap).item()).epsilon(1e-12));
    const loss::LossWeights w{1.3, 0.7, 0.4, 1.0};
    const auto b = loss::total_loss(noisy, t, g, w);
    CHECK(b.total.item() == doctest::Approx(w.w_focal * b.focal + w.w_gwd * b.gwd + w.w_l1 * b.l1).epsilon(1e-12));

    const Tensor hm = noisy.heatmaps;
    CHECK(grad_check([&](const Tensor& x) { return loss::total_loss({hm, x}, t, g, w).total; }, {8, 6, 8},
                     std::vector<double>(noisy.regression.data().begin(), noisy.regression.data().end()), rng) < 1e-5);
    const Tensor rg = noisy.regression;
    CHECK(grad_check([&](const Tensor& x) { return loss::total_loss({x, rg}, t, g, w).total; }, {8, 6, kNumClasses},
                     std::vector<double>(hm.data().begin(), hm.data().end()), rng) < 1e-5);
  }

  TEST_CASE("negative weights rejected") {
    loss::LossWeights w;
    w.w_gwd = -1.0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("rotated IoU hand cases") {
    const Box3D a = make_box(10, 0, 0, 1, 1, 1, 0);
    CHECK(eval::rotated_iou_bev(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eval::rotated_iou_bev(a, make_box(20, 0, 0, 1, 1, 1, 0)) == 0.0);
    CHECK(std::abs(eval::rotated_iou_bev(a, make_box(10.5, 0, 0, 1, 1, 1, 0)) - 1.0 / 3.0) < 1e-9);
    // A square rotated by 90 degrees is the same footprint.
    CHECK(eval::rotated_iou_bev(a, make_box(10, 0, 0, 1, 1, 1, kPi / 2)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eval::iou_3d(a, make_box(10, 0, 1, 1, 1, 1, 0)) == doctest::Approx(0.0).scale(1.0));
    CHECK(std::abs(eval::iou_3d(a, make_box(10.5, 0, 0, 1, 1, 1, 0)) - 1.0 / 3.0) < 1e-9);
  }

  TEST_CASE("rotated IoU: symmetry, rigid invariance, Monte-Carlo agreement") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> ang(-kPi, kPi), shift(-50, 50);
    for (int i = 0; i < 100; ++i) {
      const Box3D a = oracle::random_box(rng, 2.0), b = oracle::random_box(rng, 2.0);
      const double iou = eval::rotated_iou_bev(a, b);
      CHECK(iou >= 0.0);
      CHECK(iou <= 1.0 + 1e-12);
      CHECK(std::abs(iou - eval::rotated_iou_bev(b, a)) < 1e-9);
      const double th = ang(rng);
      const Eigen::Matrix3d rot = Eigen::AngleAxisd(th, Eigen::Vector3d::UnitZ()).toRotationMatrix();
      const Eigen::Vector3d t(shift(rng), shift(rng), 0.0);
      Box3D ar = a, br = b;
      ar.center = rot * a.center + t;
      br.center = rot * b.center + t;
      ar.yaw = normalize_angle(a.yaw + th);
      br.yaw = normalize_angle(b.yaw + th);
      CHECK(std::abs(iou - eval::rotated_iou_bev(ar, br)) < 1e-9);
    }
    for (int i = 0; i < 10; ++i) {
      const Box3D a = oracle::random_box(rng, 2.0), b = oracle::random_box(rng, 2.0);
      CHECK(std::abs(eval::rotated_iou_bev(a, b) - oracle::mc_iou_bev(a, b, 200000, rng)) < 0.01);
    }
  }

  TEST_CASE("AP: perfect, empty, hand table, duplicates") {
    eval::EvalConfig cfg;
    const std::vector<std::vector<Box3D>> gt{
        {make_box(10, 0, 0, 4, 2, 1.5, 0), make_box(30, 3, 0, 4, 2, 1.5, 0.5), make_box(50, -3, 0, 4, 2, 1.5, 1.0)}};
    auto scored = [](Box3D b, double s) {
      b.score = s;
      return b;
    };
    CHECK(*eval::average_precision(gt, gt, cfg).ap == doctest::Approx(1.0));
    const auto none = eval::average_precision({{}}, gt, cfg);
    CHECK(*none.ap == 0.0);
    CHECK_FALSE(eval::average_precision(gt, {{}}, cfg).ap.has_value());

    // TP, FP, TP, FP by descending score.
    const std::vector<std::vector<Box3D>> dets{{scored(gt[0][0], 0.9), scored(make_box(60, 5, 0, 4, 2, 1.5, 0), 0.8),
                                                scored(gt[0][1], 0.7), scored(make_box(20, -5, 0, 4, 2, 1.5, 0), 0.6)}};
    const auto r = eval::average_precision(dets, gt, cfg);
    CHECK(r.tp == 2);
    CHECK(r.fp == 2);
    const double expect =
        oracle::interp_ap({1.0 / 3, 1.0 / 3, 2.0 / 3, 2.0 / 3}, {1.0, 0.5, 2.0 / 3, 0.5}, oracle::kitti40_levels());
    CHECK(*r.ap == doctest::Approx(expect).epsilon(1e-12));
    eval::EvalConfig eleven = cfg;
    eleven.interpolation_points = 11;
    std::vector<double> levels;
    for (int k = 0; k <= 10; ++k) levels.push_back(k / 10.0);
    CHECK(*eval::average_precision(dets, gt, eleven).ap ==
          doctest::Approx(oracle::interp_ap({1.0 / 3, 1.0 / 3, 2.0 / 3, 2.0 / 3}, {1.0, 0.5, 2.0 / 3, 0.5}, levels)));

    const std::vector<std::vector<Box3D>> dup{{scored(gt[0][0], 0.9), scored(gt[0][0], 0.8)}};
    const auto d = eval::average_precision(dup, gt, cfg);
    CHECK(d.tp == 1);
    CHECK(d.fp == 1);
  }

  TEST_CASE("AP does not increase with the IoU threshold") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> jitter(0.0, 0.8);
    std::uniform_real_distribution<double> x(5, 65), y(-5, 5), s(0, 1);
    std::vector<std::vector<Box3D>> gt(4), dets(4);
    for (int f = 0; f < 4; ++f)
      for (int k = 0; k < 4; ++k) {
        Box3D b = make_box(x(rng), y(rng), 0, 4, 2, 1.5, s(rng));
        gt[f].push_back(b);
        b.center += Eigen::Vector3d(jitter(rng), jitter(rng), 0.0);
        b.score = s(rng);
        dets[f].push_back(b);
      }
    double prev = 2.0;
    for (double th = 0.1; th < 0.95; th += 0.1) {
      eval::EvalConfig cfg;
      cfg.iou_threshold = th;
      const double ap = *eval::average_precision(dets, gt, cfg).ap;
      CHECK(ap <= prev + 1e-12);
      prev = ap;
    }
  }

  TEST_CASE("report: perfect, absent class, pooled total, unknown frame") {
    const eval::EvalConfig cfg;
    std::vector<eval::GroundTruthFrame> gt{
        {"a", "clear", {make_box(10, 0, 0, 4.5, 1.85, 1.5, 0), make_box(20, 2, 0, 0.7, 0.7, 1.75, 0, ObjectClass::kPedestrian)}},
        {"b", "fog", {make_box(15, 1, 0, 4.5, 1.85, 1.5, 0.3)}}};
    std::map<std::string, std::vector<Box3D>> dets{{"a", gt[0].boxes}, {"b", gt[1].boxes}};
    const auto rep = eval::build_report(dets, gt, cfg);
    CHECK(rep.conditions == std::vector<std::string>{"clear", "fog", "Total"});
    CHECK(*rep.map_bev.at("Total") == doctest::Approx(1.0));
    CHECK(*rep.map_bev.at("fog") == doctest::Approx(1.0));
    CHECK_FALSE(rep.cells.at("fog")[class_index(ObjectClass::kPedestrian)].bev.ap.has_value());
    CHECK_FALSE(rep.cells.at("Total")[class_index(ObjectClass::kBicycle)].bev.ap.has_value());
    CHECK(rep.to_text().find(" -") != std::string::npos);

    dets["b"].clear();
    const auto pooled = eval::build_report(dets, gt, cfg);
    CHECK(*pooled.cells.at("clear")[0].bev.ap == doctest::Approx(1.0));
    CHECK(*pooled.cells.at("fog")[0].bev.ap == 0.0);
    const double total = *pooled.cells.at("Total")[0].bev.ap;
    CHECK(total > 0.0);
    CHECK(total < 1.0);
    CHECK(total == doctest::Approx(oracle::interp_ap({0.5}, {1.0}, oracle::kitti40_levels())));

    dets["zzz"] = {};
    CHECK_THROWS_AS(eval::build_report(dets, gt, cfg), DataError);
  }
}
