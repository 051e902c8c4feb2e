#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library code it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dinorade/box.hpp"

namespace oracle {

/// Central finite differences of f at x, one coordinate at a time.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Scalar-loop bilinear interpolation of f {H, W, C} at normalized (u, v),
/// pixel-center convention, zero outside.
inline std::vector<double> bilinear(const std::vector<double>& f, int h, int w, int c, double u, double v) {
  const double x = u * w - 0.5, y = v * h - 0.5;
  const int xi = static_cast<int>(std::floor(x)), yi = static_cast<int>(std::floor(y));
  std::vector<double> out(static_cast<std::size_t>(c), 0.0);
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const int xx = xi + dx, yy = yi + dy;
      if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
      const double wt = (1.0 - std::abs(x - xx)) * (1.0 - std::abs(y - yy));
      for (int k = 0; k < c; ++k) out[static_cast<std::size_t>(k)] += wt * f[(static_cast<std::size_t>(yy) * w + xx) * c + k];
    }
  return out;
}

inline Eigen::Matrix2d psd_sqrt(const Eigen::Matrix2d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
  const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline Eigen::Matrix2d bev_cov(const dinorade::Box3D& b) {
  Eigen::Matrix2d r;
  r << std::cos(b.yaw), -std::sin(b.yaw), std::sin(b.yaw), std::cos(b.yaw);
  const Eigen::Vector2d d(b.length() * b.length() / 4.0, b.width() * b.width() / 4.0);
  return r * d.asDiagonal() * r.transpose();
}

/// Squared 2-Wasserstein distance via numerical eigendecompositions.
inline double gwd_sq(const dinorade::Box3D& a, const dinorade::Box3D& b) {
  const Eigen::Matrix2d s1 = bev_cov(a), s2 = bev_cov(b);
  const Eigen::Matrix2d r1 = psd_sqrt(s1);
  const Eigen::Matrix2d cross = psd_sqrt(r1 * s2 * r1);
  const Eigen::Vector2d dm = a.center.head<2>() - b.center.head<2>();
  return dm.squaredNorm() + (s1 + s2 - 2.0 * cross).trace();
}

inline bool inside_bev(const dinorade::Box3D& b, double x, double y) {
  const double dx = x - b.center.x(), dy = y - b.center.y();
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
  return std::abs(lx) <= b.length() / 2.0 && std::abs(ly) <= b.width() / 2.0;
}

/// Monte-Carlo BEV IoU from n uniform samples over the joint bounding square.
inline double mc_iou_bev(const dinorade::Box3D& a, const dinorade::Box3D& b, int n, std::mt19937_64& rng) {
  const double ra = 0.5 * std::hypot(a.length(), a.width()), rb = 0.5 * std::hypot(b.length(), b.width());
  const double x0 = std::min(a.center.x() - ra, b.center.x() - rb), x1 = std::max(a.center.x() + ra, b.center.x() + rb);
  const double y0 = std::min(a.center.y() - ra, b.center.y() - rb), y1 = std::max(a.center.y() + ra, b.center.y() + rb);
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  long both = 0, either = 0;
  for (int i = 0; i < n; ++i) {
    const double x = ux(rng), y = uy(rng);
    const bool ia = inside_bev(a, x, y), ib = inside_bev(b, x, y);
    both += ia && ib;
    either += ia || ib;
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

inline dinorade::Box3D make_box(double x, double y, double z, double l, double w, double h, double yaw,
                                dinorade::ObjectClass cls = dinorade::ObjectClass::kSedan, double score = 1.0) {
  dinorade::Box3D b;
  b.center = {x, y, z};
  b.dims = {l, w, h};
  b.yaw = yaw;
  b.cls = cls;
  b.score = score;
  return b;
}

inline dinorade::Box3D random_box(std::mt19937_64& rng, double extent = 10.0) {
  std::uniform_real_distribution<double> pos(-extent, extent), dim(0.5, 6.0), yaw(-std::numbers::pi, std::numbers::pi);
  return make_box(pos(rng), pos(rng), pos(rng) * 0.1, dim(rng), dim(rng), dim(rng), yaw(rng));
}

/// Penalty-reduced focal loss by explicit loop, alpha 2, beta 4.
inline double focal_loop(const std::vector<double>& p_in, const std::vector<double>& t, double eps = 1e-6) {
  double sum = 0.0;
  int peaks = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double p = std::clamp(p_in[i], eps, 1.0 - eps);
    if (t[i] == 1.0) {
      sum += -(1 - p) * (1 - p) * std::log(p);
      ++peaks;
    } else {
      sum += -std::pow(1 - t[i], 4) * p * p * std::log(1 - p);
    }
  }
  return sum / std::max(peaks, 1);
}

/// Interpolated AP from a hand-enumerated PR sequence.
inline double interp_ap(const std::vector<double>& recall, const std::vector<double>& precision,
                        const std::vector<double>& levels) {
  double total = 0.0;
  for (double r : levels) {
    double best = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i)
      if (recall[i] >= r - 1e-12) best = std::max(best, precision[i]);
    total += best;
  }
  return total / static_cast<double>(levels.size());
}

inline std::vector<double> kitti40_levels() {
  std::vector<double> l;
  for (int k = 1; k <= 40; ++k) l.push_back(k / 40.0);
  return l;
}

}  // namespace oracle
