#pragma once

// Training objective: penalty-reduced focal loss on the heatmaps, a
// Gaussian-Wasserstein term on rotated BEV boxes and smooth-L1 on the
// remaining regression channels.

#include <cstdint>
#include <span>

#include <Eigen/Core>
#include <json.hpp>

#include "dinorade/detection_head.hpp"

namespace dinorade::loss {

using ag::Tensor;

struct LossWeights {
  double w_focal = 1.0;
  double w_gwd = 2.0;
  double w_l1 = 0.25;
  double gwd_tau = 1.0;

  void validate() const;
};

struct FocalConfig {
  double alpha = 2.0;
  double beta = 4.0;
  double eps = 1e-6;
};

/// Mean over ground-truth peaks (target == 1, at least one) of
///   -(1-p)^a log p                 at peaks,
///   -(1-t)^b p^a log(1-p)          elsewhere,
/// with p clamped to [eps, 1 - eps].
Tensor focal_loss(const Tensor& pred, std::span<const double> target, const FocalConfig& cfg = {});

struct Gaussian2 {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
};

/// BEV Gaussian: mean (x, y), covariance R(yaw) diag(l^2/4, w^2/4) R(yaw)^T.
/// Dims are floored at 1e-6.
Gaussian2 box_to_gaussian(const Box3D& box);

/// Squared 2-Wasserstein distance between the BEV Gaussians of two boxes.
double gwd_distance_sq(const Box3D& a, const Box3D& b);

/// 1 - 1 / (tau + ln(1 + d^2)).
double gwd_loss(const Box3D& a, const Box3D& b, double tau = 1.0);

/// Mean GWD loss over target center bins, the predicted box being decoded
/// from `regression` {R, A, 8} at each bin. Differentiable w.r.t. regression.
Tensor gwd_term(const Tensor& regression, const head::TargetMaps& targets, const geometry::GridSpec& grid,
                double tau);

/// Huber loss (transition 1) summed over elements with mask != 0 and divided
/// by their count (at least one). mask has pred's element count.
Tensor smooth_l1(const Tensor& pred, std::span<const double> target, std::span<const std::uint8_t> mask);

struct LossBreakdown {
  Tensor total;
  double focal = 0.0;
  double gwd = 0.0;
  double l1 = 0.0;

  nlohmann::json to_json() const;
};

/// w_focal * focal + w_gwd * gwd_term + w_l1 * smooth_l1 on the z, log-dims
/// and sin/cos channels at target center bins.
LossBreakdown total_loss(const head::HeadOutput& out, const head::TargetMaps& targets,
                         const geometry::GridSpec& grid, const LossWeights& weights,
                         const FocalConfig& focal = {});

}  // namespace dinorade::loss
