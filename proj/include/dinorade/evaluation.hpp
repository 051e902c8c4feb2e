#pragma once

// Rotated-box IoU, greedy matching, interpolated AP and the per-class,
// per-condition report.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "dinorade/geometry.hpp"

namespace dinorade::eval {

struct EvalConfig {
  double iou_threshold = 0.3;
  /// 40 samples recall at k/40, k = 1..40; 11 uses the classic 0, 0.1, .., 1.
  int interpolation_points = 40;
  geometry::RegionOfInterest roi;

  void validate() const;
};

/// BEV footprint corners, counter-clockwise.
std::vector<Eigen::Vector2d> bev_corners(const Box3D& b);
/// Area of a simple polygon (shoelace, absolute value).
double polygon_area(const std::vector<Eigen::Vector2d>& poly);
/// Sutherland-Hodgman clip of one convex polygon by another (both CCW).
std::vector<Eigen::Vector2d> clip_convex(const std::vector<Eigen::Vector2d>& subject,
                                         const std::vector<Eigen::Vector2d>& clip);

double rotated_iou_bev(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);

enum class IouKind { kBev, k3d };

struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
};

struct ApResult {
  std::optional<double> ap;  // empty when there is no ground truth
  int n_gt = 0;
  int tp = 0;
  int fp = 0;
  PrCurve curve;
};

/// Single-class AP over frames (dets[i] and gts[i] belong to frame i).
/// Detections are processed by descending score; each takes the unmatched
/// ground truth of its frame with the highest IoU, if that IoU reaches the
/// threshold.
ApResult average_precision(const std::vector<std::vector<Box3D>>& dets, const std::vector<std::vector<Box3D>>& gts,
                           const EvalConfig& cfg, IouKind kind = IouKind::kBev);

/// Interpolated AP of a PR curve with the configured number of recall levels.
double interpolated_ap(const PrCurve& curve, int points);

struct GroundTruthFrame {
  std::string frame_id;
  std::string condition_tag;
  std::vector<Box3D> boxes;
};

struct CellResult {
  ApResult bev;
  ApResult d3;
};

inline constexpr const char* kTotalRow = "Total";

struct EvalReport {
  std::vector<std::string> conditions;  // sorted, followed by "Total"
  std::map<std::string, std::array<CellResult, kNumClasses>> cells;
  std::map<std::string, std::optional<double>> map_bev, map_3d;
  EvalConfig config;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Groups by (condition, class); "Total" pools every frame. Throws DataError
/// when a detection references an unknown frame id or ids repeat.
EvalReport build_report(const std::map<std::string, std::vector<Box3D>>& detections,
                        const std::vector<GroundTruthFrame>& ground_truth, const EvalConfig& cfg);

/// Writes report.json and report.txt into `directory`.
void write_report(const EvalReport& report, const std::filesystem::path& directory);

}  // namespace dinorade::eval
