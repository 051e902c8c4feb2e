#pragma once

// Center-point detection on the fused range-azimuth map.
//
// Regression channels per bin: (d_range_bin, d_azimuth_bin, z_m, log l,
// log w, log h, sin yaw, cos yaw). Offsets are fractional bin positions of
// the object center relative to the bin that carries its heatmap peak.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dinorade/geometry.hpp"
#include "dinorade/nn.hpp"

namespace dinorade::head {

using ag::Tensor;

inline constexpr int kRegressionChannels = 8;

enum RegressionChannel : int {
  kOffsetRange = 0,
  kOffsetAzimuth,
  kHeight,
  kLogLength,
  kLogWidth,
  kLogHeight,
  kSinYaw,
  kCosYaw,
};

struct HeadOutput {
  Tensor heatmaps;    // {R, A, kNumClasses}, in (0, 1)
  Tensor regression;  // {R, A, 8}
};

class DetectionHead {
 public:
  /// Heatmap logits start at prior_bias (sigmoid ~ 0.1).
  DetectionHead(nn::ParameterStore& store, std::mt19937_64& rng, int channels, double prior_bias = -2.19);
  HeadOutput operator()(const Tensor& m_f) const;

 private:
  nn::Conv2d cls_hidden_, cls_out_, reg_hidden_, reg_out_;
  int channels_;
};

struct TargetMaps {
  int n_range = 0;
  int n_azimuth = 0;
  std::vector<double> heatmap;        // {R, A, kNumClasses}
  std::vector<double> regression;     // {R, A, 8}, meaningful where mask is set
  std::vector<std::uint8_t> mask;     // {R, A}
  std::vector<int> box_index;         // {R, A}, index into boxes or -1
  std::vector<Box3D> boxes;           // ground truth as given
  int skipped = 0;                    // boxes whose center bin fell off the grid

  std::size_t bin(int r, int a) const { return static_cast<std::size_t>(r) * n_azimuth + a; }
};

/// Continuous (range bin, azimuth bin) coordinates of a box center.
std::pair<double, double> center_bins(const Box3D& box, const geometry::GridSpec& grid);

/// Gaussian value exp(-(dr^2 + da^2) / (2 sigma^2)) with offsets in bins.
double gaussian_peak(double dr_bins, double da_bins, double sigma);

/// Renders Gaussians in bin units around each box's integer center bin,
/// combined per class by elementwise max, plus regression targets there.
TargetMaps render_targets(const std::vector<Box3D>& gt_boxes, const geometry::GridSpec& grid, double sigma);

/// Number of bins whose rendered value for a single box exceeds `level`.
int support_area(const Box3D& box, const geometry::GridSpec& grid, double sigma, double level = 0.1);

struct DecodeConfig {
  double score_threshold = 0.3;
  int top_k = 50;  // per class
};

/// Box encoded by the 8 regression values at bin (r, a).
Box3D decode_bin(std::span<const double> reg, int r, int a, const geometry::GridSpec& grid);

/// Peak selection + decoding on raw arrays: heatmaps {R, A, K}, regression
/// {R, A, 8}. Sorted by descending score, ties by class then bin index.
std::vector<Box3D> decode(std::span<const double> heatmaps, std::span<const double> regression,
                          const geometry::GridSpec& grid, const DecodeConfig& cfg = {});
std::vector<Box3D> decode(const HeadOutput& out, const geometry::GridSpec& grid, const DecodeConfig& cfg = {});

/// One detection line: {frame_id, class, score, center, dims, yaw}.
nlohmann::json detection_to_json(const std::string& frame_id, const Box3D& box);
Box3D detection_from_json(const nlohmann::json& j);

void write_detections(std::ostream& os, const std::string& frame_id, const std::vector<Box3D>& boxes);
/// Reads a JSON-lines file into frame_id -> detections (file order kept).
std::map<std::string, std::vector<Box3D>> read_detections(const std::filesystem::path& path);

}  // namespace dinorade::head
