#pragma once

// Small RGB canvas, PNG I/O and the two figures the CLI emits: the BEV
// overlay (ground truth white, predictions red, ROI dashed) and PR curves.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dinorade/geometry.hpp"

namespace dinorade::raster {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kRed{230, 30, 30};
inline constexpr Rgb kBlack{0, 0, 0};

class Image {
 public:
  Image(int width, int height, Rgb fill = kBlack);

  int width() const { return w_; }
  int height() const { return h_; }
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);  // ignores out-of-bounds writes
  /// dash > 0 alternates dash pixels on / off along the line.
  void line(double x0, double y0, double x1, double y1, Rgb c, int dash = 0);
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
  /// 3x5 glyphs (upper-case letters, digits, " .-+*()/_:"), scaled.
  void text(int x, int y, const std::string& s, Rgb c, int scale = 2);
  const std::vector<std::uint8_t>& pixels() const { return px_; }

 private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

void write_png(const Image& img, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

/// Top-down view: +x (forward) points up, +y (left) points left. The scale is
/// uniform and fits x in [-2, x_max + 4] m into the image height.
struct BevView {
  int width = 0, height = 0;
  double x_min = -2.0;
  double meters_per_px = 0.1;

  static BevView fit(int width, int height, double x_max);
  std::pair<double, double> to_px(double x, double y) const;
};

Image render_bev(const std::vector<Box3D>& ground_truth, const std::vector<Box3D>& predictions,
                 const geometry::RegionOfInterest& roi, int width, int height, bool labels = true);

/// One curve per (class, condition) cell of a report.json with stored PR
/// points; empty filters select everything. Cells without points are listed
/// in `skipped`.
Image render_pr(const nlohmann::json& report, const std::vector<std::string>& classes,
                const std::vector<std::string>& conditions, int width, int height,
                std::vector<std::string>* skipped = nullptr);

}  // namespace dinorade::raster
