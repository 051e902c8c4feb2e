#include "dinorade/raster.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <iomanip>

#include "dinorade/errors.hpp"

namespace dinorade::raster {

namespace {

// Each glyph: five rows of three bits, most significant bit on the left.
const std::map<char, std::array<std::uint8_t, 5>>& font() {
  static const std::map<char, std::array<std::uint8_t, 5>> f{
      {'A', {2, 5, 7, 5, 5}}, {'B', {6, 5, 6, 5, 6}}, {'C', {3, 4, 4, 4, 3}}, {'D', {6, 5, 5, 5, 6}},
      {'E', {7, 4, 6, 4, 7}}, {'F', {7, 4, 6, 4, 4}}, {'G', {3, 4, 5, 5, 3}}, {'H', {5, 5, 7, 5, 5}},
      {'I', {7, 2, 2, 2, 7}}, {'J', {1, 1, 1, 5, 2}}, {'K', {5, 5, 6, 5, 5}}, {'L', {4, 4, 4, 4, 7}},
      {'M', {5, 7, 7, 5, 5}}, {'N', {6, 5, 5, 5, 5}}, {'O', {2, 5, 5, 5, 2}}, {'P', {6, 5, 6, 4, 4}},
      {'Q', {2, 5, 5, 6, 3}}, {'R', {6, 5, 6, 5, 5}}, {'S', {3, 4, 2, 1, 6}}, {'T', {7, 2, 2, 2, 2}},
      {'U', {5, 5, 5, 5, 7}}, {'V', {5, 5, 5, 5, 2}}, {'W', {5, 5, 7, 7, 5}}, {'X', {5, 5, 2, 5, 5}},
      {'Y', {5, 5, 2, 2, 2}}, {'Z', {7, 1, 2, 4, 7}}, {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}},
      {'2', {6, 1, 2, 4, 7}}, {'3', {6, 1, 2, 1, 6}}, {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 6, 1, 6}},
      {'6', {3, 4, 7, 5, 7}}, {'7', {7, 1, 2, 2, 2}}, {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 6}},
      {'.', {0, 0, 0, 0, 2}}, {'-', {0, 0, 7, 0, 0}}, {'+', {0, 2, 7, 2, 0}}, {'*', {5, 2, 7, 2, 5}},
      {'(', {1, 2, 2, 2, 1}}, {')', {4, 2, 2, 2, 4}}, {'/', {1, 1, 2, 4, 4}}, {'_', {0, 0, 0, 0, 7}},
      {':', {0, 2, 0, 2, 0}}, {' ', {0, 0, 0, 0, 0}},
  };
  return f;
}

}  // namespace

Image::Image(int width, int height, Rgb fill) : w_(width), h_(height) {
  if (width < 1 || height < 1) throw ConfigError("image size must be positive");
  px_.resize(static_cast<std::size_t>(w_) * h_ * 3);
  for (std::size_t i = 0; i < px_.size(); i += 3) {
    px_[i] = fill.r;
    px_[i + 1] = fill.g;
    px_[i + 2] = fill.b;
  }
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
  return {px_.at(i), px_.at(i + 1), px_.at(i + 2)};
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
  const std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
  px_[i] = c.r;
  px_[i + 1] = c.g;
  px_[i + 2] = c.b;
}

void Image::line(double x0, double y0, double x1, double y1, Rgb c, int dash) {
  const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= n; ++i) {
    if (dash > 0 && (i / dash) % 2 == 1) continue;
    const double t = static_cast<double>(i) / n;
    set(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

void Image::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) set(x, y, c);
}

void Image::text(int x, int y, const std::string& s, Rgb c, int scale) {
  int cx = x;
  for (char raw : s) {
    const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    auto it = font().find(ch);
    if (it != font().end())
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if (it->second[static_cast<std::size_t>(row)] & (4 >> col))
            fill_rect(cx + col * scale, y + row * scale, cx + col * scale + scale - 1, y + row * scale + scale - 1, c);
    cx += 4 * scale;
  }
}

void write_png(const Image& img, const std::filesystem::path& path) {
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width());
  pi.height = static_cast<png_uint_32>(img.height());
  pi.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&pi, path.c_str(), 0, img.pixels().data(), 0, nullptr))
    throw Error("cannot write PNG " + path.string() + ": " + pi.message);
}

Image read_png(const std::filesystem::path& path) {
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.c_str())) throw DataError("cannot read PNG " + path.string());
  pi.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&pi);
    throw DataError("cannot decode PNG " + path.string());
  }
  Image img(static_cast<int>(pi.width), static_cast<int>(pi.height));
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * img.width() + x) * 3;
      img.set(x, y, {buf[i], buf[i + 1], buf[i + 2]});
    }
  return img;
}

BevView BevView::fit(int width, int height, double x_max) {
  BevView v;
  v.width = width;
  v.height = height;
  v.meters_per_px = (x_max + 4.0 - v.x_min) / height;
  return v;
}

std::pair<double, double> BevView::to_px(double x, double y) const {
  return {0.5 * width - y / meters_per_px, height - (x - x_min) / meters_per_px};
}

namespace {

void draw_box(Image& img, const BevView& view, const Box3D& b, Rgb c) {
  std::array<std::pair<double, double>, 4> p;
  const double cs = std::cos(b.yaw), sn = std::sin(b.yaw);
  const double hl = 0.5 * b.length(), hw = 0.5 * b.width();
  const std::array<std::pair<double, double>, 4> local{{{hl, hw}, {hl, -hw}, {-hl, -hw}, {-hl, hw}}};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto [lx, ly] = local[i];
    p[i] = view.to_px(b.center.x() + cs * lx - sn * ly, b.center.y() + sn * lx + cs * ly);
  }
  for (std::size_t i = 0; i < 4; ++i) img.line(p[i].first, p[i].second, p[(i + 1) % 4].first, p[(i + 1) % 4].second, c);
  // Heading tick from the center to the front edge.
  const auto ctr = view.to_px(b.center.x(), b.center.y());
  const auto front = view.to_px(b.center.x() + cs * hl, b.center.y() + sn * hl);
  img.line(ctr.first, ctr.second, front.first, front.second, c);
}

std::string abbreviation(ObjectClass c) {
  switch (c) {
    case ObjectClass::kSedan: return "SED";
    case ObjectClass::kBusOrTruck: return "BUS";
    case ObjectClass::kPedestrian: return "PED";
    case ObjectClass::kMotorcycle: return "MOT";
    case ObjectClass::kBicycle: return "BIC";
  }
  return "?";
}

}  // namespace

Image render_bev(const std::vector<Box3D>& ground_truth, const std::vector<Box3D>& predictions,
                 const geometry::RegionOfInterest& roi, int width, int height, bool labels) {
  Image img(width, height, kBlack);
  const BevView view = BevView::fit(width, height, roi.x_bounds_m.second);
  const Rgb roi_color{160, 160, 160};
  const auto a = view.to_px(roi.x_bounds_m.first, roi.y_bounds_m.first);
  const auto b = view.to_px(roi.x_bounds_m.second, roi.y_bounds_m.second);
  img.line(a.first, a.second, a.first, b.second, roi_color, 4);
  img.line(a.first, b.second, b.first, b.second, roi_color, 4);
  img.line(b.first, b.second, b.first, a.second, roi_color, 4);
  img.line(b.first, a.second, a.first, a.second, roi_color, 4);
  for (const Box3D& g : ground_truth) draw_box(img, view, g, kWhite);
  for (const Box3D& p : predictions) {
    draw_box(img, view, p, kRed);
    if (labels) {
      std::ostringstream os;
      os << abbreviation(p.cls) << ' ' << std::fixed << std::setprecision(2) << p.score;
      const auto at = view.to_px(p.center.x(), p.center.y());
      img.text(static_cast<int>(at.first) + 6, static_cast<int>(at.second) - 4, os.str(), kRed, 1);
    }
  }
  return img;
}

Image render_pr(const nlohmann::json& report, const std::vector<std::string>& classes,
                const std::vector<std::string>& conditions, int width, int height, std::vector<std::string>* skipped) {
  Image img(width, height, kWhite);
  const int left = 40, right = width - 10, top = 10, bottom = height - 30;
  auto to_px = [&](double r, double p) {
    return std::pair<double, double>{left + r * (right - left), bottom - p * (bottom - top)};
  };
  const Rgb axis{40, 40, 40}, grid{210, 210, 210};
  for (int k = 0; k <= 5; ++k) {
    const double t = k / 5.0;
    auto [gx, gy0] = to_px(t, 0.0);
    auto [gx1, gy1] = to_px(t, 1.0);
    img.line(gx, gy0, gx1, gy1, grid, 2);
    auto [hx0, hy] = to_px(0.0, t);
    auto [hx1, hy1] = to_px(1.0, t);
    img.line(hx0, hy, hx1, hy1, grid, 2);
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << t;
    img.text(static_cast<int>(gx) - 6, bottom + 6, os.str(), axis, 1);
    img.text(4, static_cast<int>(hy) - 2, os.str(), axis, 1);
  }
  img.line(left, bottom, right, bottom, axis);
  img.line(left, bottom, left, top, axis);
  img.text(right - 40, bottom + 18, "RECALL", axis, 1);
  img.text(left + 4, top + 2, "PRECISION", axis, 1);

  static const std::array<Rgb, 8> palette{{{220, 30, 30},
                                           {30, 90, 220},
                                           {20, 160, 60},
                                           {230, 140, 0},
                                           {150, 40, 180},
                                           {0, 160, 170},
                                           {120, 80, 40},
                                           {90, 90, 90}}};
  auto selected = [](const std::vector<std::string>& filter, const std::string& v) {
    return filter.empty() || std::find(filter.begin(), filter.end(), v) != filter.end();
  };
  std::size_t curve = 0;
  int legend_y = top + 14;
  for (const auto& row : report.at("conditions")) {
    const std::string cond = row.at("condition").get<std::string>();
    if (!selected(conditions, cond)) continue;
    for (const auto& [cls, cell] : row.at("cells").items()) {
      if (!selected(classes, cls)) continue;
      const auto& bev = cell.at("BEV");
      const auto rec = bev.at("recall").get<std::vector<double>>();
      const auto prec = bev.at("precision").get<std::vector<double>>();
      if (rec.empty() || rec.size() != prec.size()) {
        if (skipped) skipped->push_back(cls + "/" + cond);
        continue;
      }
      const Rgb c = palette[curve++ % palette.size()];
      auto prev = to_px(0.0, prec.front());
      for (std::size_t i = 0; i < rec.size(); ++i) {
        const auto cur = to_px(std::clamp(rec[i], 0.0, 1.0), std::clamp(prec[i], 0.0, 1.0));
        img.line(prev.first, prev.second, cur.first, cur.second, c);
        prev = cur;
      }
      img.text(right - 130, legend_y, cls + " " + cond, c, 1);
      legend_y += 8;
    }
  }
  return img;
}

}  // namespace dinorade::raster
