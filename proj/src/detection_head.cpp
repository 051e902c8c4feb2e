#include "dinorade/detection_head.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dinorade/errors.hpp"

namespace dinorade::head {

DetectionHead::DetectionHead(nn::ParameterStore& store, std::mt19937_64& rng, int channels, double prior_bias)
    : channels_(channels) {
  cls_hidden_ = nn::Conv2d::create(store, rng, "head.cls.0", channels, channels, 3);
  cls_out_ = nn::Conv2d::create(store, rng, "head.cls.1", channels, kNumClasses, 1);
  reg_hidden_ = nn::Conv2d::create(store, rng, "head.reg.0", channels, channels, 3);
  reg_out_ = nn::Conv2d::create(store, rng, "head.reg.1", channels, kRegressionChannels, 1);
  // Zero output layers: every bin starts at the prior score and a unit box.
  for (Tensor t : {cls_out_.weight, reg_out_.weight})
    for (double& w : t.mutable_data()) w = 0.0;
  Tensor bias = cls_out_.bias;
  for (double& b : bias.mutable_data()) b = prior_bias;
}

HeadOutput DetectionHead::operator()(const Tensor& m_f) const {
  if (m_f.rank() != 3 || m_f.dim(2) != channels_)
    throw ConfigError("head expects {R, A, " + std::to_string(channels_) + "}, got " + ag::shape_str(m_f.shape()));
  HeadOutput out;
  const Tensor logits = cls_out_(ag::relu(cls_hidden_(m_f)));
  out.heatmaps = ag::clamp(ag::sigmoid(logits), 1e-12, 1.0 - 1e-12);
  out.regression = reg_out_(ag::relu(reg_hidden_(m_f)));
  return out;
}

std::pair<double, double> center_bins(const Box3D& box, const geometry::GridSpec& grid) {
  const geometry::PolarCoord p = geometry::cartesian_to_polar(box.center);
  return {grid.range_to_bin(p.range_m), grid.azimuth_to_bin(p.azimuth_rad)};
}

double gaussian_peak(double dr_bins, double da_bins, double sigma) {
  return std::exp(-(dr_bins * dr_bins + da_bins * da_bins) / (2.0 * sigma * sigma));
}

namespace {

bool center_bin(const Box3D& box, const geometry::GridSpec& grid, int& r, int& a, double& ur, double& ua) {
  if (box.center.norm() == 0.0) return false;
  std::tie(ur, ua) = center_bins(box, grid);
  r = static_cast<int>(std::lround(ur));
  a = static_cast<int>(std::lround(ua));
  return r >= 0 && r < grid.n_range && a >= 0 && a < grid.n_azimuth;
}

}  // namespace

TargetMaps render_targets(const std::vector<Box3D>& gt_boxes, const geometry::GridSpec& grid, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  TargetMaps t;
  t.n_range = grid.n_range;
  t.n_azimuth = grid.n_azimuth;
  const std::size_t bins = static_cast<std::size_t>(grid.n_range) * grid.n_azimuth;
  t.heatmap.assign(bins * kNumClasses, 0.0);
  t.regression.assign(bins * kRegressionChannels, 0.0);
  t.mask.assign(bins, 0);
  t.box_index.assign(bins, -1);
  t.boxes = gt_boxes;
  for (std::size_t k = 0; k < gt_boxes.size(); ++k) {
    const Box3D& b = gt_boxes[k];
    int r0 = 0, a0 = 0;
    double ur = 0.0, ua = 0.0;
    if (!center_bin(b, grid, r0, a0, ur, ua)) {
      ++t.skipped;
      continue;
    }
    const int c = class_index(b.cls);
    for (int r = 0; r < grid.n_range; ++r)
      for (int a = 0; a < grid.n_azimuth; ++a) {
        double& h = t.heatmap[t.bin(r, a) * kNumClasses + c];
        h = std::max(h, gaussian_peak(r - r0, a - a0, sigma));
      }
    const std::size_t bi = t.bin(r0, a0);
    double* reg = t.regression.data() + bi * kRegressionChannels;
    reg[kOffsetRange] = ur - r0;
    reg[kOffsetAzimuth] = ua - a0;
    reg[kHeight] = b.center.z();
    reg[kLogLength] = std::log(b.length());
    reg[kLogWidth] = std::log(b.width());
    reg[kLogHeight] = std::log(b.height());
    reg[kSinYaw] = std::sin(b.yaw);
    reg[kCosYaw] = std::cos(b.yaw);
    t.mask[bi] = 1;
    t.box_index[bi] = static_cast<int>(k);
  }
  return t;
}

int support_area(const Box3D& box, const geometry::GridSpec& grid, double sigma, double level) {
  const TargetMaps t = render_targets({box}, grid, sigma);
  const int c = class_index(box.cls);
  int n = 0;
  for (std::size_t b = 0; b < t.mask.size(); ++b)
    if (t.heatmap[b * kNumClasses + c] > level) ++n;
  return n;
}

Box3D decode_bin(std::span<const double> reg, int r, int a, const geometry::GridSpec& grid) {
  Box3D b;
  const double range = grid.bin_to_range(r + reg[kOffsetRange]);
  const double az = grid.bin_to_azimuth(a + reg[kOffsetAzimuth]);
  b.center = geometry::point_from_range_azimuth_height(range, az, reg[kHeight]);
  b.dims = {std::exp(reg[kLogLength]), std::exp(reg[kLogWidth]), std::exp(reg[kLogHeight])};
  b.yaw = std::atan2(reg[kSinYaw], reg[kCosYaw]);
  return b;
}

std::vector<Box3D> decode(std::span<const double> heatmaps, std::span<const double> regression,
                          const geometry::GridSpec& grid, const DecodeConfig& cfg) {
  const int nr = grid.n_range, na = grid.n_azimuth;
  const std::size_t bins = static_cast<std::size_t>(nr) * na;
  if (heatmaps.size() != bins * kNumClasses || regression.size() != bins * kRegressionChannels)
    throw ConfigError("decode: head output does not match the grid");
  struct Peak {
    double score;
    int cls;
    std::size_t bin;
  };
  std::vector<Peak> all;
  for (int c = 0; c < kNumClasses; ++c) {
    auto at = [&](std::size_t b) { return heatmaps[b * kNumClasses + c]; };
    std::vector<Peak> peaks;
    for (int r = 0; r < nr; ++r)
      for (int a = 0; a < na; ++a) {
        const std::size_t b = static_cast<std::size_t>(r) * na + a;
        const double v = at(b);
        if (!(v >= cfg.score_threshold)) continue;
        bool keep = true;
        for (int dr = -1; dr <= 1 && keep; ++dr)
          for (int da = -1; da <= 1 && keep; ++da) {
            const int rr = r + dr, aa = a + da;
            if ((dr == 0 && da == 0) || rr < 0 || rr >= nr || aa < 0 || aa >= na) continue;
            const std::size_t nb = static_cast<std::size_t>(rr) * na + aa;
            const double w = at(nb);
            if (w > v || (w == v && nb < b)) keep = false;
          }
        if (keep) peaks.push_back({v, c, b});
      }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& x, const Peak& y) { return x.score > y.score; });
    if (static_cast<int>(peaks.size()) > cfg.top_k) peaks.resize(static_cast<std::size_t>(std::max(cfg.top_k, 0)));
    all.insert(all.end(), peaks.begin(), peaks.end());
  }
  std::stable_sort(all.begin(), all.end(), [](const Peak& x, const Peak& y) { return x.score > y.score; });
  std::vector<Box3D> out;
  out.reserve(all.size());
  for (const Peak& p : all) {
    const int r = static_cast<int>(p.bin / na), a = static_cast<int>(p.bin % na);
    Box3D b = decode_bin(regression.subspan(p.bin * kRegressionChannels, kRegressionChannels), r, a, grid);
    b.cls = kAllClasses[static_cast<std::size_t>(p.cls)];
    b.score = p.score;
    out.push_back(b);
  }
  return out;
}

std::vector<Box3D> decode(const HeadOutput& out, const geometry::GridSpec& grid, const DecodeConfig& cfg) {
  return decode(out.heatmaps.data(), out.regression.data(), grid, cfg);
}

nlohmann::json detection_to_json(const std::string& frame_id, const Box3D& box) {
  return {{"frame_id", frame_id},
          {"class", std::string(class_id(box.cls))},
          {"score", box.score},
          {"center", {box.center.x(), box.center.y(), box.center.z()}},
          {"dims", {box.dims.x(), box.dims.y(), box.dims.z()}},
          {"yaw", box.yaw}};
}

Box3D detection_from_json(const nlohmann::json& j) {
  Box3D b;
  const auto cls = parse_class(j.at("class").get<std::string>());
  if (!cls) throw DataError("unknown class '" + j.at("class").get<std::string>() + "'");
  b.cls = *cls;
  b.score = j.value("score", 1.0);
  const auto c = j.at("center").get<std::vector<double>>();
  const auto d = j.at("dims").get<std::vector<double>>();
  if (c.size() != 3 || d.size() != 3) throw DataError("center and dims need 3 entries");
  b.center = {c[0], c[1], c[2]};
  b.dims = {d[0], d[1], d[2]};
  b.yaw = j.at("yaw").get<double>();
  return b;
}

void write_detections(std::ostream& os, const std::string& frame_id, const std::vector<Box3D>& boxes) {
  for (const Box3D& b : boxes) os << detection_to_json(frame_id, b).dump() << '\n';
}

std::map<std::string, std::vector<Box3D>> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open detections file " + path.string());
  std::map<std::string, std::vector<Box3D>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[j.at("frame_id").get<std::string>()].push_back(detection_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace dinorade::head
