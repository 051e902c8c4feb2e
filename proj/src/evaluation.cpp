#include "dinorade/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "dinorade/errors.hpp"

namespace dinorade::eval {

void EvalConfig::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ConfigError("iou_threshold must be in (0, 1)");
  if (interpolation_points < 2) throw ConfigError("interpolation_points must be >= 2");
  roi.validate();
}

std::vector<Eigen::Vector2d> bev_corners(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = 0.5 * b.length(), hw = 0.5 * b.width();
  std::vector<Eigen::Vector2d> out;
  for (auto [sx, sy] : {std::pair{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}) {
    const double lx = sx * hl, ly = sy * hw;
    out.emplace_back(b.center.x() + c * lx - s * ly, b.center.y() + s * lx + c * ly);
  }
  return out;
}

double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(a);
}

std::vector<Eigen::Vector2d> clip_convex(const std::vector<Eigen::Vector2d>& subject,
                                         const std::vector<Eigen::Vector2d>& clip) {
  std::vector<Eigen::Vector2d> out = subject;
  for (std::size_t i = 0; i < clip.size() && !out.empty(); ++i) {
    const Eigen::Vector2d a = clip[i], b = clip[(i + 1) % clip.size()];
    const Eigen::Vector2d e = b - a;
    auto side = [&](const Eigen::Vector2d& p) { return e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x()); };
    std::vector<Eigen::Vector2d> in = std::move(out);
    out.clear();
    for (std::size_t j = 0; j < in.size(); ++j) {
      const Eigen::Vector2d& p = in[j];
      const Eigen::Vector2d& q = in[(j + 1) % in.size()];
      const double sp = side(p), sq = side(q);
      if (sp >= 0) out.push_back(p);
      if ((sp >= 0) != (sq >= 0)) out.push_back(p + (q - p) * (sp / (sp - sq)));
    }
  }
  return out;
}

namespace {

double bev_intersection(const Box3D& a, const Box3D& b) {
  const auto pa = bev_corners(a), pb = bev_corners(b);
  const auto inter = clip_convex(pa, pb);
  return inter.size() < 3 ? 0.0 : polygon_area(inter);
}

double z_overlap(const Box3D& a, const Box3D& b) {
  const double lo = std::max(a.center.z() - 0.5 * a.height(), b.center.z() - 0.5 * b.height());
  const double hi = std::min(a.center.z() + 0.5 * a.height(), b.center.z() + 0.5 * b.height());
  return std::max(0.0, hi - lo);
}

}  // namespace

double rotated_iou_bev(const Box3D& a, const Box3D& b) {
  const double area_a = a.length() * a.width(), area_b = b.length() * b.width();
  if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;
  const double inter = std::min(bev_intersection(a, b), std::min(area_a, area_b));
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double va = a.dims.prod(), vb = b.dims.prod();
  if (!(va > 0.0) || !(vb > 0.0)) return 0.0;
  const double dz = z_overlap(a, b);
  if (dz <= 0.0) return 0.0;
  const double inter = std::min(bev_intersection(a, b) * dz, std::min(va, vb));
  const double uni = va + vb - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double interpolated_ap(const PrCurve& curve, int points) {
  // Running max of precision from the high-recall end.
  std::vector<double> best(curve.precision.size());
  double m = 0.0;
  for (std::size_t i = curve.precision.size(); i-- > 0;) {
    m = std::max(m, curve.precision[i]);
    best[i] = m;
  }
  auto at = [&](double level) {
    for (std::size_t i = 0; i < curve.recall.size(); ++i)
      if (curve.recall[i] >= level - 1e-12) return best[i];
    return 0.0;
  };
  double sum = 0.0;
  if (points == 11) {
    for (int k = 0; k <= 10; ++k) sum += at(k / 10.0);
    return sum / 11.0;
  }
  for (int k = 1; k <= points; ++k) sum += at(static_cast<double>(k) / points);
  return sum / points;
}

ApResult average_precision(const std::vector<std::vector<Box3D>>& dets, const std::vector<std::vector<Box3D>>& gts,
                           const EvalConfig& cfg, IouKind kind) {
  if (dets.size() != gts.size()) throw DataError("average_precision: detection and ground-truth frame counts differ");
  ApResult res;
  for (const auto& g : gts) res.n_gt += static_cast<int>(g.size());
  struct Ref {
    double score;
    std::size_t frame, index;
  };
  std::vector<Ref> order;
  for (std::size_t f = 0; f < dets.size(); ++f)
    for (std::size_t i = 0; i < dets[f].size(); ++i) order.push_back({dets[f][i].score, f, i});
  std::stable_sort(order.begin(), order.end(), [](const Ref& a, const Ref& b) { return a.score > b.score; });
  std::vector<std::vector<char>> used(gts.size());
  for (std::size_t f = 0; f < gts.size(); ++f) used[f].assign(gts[f].size(), 0);
  for (const Ref& r : order) {
    const Box3D& d = dets[r.frame][r.index];
    double best = -1.0;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < gts[r.frame].size(); ++j) {
      if (used[r.frame][j]) continue;
      const double iou = kind == IouKind::kBev ? rotated_iou_bev(d, gts[r.frame][j]) : iou_3d(d, gts[r.frame][j]);
      if (iou > best) {
        best = iou;
        best_j = j;
      }
    }
    if (best >= cfg.iou_threshold) {
      used[r.frame][best_j] = 1;
      ++res.tp;
    } else {
      ++res.fp;
    }
    if (res.n_gt > 0) {
      res.curve.recall.push_back(static_cast<double>(res.tp) / res.n_gt);
      res.curve.precision.push_back(static_cast<double>(res.tp) / (res.tp + res.fp));
    }
  }
  if (res.n_gt > 0) res.ap = interpolated_ap(res.curve, cfg.interpolation_points);
  return res;
}

namespace {

CellResult evaluate_cell(const std::vector<const GroundTruthFrame*>& frames,
                         const std::map<std::string, std::vector<Box3D>>& detections, ObjectClass cls,
                         const EvalConfig& cfg) {
  std::vector<std::vector<Box3D>> d(frames.size()), g(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const Box3D& b : frames[f]->boxes)
      if (b.cls == cls && geometry::roi_contains(b, cfg.roi)) g[f].push_back(b);
    auto it = detections.find(frames[f]->frame_id);
    if (it != detections.end())
      for (const Box3D& b : it->second)
        if (b.cls == cls && geometry::roi_contains(b, cfg.roi)) d[f].push_back(b);
  }
  return {average_precision(d, g, cfg, IouKind::kBev), average_precision(d, g, cfg, IouKind::k3d)};
}

std::optional<double> mean_ap(const std::array<CellResult, kNumClasses>& row, bool bev) {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : row) {
    const auto& ap = bev ? c.bev.ap : c.d3.ap;
    if (ap) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json ap_json(const ApResult& r) {
  return {{"ap", opt_json(r.ap)},  {"n_gt", r.n_gt},
          {"tp", r.tp},            {"fp", r.fp},
          {"recall", r.curve.recall}, {"precision", r.curve.precision}};
}

}  // namespace

EvalReport build_report(const std::map<std::string, std::vector<Box3D>>& detections,
                        const std::vector<GroundTruthFrame>& ground_truth, const EvalConfig& cfg) {
  cfg.validate();
  std::set<std::string> ids;
  std::set<std::string> conditions;
  for (const auto& f : ground_truth) {
    if (!ids.insert(f.frame_id).second) throw DataError("duplicate frame id '" + f.frame_id + "'");
    conditions.insert(f.condition_tag);
  }
  for (const auto& [id, _] : detections)
    if (!ids.count(id)) throw DataError("detections reference unknown frame id '" + id + "'");

  EvalReport rep;
  rep.config = cfg;
  rep.conditions.assign(conditions.begin(), conditions.end());
  rep.conditions.push_back(kTotalRow);
  for (const std::string& cond : rep.conditions) {
    std::vector<const GroundTruthFrame*> frames;
    for (const auto& f : ground_truth)
      if (cond == kTotalRow || f.condition_tag == cond) frames.push_back(&f);
    auto& row = rep.cells[cond];
    for (ObjectClass c : kAllClasses) row[static_cast<std::size_t>(class_index(c))] = evaluate_cell(frames, detections, c, cfg);
    rep.map_bev[cond] = mean_ap(row, true);
    rep.map_3d[cond] = mean_ap(row, false);
  }
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["iou_threshold"] = config.iou_threshold;
  j["interpolation_points"] = config.interpolation_points;
  j["classes"] = nlohmann::json::array();
  for (ObjectClass c : kAllClasses) j["classes"].push_back(std::string(class_id(c)));
  j["conditions"] = nlohmann::json::array();
  for (const std::string& cond : conditions) {
    nlohmann::json row;
    row["condition"] = cond;
    row["mAP_BEV"] = opt_json(map_bev.at(cond));
    row["mAP_3D"] = opt_json(map_3d.at(cond));
    for (ObjectClass c : kAllClasses) {
      const CellResult& cell = cells.at(cond)[static_cast<std::size_t>(class_index(c))];
      row["cells"][std::string(class_id(c))] = {{"BEV", ap_json(cell.bev)}, {"3D", ap_json(cell.d3)}};
    }
    j["conditions"].push_back(row);
  }
  return j;
}

std::string EvalReport::to_text() const {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << 100.0 * *v;
    return os.str();
  };
  std::size_t cond_w = 9;
  for (const auto& c : conditions) cond_w = std::max(cond_w, c.size() + 1);
  std::ostringstream os;
  for (bool bev : {true, false}) {
    os << (bev ? "AP_BEV" : "AP_3D") << " @ IoU " << config.iou_threshold << " (" << config.interpolation_points
       << "-point)\n";
    os << std::left << std::setw(static_cast<int>(cond_w)) << "Condition";
    for (ObjectClass c : kAllClasses) os << std::right << std::setw(14) << class_display_name(c);
    os << std::setw(8) << "mAP" << '\n';
    for (const std::string& cond : conditions) {
      os << std::left << std::setw(static_cast<int>(cond_w)) << cond;
      for (ObjectClass c : kAllClasses) {
        const CellResult& cell = cells.at(cond)[static_cast<std::size_t>(class_index(c))];
        os << std::right << std::setw(14) << fmt(bev ? cell.bev.ap : cell.d3.ap);
      }
      os << std::setw(8) << fmt(bev ? map_bev.at(cond) : map_3d.at(cond)) << '\n';
    }
    os << '\n';
  }
  os << "(-) no ground truth of this class under this condition\n";
  return os.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  std::ofstream js(directory / "report.json");
  std::ofstream tx(directory / "report.txt");
  if (!js || !tx) throw Error("cannot write report into " + directory.string());
  js << report.to_json().dump(2) << '\n';
  tx << report.to_text();
}

}  // namespace dinorade::eval
