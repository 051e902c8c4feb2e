#include "dinorade/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "dinorade/errors.hpp"

namespace dinorade::loss {

void LossWeights::validate() const {
  if (w_focal < 0 || w_gwd < 0 || w_l1 < 0) throw ConfigError("loss weights must be non-negative");
  if (w_focal + w_gwd + w_l1 <= 0) throw ConfigError("at least one loss weight must be positive");
  if (!(gwd_tau > 0)) throw ConfigError("gwd_tau must be positive");
}

Tensor focal_loss(const Tensor& pred, std::span<const double> target, const FocalConfig& cfg) {
  if (pred.size() != target.size()) throw ConfigError("focal_loss: prediction and target sizes differ");
  const double a = cfg.alpha, b = cfg.beta, eps = cfg.eps;
  auto p_in = pred.data();
  double n_pos = 0.0;
  for (double t : target) n_pos += t == 1.0 ? 1.0 : 0.0;
  const double norm = std::max(n_pos, 1.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double p = std::clamp(p_in[i], eps, 1.0 - eps), t = target[i];
    if (t == 1.0)
      acc += std::pow(1.0 - p, a) * std::log(p);
    else
      acc += std::pow(1.0 - t, b) * std::pow(p, a) * std::log(1.0 - p);
  }
  std::vector<double> tgt(target.begin(), target.end());
  return ag::make_result({}, {-acc / norm}, {&pred},
                         [pn = pred.node(), tgt = std::move(tgt), a, b, eps, norm](ag::Node& o) {
                           auto& g = pn->ensure_grad();
                           const double up = -o.grad[0] / norm;
                           for (std::size_t i = 0; i < tgt.size(); ++i) {
                             const double raw = pn->value[i];
                             if (raw < eps || raw > 1.0 - eps) continue;
                             const double p = raw, t = tgt[i];
                             double d;
                             if (t == 1.0)
                               d = -a * std::pow(1.0 - p, a - 1.0) * std::log(p) + std::pow(1.0 - p, a) / p;
                             else
                               d = std::pow(1.0 - t, b) *
                                   (a * std::pow(p, a - 1.0) * std::log(1.0 - p) - std::pow(p, a) / (1.0 - p));
                             g[i] += up * d;
                           }
                         });
}

namespace {

// Forward-mode dual number with N tangent directions.
template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit constant lift

  static Dual variable(double value, int k) {
    Dual x(value);
    x.d[static_cast<std::size_t>(k)] = 1.0;
    return x;
  }
};

template <int N>
Dual<N> operator+(const Dual<N>& x, const Dual<N>& y) {
  Dual<N> r(x.v + y.v);
  for (int i = 0; i < N; ++i) r.d[i] = x.d[i] + y.d[i];
  return r;
}
template <int N>
Dual<N> operator-(const Dual<N>& x, const Dual<N>& y) {
  Dual<N> r(x.v - y.v);
  for (int i = 0; i < N; ++i) r.d[i] = x.d[i] - y.d[i];
  return r;
}
template <int N>
Dual<N> operator*(const Dual<N>& x, const Dual<N>& y) {
  Dual<N> r(x.v * y.v);
  for (int i = 0; i < N; ++i) r.d[i] = x.d[i] * y.v + x.v * y.d[i];
  return r;
}
template <int N>
Dual<N> operator/(const Dual<N>& x, const Dual<N>& y) {
  Dual<N> r(x.v / y.v);
  for (int i = 0; i < N; ++i) r.d[i] = (x.d[i] * y.v - x.v * y.d[i]) / (y.v * y.v);
  return r;
}
template <int N>
Dual<N> unary(const Dual<N>& x, double value, double slope) {
  Dual<N> r(value);
  for (int i = 0; i < N; ++i) r.d[i] = slope * x.d[i];
  return r;
}

double value_of(double x) { return x; }
template <int N>
double value_of(const Dual<N>& x) {
  return x.v;
}

double dsqrt(double x) { return std::sqrt(x); }
double dlog(double x) { return std::log(x); }
template <int N>
Dual<N> dsqrt(const Dual<N>& x) {
  const double s = std::sqrt(x.v);
  return unary(x, s, 0.5 / s);
}
template <int N>
Dual<N> dexp(const Dual<N>& x) {
  const double e = std::exp(x.v);
  return unary(x, e, e);
}
template <int N>
Dual<N> dlog(const Dual<N>& x) {
  return unary(x, std::log(x.v), 1.0 / x.v);
}
template <int N>
Dual<N> dsin(const Dual<N>& x) {
  return unary(x, std::sin(x.v), std::cos(x.v));
}
template <int N>
Dual<N> dcos(const Dual<N>& x) {
  return unary(x, std::cos(x.v), -std::sin(x.v));
}
template <class T>
T floor_at(const T& x, double lo) {
  return value_of(x) < lo ? T(lo) : x;
}

// BEV Gaussian parameters in closed form: mean (mx, my) and covariance
// entries (sxx, sxy, syy) from cos/sin of yaw and half-extents.
template <class T>
struct BevGaussian {
  T mx, my, sxx, sxy, syy;
  T det;  // a * b, exact; sxx * syy - sxy^2 cancels badly for thin boxes
};

template <class T>
BevGaussian<T> bev_gaussian(const T& x, const T& y, const T& length, const T& width, const T& c, const T& s) {
  const T a = floor_at(length, 1e-6) * floor_at(length, 1e-6) * T(0.25);
  const T b = floor_at(width, 1e-6) * floor_at(width, 1e-6) * T(0.25);
  return {x, y, c * c * a + s * s * b, c * s * (a - b), s * s * a + c * c * b, a * b};
}

template <class T>
T wasserstein_sq(const BevGaussian<T>& p, const BevGaussian<T>& q) {
  const T dx = p.mx - q.mx, dy = p.my - q.my;
  const T tr_p = p.sxx + p.syy, tr_q = q.sxx + q.syy;
  // tr((P^1/2 Q P^1/2)^1/2) = sqrt(tr(PQ) + 2 sqrt(det P det Q)) for 2x2 SPD.
  const T tr_pq = p.sxx * q.sxx + T(2.0) * p.sxy * q.sxy + p.syy * q.syy;
  const T cross = dsqrt(floor_at(tr_pq + T(2.0) * dsqrt(p.det * q.det), 0.0));
  const T d2 = dx * dx + dy * dy + tr_p + tr_q - T(2.0) * cross;
  return value_of(d2) < 0.0 ? T(0.0) : d2;
}

template <class T>
BevGaussian<T> gaussian_of(const Box3D& b) {
  return bev_gaussian(T(b.center.x()), T(b.center.y()), T(b.length()), T(b.width()), T(std::cos(b.yaw)),
                      T(std::sin(b.yaw)));
}

template <class T>
T gwd_from_d2(const T& d2, double tau) {
  return T(1.0) - T(1.0) / (T(tau) + dlog(T(1.0) + d2));
}

// Regression channels entering the BEV box: offsets, z, log l, log w, sin, cos.
constexpr std::array<int, 7> kGwdChannels{head::kOffsetRange, head::kOffsetAzimuth, head::kHeight,
                                          head::kLogLength,   head::kLogWidth,      head::kSinYaw,
                                          head::kCosYaw};
using D7 = Dual<7>;

D7 predicted_gwd(const double* reg, int r, int a, const geometry::GridSpec& grid, const Box3D& gt, double tau) {
  std::array<D7, 7> x;
  for (int k = 0; k < 7; ++k) x[static_cast<std::size_t>(k)] = D7::variable(reg[kGwdChannels[static_cast<std::size_t>(k)]], k);
  const D7 range = D7(grid.range_bounds_m.first) + (D7(r + 0.5) + x[0]) * D7(grid.range_step());
  const D7 az = D7(grid.azimuth_bounds_rad.first) + (D7(a + 0.5) + x[1]) * D7(grid.azimuth_step());
  const D7 ground = dsqrt(floor_at(range * range - x[2] * x[2], 1e-6));
  const D7 norm = dsqrt(x[5] * x[5] + x[6] * x[6] + D7(1e-12));
  const auto p = bev_gaussian(ground * dcos(az), ground * dsin(az), dexp(x[3]), dexp(x[4]), x[6] / norm,
                              x[5] / norm);
  return gwd_from_d2(wasserstein_sq(p, gaussian_of<D7>(gt)), tau);
}

}  // namespace

Gaussian2 box_to_gaussian(const Box3D& box) {
  const auto g = gaussian_of<double>(box);
  Gaussian2 out;
  out.mean = {g.mx, g.my};
  out.cov << g.sxx, g.sxy, g.sxy, g.syy;
  return out;
}

double gwd_distance_sq(const Box3D& a, const Box3D& b) {
  return wasserstein_sq(gaussian_of<double>(a), gaussian_of<double>(b));
}

double gwd_loss(const Box3D& a, const Box3D& b, double tau) { return gwd_from_d2(gwd_distance_sq(a, b), tau); }

Tensor gwd_term(const Tensor& regression, const head::TargetMaps& targets, const geometry::GridSpec& grid,
                double tau) {
  const std::size_t bins = targets.mask.size();
  if (regression.size() != bins * head::kRegressionChannels)
    throw ConfigError("gwd_term: regression does not match the target grid");
  auto reg = regression.data();
  double acc = 0.0;
  int count = 0;
  std::vector<double> grad(regression.size(), 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    if (!targets.mask[b]) continue;
    const int r = static_cast<int>(b / targets.n_azimuth), a = static_cast<int>(b % targets.n_azimuth);
    const D7 l = predicted_gwd(reg.data() + b * head::kRegressionChannels, r, a, grid,
                               targets.boxes[static_cast<std::size_t>(targets.box_index[b])], tau);
    acc += l.v;
    for (int k = 0; k < 7; ++k)
      grad[b * head::kRegressionChannels + kGwdChannels[static_cast<std::size_t>(k)]] = l.d[static_cast<std::size_t>(k)];
    ++count;
  }
  const double norm = std::max(count, 1);
  return ag::make_result({}, {acc / norm}, {&regression},
                         [rn = regression.node(), grad = std::move(grad), norm](ag::Node& o) {
                           auto& g = rn->ensure_grad();
                           const double up = o.grad[0] / norm;
                           for (std::size_t i = 0; i < grad.size(); ++i) g[i] += up * grad[i];
                         });
}

Tensor smooth_l1(const Tensor& pred, std::span<const double> target, std::span<const std::uint8_t> mask) {
  if (pred.size() != target.size() || pred.size() != mask.size())
    throw ConfigError("smooth_l1: prediction, target and mask sizes differ");
  auto p = pred.data();
  double acc = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    const double d = std::abs(p[i] - target[i]);
    acc += d < 1.0 ? 0.5 * d * d : d - 0.5;
    ++count;
  }
  const double norm = std::max(count, 1);
  std::vector<double> tgt(target.begin(), target.end());
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return ag::make_result({}, {acc / norm}, {&pred},
                         [pn = pred.node(), tgt = std::move(tgt), m = std::move(m), norm](ag::Node& o) {
                           auto& g = pn->ensure_grad();
                           const double up = o.grad[0] / norm;
                           for (std::size_t i = 0; i < tgt.size(); ++i) {
                             if (!m[i]) continue;
                             const double d = pn->value[i] - tgt[i];
                             g[i] += up * std::clamp(d, -1.0, 1.0);
                           }
                         });
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"total", total.item()}, {"focal", focal}, {"gwd", gwd}, {"l1", l1}};
}

LossBreakdown total_loss(const head::HeadOutput& out, const head::TargetMaps& targets,
                         const geometry::GridSpec& grid, const LossWeights& weights, const FocalConfig& focal) {
  weights.validate();
  const Tensor lf = focal_loss(out.heatmaps, targets.heatmap, focal);
  const Tensor lg = gwd_term(out.regression, targets, grid, weights.gwd_tau);
  std::vector<std::uint8_t> mask(out.regression.size(), 0);
  for (std::size_t b = 0; b < targets.mask.size(); ++b)
    if (targets.mask[b])
      for (int c : {head::kHeight, head::kLogLength, head::kLogWidth, head::kLogHeight, head::kSinYaw,
                    head::kCosYaw})
        mask[b * head::kRegressionChannels + static_cast<std::size_t>(c)] = 1;
  const Tensor ll = smooth_l1(out.regression, targets.regression, mask);
  LossBreakdown r;
  r.focal = lf.item();
  r.gwd = lg.item();
  r.l1 = ll.item();
  r.total = ag::add(ag::add(ag::scale(lf, weights.w_focal), ag::scale(lg, weights.w_gwd)),
                    ag::scale(ll, weights.w_l1));
  return r;
}

}  // namespace dinorade::loss
