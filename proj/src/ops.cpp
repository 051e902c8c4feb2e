#include "dinorade/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "dinorade/errors.hpp"

namespace dinorade::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
}

void accumulate(const NodePtr& target, const Buffer& g) {
  if (!target->requires_grad) return;
  auto& dst = target->ensure_grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
  Buffer out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), {&x}, [xn = x.node(), df](Node& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * df(xn->value[i], o.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [an = a.node(), bn = b.node()](Node& o) {
                       accumulate(an, o.grad);
                       accumulate(bn, o.grad);
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [an = a.node(), bn = b.node()](Node& o) {
                       accumulate(an, o.grad);
                       if (bn->requires_grad) {
                         auto& g = bn->ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [an = a.node(), bn = b.node()](Node& o) {
                       if (an->requires_grad) {
                         auto& g = an->ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bn->value[i];
                       }
                       if (bn->requires_grad) {
                         auto& g = bn->ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * an->value[i];
                       }
                     });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log1p(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log1p(v); }, [](double v, double) { return 1.0 / (1.0 + v); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return v >= lo && v <= hi ? 1.0 : 0.0; });
}

Tensor softmax_last(const Tensor& x) {
  const int n = x.dim(-1);
  const std::size_t rows = x.size() / static_cast<std::size_t>(n);
  Buffer out(x.size());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = in.data() + r * n;
    double* yi = out.data() + r * n;
    const double m = *std::max_element(xi, xi + n);
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += (yi[k] = std::exp(xi[k] - m));
    for (int k = 0; k < n; ++k) yi[k] /= s;
  }
  return make_result(x.shape(), std::move(out), {&x}, [xn = x.node(), n, rows](Node& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = o.value.data() + r * n;
      const double* gy = o.grad.data() + r * n;
      double dot = 0.0;
      for (int k = 0; k < n; ++k) dot += y[k] * gy[k];
      for (int k = 0; k < n; ++k) g[r * n + k] += y[k] * (gy[k] - dot);
    }
  });
}

Tensor standardize(const Tensor& x, double eps) {
  const std::size_t n = x.size();
  auto in = x.data();
  double mean = 0.0;
  for (double v : in) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : in) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + eps);
  Buffer out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (in[i] - mean) * inv_std;
  return make_result(x.shape(), std::move(out), {&x}, [xn = x.node(), inv_std, n](Node& o) {
    // dx = inv_std * (g - mean(g) - y * mean(g*y))
    double mg = 0.0, mgy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mg += o.grad[i];
      mgy += o.grad[i] * o.value[i];
    }
    mg /= static_cast<double>(n);
    mgy /= static_cast<double>(n);
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) g[i] += inv_std * (o.grad[i] - mg - o.value[i] * mgy);
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({1}, {s}, {&x}, [xn = x.node()](Node& o) {
    auto& g = xn->ensure_grad();
    for (double& v : g) v += o.grad[0];
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  if (weight.rank() != 2) throw ConfigError("linear: weight must be {Cin, Cout}");
  const int cin = weight.dim(0), cout = weight.dim(1);
  if (x.dim(-1) != cin)
    throw ConfigError("linear: input " + shape_str(x.shape()) + " vs weight " +
                      shape_str(weight.shape()));
  if (bias && (bias->rank() != 1 || bias->dim(0) != cout))
    throw ConfigError("linear: bias must be {Cout}");
  const Eigen::Index rows = static_cast<Eigen::Index>(x.size() / cin);
  Shape out_shape = x.shape();
  out_shape.back() = cout;
  Buffer out(static_cast<std::size_t>(rows) * cout);
  MapMat y(out.data(), rows, cout);
  y.noalias() = CMapMat(x.data().data(), rows, cin) * CMapMat(weight.data().data(), cin, cout);
  if (bias) y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias->data().data(), cout);

  const Tensor empty;
  const Tensor& b = bias ? *bias : empty;
  return make_result(
      std::move(out_shape), std::move(out), {&x, &weight, &b},
      [xn = x.node(), wn = weight.node(), bn = bias ? bias->node() : NodePtr{}, rows, cin,
       cout](Node& o) {
        CMapMat gy(o.grad.data(), rows, cout);
        if (xn->requires_grad) {
          MapMat gx(xn->ensure_grad().data(), rows, cin);
          gx.noalias() += gy * CMapMat(wn->value.data(), cin, cout).transpose();
        }
        if (wn->requires_grad) {
          MapMat gw(wn->ensure_grad().data(), cin, cout);
          gw.noalias() += CMapMat(xn->value.data(), rows, cin).transpose() * gy;
        }
        if (bn && bn->requires_grad) {
          Eigen::Map<Eigen::RowVectorXd> gb(bn->ensure_grad().data(), cout);
          gb += gy.colwise().sum();
        }
      });
}

namespace {

struct ConvGeom {
  int h, w, cin, k, stride, pad, ho, wo;
  Eigen::Index patch() const { return static_cast<Eigen::Index>(k) * k * cin; }
  Eigen::Index positions() const { return static_cast<Eigen::Index>(ho) * wo; }
};

void im2col(const double* x, const ConvGeom& g, double* cols) {
  const Eigen::Index patch = g.patch();
  for (int oy = 0; oy < g.ho; ++oy) {
    for (int ox = 0; ox < g.wo; ++ox) {
      double* row = cols + (static_cast<Eigen::Index>(oy) * g.wo + ox) * patch;
      for (int ky = 0; ky < g.k; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        for (int kx = 0; kx < g.k; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          double* dst = row + (ky * g.k + kx) * g.cin;
          if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) {
            std::fill(dst, dst + g.cin, 0.0);
          } else {
            const double* src = x + (static_cast<std::size_t>(iy) * g.w + ix) * g.cin;
            std::copy(src, src + g.cin, dst);
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeom& g, double* gx) {
  const Eigen::Index patch = g.patch();
  for (int oy = 0; oy < g.ho; ++oy) {
    for (int ox = 0; ox < g.wo; ++ox) {
      const double* row = cols + (static_cast<Eigen::Index>(oy) * g.wo + ox) * patch;
      for (int ky = 0; ky < g.k; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.h) continue;
        for (int kx = 0; kx < g.k; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix < 0 || ix >= g.w) continue;
          const double* src = row + (ky * g.k + kx) * g.cin;
          double* dst = gx + (static_cast<std::size_t>(iy) * g.w + ix) * g.cin;
          for (int c = 0; c < g.cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride, int pad) {
  if (x.rank() != 3) throw ConfigError("conv2d: input must be {H, W, C}, got " + shape_str(x.shape()));
  if (weight.rank() != 4 || weight.dim(0) != weight.dim(1))
    throw ConfigError("conv2d: weight must be {K, K, Cin, Cout}");
  if (weight.dim(2) != x.dim(2))
    throw ConfigError("conv2d: input channels " + std::to_string(x.dim(2)) + " vs weight " +
                      shape_str(weight.shape()));
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), weight.dim(0), stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ConfigError("conv2d: empty output");
  const int cout = weight.dim(3);
  if (bias && (bias->rank() != 1 || bias->dim(0) != cout)) throw ConfigError("conv2d: bias must be {Cout}");

  const bool direct = g.k == 1 && stride == 1 && pad == 0;
  Buffer cols;
  if (!direct) {
    cols.resize(static_cast<std::size_t>(g.positions() * g.patch()));
    im2col(x.data().data(), g, cols.data());
  }
  const double* colp = direct ? x.data().data() : cols.data();

  Buffer out(static_cast<std::size_t>(g.positions()) * cout);
  MapMat y(out.data(), g.positions(), cout);
  y.noalias() = CMapMat(colp, g.positions(), g.patch()) * CMapMat(weight.data().data(), g.patch(), cout);
  if (bias) y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias->data().data(), cout);

  const Tensor empty;
  const Tensor& b = bias ? *bias : empty;
  return make_result(
      {g.ho, g.wo, cout}, std::move(out), {&x, &weight, &b},
      [xn = x.node(), wn = weight.node(), bn = bias ? bias->node() : NodePtr{}, g, cout, direct,
       cols = std::move(cols)](Node& o) {
        CMapMat gy(o.grad.data(), g.positions(), cout);
        const double* colp = direct ? xn->value.data() : cols.data();
        if (wn->requires_grad) {
          MapMat gw(wn->ensure_grad().data(), g.patch(), cout);
          gw.noalias() += CMapMat(colp, g.positions(), g.patch()).transpose() * gy;
        }
        if (bn && bn->requires_grad) {
          Eigen::Map<Eigen::RowVectorXd> gb(bn->ensure_grad().data(), cout);
          gb += gy.colwise().sum();
        }
        if (xn->requires_grad) {
          CMapMat w(wn->value.data(), g.patch(), cout);
          if (direct) {
            MapMat gx(xn->ensure_grad().data(), g.positions(), g.patch());
            gx.noalias() += gy * w.transpose();
          } else {
            RowMat gcols = gy * w.transpose();
            col2im_add(gcols.data(), g, xn->ensure_grad().data());
          }
        }
      });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank()) throw ConfigError("concat_last: rank mismatch");
  for (int i = 0; i + 1 < a.rank(); ++i)
    if (a.dim(i) != b.dim(i))
      throw ConfigError("concat_last: leading shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  const int ca = a.dim(-1), cb = b.dim(-1);
  const std::size_t rows = a.size() / ca;
  Shape shape = a.shape();
  shape.back() = ca + cb;
  Buffer out(rows * (ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.data().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return make_result(std::move(shape), std::move(out), {&a, &b},
                     [an = a.node(), bn = b.node(), rows, ca, cb](Node& o) {
                       const int c = ca + cb;
                       if (an->requires_grad) {
                         auto& g = an->ensure_grad();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (int k = 0; k < ca; ++k) g[r * ca + k] += o.grad[r * c + k];
                       }
                       if (bn->requires_grad) {
                         auto& g = bn->ensure_grad();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (int k = 0; k < cb; ++k) g[r * cb + k] += o.grad[r * c + ca + k];
                       }
                     });
}

Tensor avg_pool2d(const Tensor& x, int fh, int fw) {
  if (x.rank() != 3) throw ConfigError("avg_pool2d: input must be {H, W, C}");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (fh < 1 || fw < 1 || h % fh != 0 || w % fw != 0)
    throw ConfigError("avg_pool2d: " + shape_str(x.shape()) + " not divisible by " +
                      std::to_string(fh) + "x" + std::to_string(fw));
  const int ho = h / fh, wo = w / fw;
  const double inv = 1.0 / (fh * fw);
  Buffer out(static_cast<std::size_t>(ho) * wo * c, 0.0);
  auto in = x.data();
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int k = 0; k < c; ++k)
        out[(static_cast<std::size_t>(y / fh) * wo + xx / fw) * c + k] +=
            in[(static_cast<std::size_t>(y) * w + xx) * c + k] * inv;
  return make_result({ho, wo, c}, std::move(out), {&x},
                     [xn = x.node(), h, w, c, fh, fw, wo, inv](Node& o) {
                       auto& g = xn->ensure_grad();
                       for (int y = 0; y < h; ++y)
                         for (int xx = 0; xx < w; ++xx)
                           for (int k = 0; k < c; ++k)
                             g[(static_cast<std::size_t>(y) * w + xx) * c + k] +=
                                 o.grad[(static_cast<std::size_t>(y / fh) * wo + xx / fw) * c + k] * inv;
                     });
}

namespace {

// Source taps for one output coordinate of a 2x half-pixel upsample.
struct Tap {
  int i0, i1;
  double w0, w1;
};

std::vector<Tap> upsample_taps(int n_in) {
  std::vector<Tap> taps(static_cast<std::size_t>(2 * n_in));
  for (int o = 0; o < 2 * n_in; ++o) {
    double src = (o + 0.5) / 2.0 - 0.5;
    src = std::max(src, 0.0);
    int i0 = static_cast<int>(std::floor(src));
    i0 = std::min(i0, n_in - 1);
    const int i1 = std::min(i0 + 1, n_in - 1);
    const double f = src - i0;
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear2x(const Tensor& x) {
  if (x.rank() != 3) throw ConfigError("upsample_bilinear2x: input must be {H, W, C}");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  auto ty = upsample_taps(h);
  auto tx = upsample_taps(w);
  const int ho = 2 * h, wo = 2 * w;
  Buffer out(static_cast<std::size_t>(ho) * wo * c);
  auto in = x.data();
  auto at = [&](int y, int xx) { return in.data() + (static_cast<std::size_t>(y) * w + xx) * c; };
  for (int oy = 0; oy < ho; ++oy) {
    const Tap& a = ty[static_cast<std::size_t>(oy)];
    for (int ox = 0; ox < wo; ++ox) {
      const Tap& b = tx[static_cast<std::size_t>(ox)];
      const double *p00 = at(a.i0, b.i0), *p01 = at(a.i0, b.i1), *p10 = at(a.i1, b.i0),
                   *p11 = at(a.i1, b.i1);
      double* dst = out.data() + (static_cast<std::size_t>(oy) * wo + ox) * c;
      for (int k = 0; k < c; ++k)
        dst[k] = a.w0 * (b.w0 * p00[k] + b.w1 * p01[k]) + a.w1 * (b.w0 * p10[k] + b.w1 * p11[k]);
    }
  }
  return make_result({ho, wo, c}, std::move(out), {&x},
                     [xn = x.node(), ty = std::move(ty), tx = std::move(tx), w, c, ho, wo](Node& o) {
                       auto& g = xn->ensure_grad();
                       auto at = [&](int y, int xx) {
                         return g.data() + (static_cast<std::size_t>(y) * w + xx) * c;
                       };
                       for (int oy = 0; oy < ho; ++oy) {
                         const Tap& a = ty[static_cast<std::size_t>(oy)];
                         for (int ox = 0; ox < wo; ++ox) {
                           const Tap& b = tx[static_cast<std::size_t>(ox)];
                           const double* src = o.grad.data() + (static_cast<std::size_t>(oy) * wo + ox) * c;
                           double *g00 = at(a.i0, b.i0), *g01 = at(a.i0, b.i1), *g10 = at(a.i1, b.i0),
                                  *g11 = at(a.i1, b.i1);
                           for (int k = 0; k < c; ++k) {
                             g00[k] += a.w0 * b.w0 * src[k];
                             g01[k] += a.w0 * b.w1 * src[k];
                             g10[k] += a.w1 * b.w0 * src[k];
                             g11[k] += a.w1 * b.w1 * src[k];
                           }
                         }
                       }
                     });
}

Tensor swap_last_two(const Tensor& x) {
  if (x.rank() < 2) throw ConfigError("swap_last_two: rank < 2");
  const int a = x.dim(-2), b = x.dim(-1);
  const std::size_t outer = x.size() / (static_cast<std::size_t>(a) * b);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  Buffer out(x.size());
  auto in = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (int i = 0; i < a; ++i)
      for (int j = 0; j < b; ++j) out[(o * b + j) * a + i] = in[(o * a + i) * b + j];
  return make_result(std::move(shape), std::move(out), {&x}, [xn = x.node(), outer, a, b](Node& n) {
    auto& g = xn->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j) g[(o * a + i) * b + j] += n.grad[(o * b + j) * a + i];
  });
}

Tensor mean_last(const Tensor& x) {
  const int n = x.dim(-1);
  const std::size_t rows = x.size() / n;
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  Buffer out(rows);
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += in[r * n + k];
    out[r] = s / n;
  }
  return make_result(std::move(shape), std::move(out), {&x}, [xn = x.node(), rows, n](Node& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (int k = 0; k < n; ++k) g[r * n + k] += o.grad[r] / n;
  });
}

}  // namespace dinorade::ag
