#include "dinorade/cross_attention.hpp"

#include <cmath>

#include "dinorade/errors.hpp"

namespace dinorade::xattn {

void DeformAttnConfig::validate(int channels) const {
  if (n_points < 1 || n_heads < 1 || n_layers < 1) throw ConfigError("attention counts must be >= 1");
  if (!(offset_scale > 0.0 && offset_scale <= 1.0)) throw ConfigError("offset_scale must be in (0, 1]");
  if (channels % n_heads != 0) throw ConfigError("channels must be divisible by n_heads");
}

namespace {

struct Taps {
  int x0, y0;
  double fx, fy;
};

Taps taps_for(double u, double v, int wf, int hf) {
  const double x = u * wf - 0.5, y = v * hf - 0.5;
  const double x0 = std::floor(x), y0 = std::floor(y);
  return {static_cast<int>(x0), static_cast<int>(y0), x - x0, y - y0};
}

}  // namespace

Tensor bilinear_sample(const Tensor& pv, const Tensor& points, std::span<const std::uint8_t> mask) {
  if (pv.rank() != 3) throw ConfigError("bilinear_sample: pv must be {H, W, C}");
  if (points.rank() != 2 || points.dim(1) != 2) throw ConfigError("bilinear_sample: points must be {N, 2}");
  const int n = points.dim(0);
  if (mask.size() != static_cast<std::size_t>(n)) throw ConfigError("bilinear_sample: mask size mismatch");
  const int hf = pv.dim(0), wf = pv.dim(1), c = pv.dim(2);
  ag::Buffer out(static_cast<std::size_t>(n) * c, 0.0);
  auto f = pv.data();
  auto p = points.data();
  auto cell = [&](int y, int x) -> const double* {
    if (x < 0 || x >= wf || y < 0 || y >= hf) return nullptr;
    return f.data() + (static_cast<std::size_t>(y) * wf + x) * c;
  };
  for (int i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const Taps t = taps_for(p[2 * i], p[2 * i + 1], wf, hf);
    const double w[4] = {(1 - t.fx) * (1 - t.fy), t.fx * (1 - t.fy), (1 - t.fx) * t.fy, t.fx * t.fy};
    const double* src[4] = {cell(t.y0, t.x0), cell(t.y0, t.x0 + 1), cell(t.y0 + 1, t.x0), cell(t.y0 + 1, t.x0 + 1)};
    double* dst = out.data() + static_cast<std::size_t>(i) * c;
    for (int k = 0; k < 4; ++k)
      if (src[k])
        for (int ch = 0; ch < c; ++ch) dst[ch] += w[k] * src[k][ch];
  }
  std::vector<std::uint8_t> mask_copy(mask.begin(), mask.end());
  return ag::make_result(
      {n, c}, std::move(out), {&pv, &points},
      [fn = pv.node(), pn = points.node(), mask_copy = std::move(mask_copy), n, hf, wf, c](ag::Node& o) {
        ag::Buffer* gf = fn->requires_grad ? &fn->ensure_grad() : nullptr;
        ag::Buffer* gp = pn->requires_grad ? &pn->ensure_grad() : nullptr;
        const auto& f = fn->value;
        auto idx = [&](int y, int x) -> std::ptrdiff_t {
          if (x < 0 || x >= wf || y < 0 || y >= hf) return -1;
          return static_cast<std::ptrdiff_t>((static_cast<std::size_t>(y) * wf + x) * c);
        };
        for (int i = 0; i < n; ++i) {
          if (!mask_copy[static_cast<std::size_t>(i)]) continue;
          const double* g = o.grad.data() + static_cast<std::size_t>(i) * c;
          const Taps t = taps_for(pn->value[2 * i], pn->value[2 * i + 1], wf, hf);
          const std::ptrdiff_t at[4] = {idx(t.y0, t.x0), idx(t.y0, t.x0 + 1), idx(t.y0 + 1, t.x0),
                                        idx(t.y0 + 1, t.x0 + 1)};
          const double w[4] = {(1 - t.fx) * (1 - t.fy), t.fx * (1 - t.fy), (1 - t.fx) * t.fy, t.fx * t.fy};
          // d w / d fx and d w / d fy for the four taps.
          const double dwx[4] = {-(1 - t.fy), (1 - t.fy), -t.fy, t.fy};
          const double dwy[4] = {-(1 - t.fx), -t.fx, (1 - t.fx), t.fx};
          double dfx = 0.0, dfy = 0.0;
          for (int k = 0; k < 4; ++k) {
            if (at[k] < 0) continue;
            const double* src = f.data() + at[k];
            double dot = 0.0;
            for (int ch = 0; ch < c; ++ch) dot += g[ch] * src[ch];
            dfx += dwx[k] * dot;
            dfy += dwy[k] * dot;
            if (gf)
              for (int ch = 0; ch < c; ++ch) (*gf)[static_cast<std::size_t>(at[k]) + ch] += w[k] * g[ch];
          }
          if (gp) {
            (*gp)[2 * static_cast<std::size_t>(i)] += dfx * wf;
            (*gp)[2 * static_cast<std::size_t>(i) + 1] += dfy * hf;
          }
        }
      });
}

namespace {

// weights {Q, H, P}, sampled {Q, H, P, C} -> {Q, C}; head h reads channels
// [h*C/H, (h+1)*C/H).
Tensor aggregate_heads(const Tensor& weights, const Tensor& sampled) {
  const int q = weights.dim(0), h = weights.dim(1), p = weights.dim(2), c = sampled.dim(3);
  const int ch = c / h;
  ag::Buffer out(static_cast<std::size_t>(q) * c, 0.0);
  auto w = weights.data();
  auto s = sampled.data();
  for (int i = 0; i < q; ++i)
    for (int hh = 0; hh < h; ++hh)
      for (int k = 0; k < p; ++k) {
        const std::size_t wi = (static_cast<std::size_t>(i) * h + hh) * p + k;
        const double* src = s.data() + wi * c + hh * ch;
        double* dst = out.data() + static_cast<std::size_t>(i) * c + hh * ch;
        for (int cc = 0; cc < ch; ++cc) dst[cc] += w[wi] * src[cc];
      }
  return ag::make_result({q, c}, std::move(out), {&weights, &sampled},
                         [wn = weights.node(), sn = sampled.node(), q, h, p, c, ch](ag::Node& o) {
                           ag::Buffer* gw = wn->requires_grad ? &wn->ensure_grad() : nullptr;
                           ag::Buffer* gs = sn->requires_grad ? &sn->ensure_grad() : nullptr;
                           for (int i = 0; i < q; ++i)
                             for (int hh = 0; hh < h; ++hh)
                               for (int k = 0; k < p; ++k) {
                                 const std::size_t wi = (static_cast<std::size_t>(i) * h + hh) * p + k;
                                 const double* g = o.grad.data() + static_cast<std::size_t>(i) * c + hh * ch;
                                 const double* src = sn->value.data() + wi * c + hh * ch;
                                 double dot = 0.0;
                                 for (int cc = 0; cc < ch; ++cc) {
                                   dot += g[cc] * src[cc];
                                   if (gs) (*gs)[wi * c + hh * ch + cc] += wn->value[wi] * g[cc];
                                 }
                                 if (gw) (*gw)[wi] += dot;
                               }
                         });
}

// out[i] = mask[i] ? queries[i] + update[i] : queries[i] (copied bit for bit).
Tensor masked_residual(const Tensor& queries, const Tensor& update, const std::vector<std::uint8_t>& mask) {
  const int q = queries.dim(0), c = queries.dim(1);
  ag::Buffer out(queries.data().begin(), queries.data().end());
  auto u = update.data();
  for (int i = 0; i < q; ++i)
    if (mask[static_cast<std::size_t>(i)])
      for (int k = 0; k < c; ++k) out[static_cast<std::size_t>(i) * c + k] += u[static_cast<std::size_t>(i) * c + k];
  return ag::make_result({q, c}, std::move(out), {&queries, &update},
                         [qn = queries.node(), un = update.node(), mask, c](ag::Node& o) {
                           if (qn->requires_grad) {
                             auto& g = qn->ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                           }
                           if (un->requires_grad) {
                             auto& g = un->ensure_grad();
                             for (std::size_t i = 0; i < mask.size(); ++i)
                               if (mask[i])
                                 for (int k = 0; k < c; ++k) g[i * c + k] += o.grad[i * c + k];
                           }
                         });
}

}  // namespace

DeformableCrossAttention::DeformableCrossAttention(nn::ParameterStore& store, std::mt19937_64& rng, int channels,
                                                   const DeformAttnConfig& cfg, const std::string& name)
    : cfg_(cfg), channels_(channels) {
  cfg_.validate(channels);
  const int hp = cfg_.n_heads * cfg_.n_points;
  offset_head_ = nn::Linear::create(store, rng, name + ".offsets", channels, hp * 2, true, true);
  weight_head_ = nn::Linear::create(store, rng, name + ".weights", channels, hp, true, true);
  // Zero output projection: the first pass leaves the queries unchanged.
  out_proj_ = nn::Linear::create(store, rng, name + ".out_proj", channels, channels, cfg_.output_bias, true);
}

OffsetPrediction DeformableCrossAttention::predict_offsets(const Tensor& queries) const {
  if (queries.rank() != 2 || queries.dim(1) != channels_)
    throw ConfigError("offset head expects {Q, " + std::to_string(channels_) + "}");
  const int q = queries.dim(0), hp = cfg_.n_heads * cfg_.n_points;
  OffsetPrediction p;
  p.offsets = ag::scale(ag::tanh(offset_head_(queries)), cfg_.offset_scale).reshape({q, hp, 2});
  p.logits = weight_head_(queries).reshape({q, cfg_.n_heads, cfg_.n_points});
  return p;
}

Tensor DeformableCrossAttention::attend(const Tensor& queries, const Tensor& pv,
                                        const geometry::ReferencePoints& ref, const OffsetPrediction& pred) const {
  const int q = queries.dim(0);
  const int hp = cfg_.n_heads * cfg_.n_points;
  if (static_cast<std::size_t>(q) != ref.mask.size())
    throw ConfigError("query count " + std::to_string(q) + " does not match reference points");
  if (pv.rank() != 3 || pv.dim(2) != channels_)
    throw ConfigError("pv map must be {Hf, Wf, " + std::to_string(channels_) + "}, got " + ag::shape_str(pv.shape()));

  std::vector<double> anchors(static_cast<std::size_t>(q) * hp * 2);
  std::vector<std::uint8_t> point_mask(static_cast<std::size_t>(q) * hp);
  for (int i = 0; i < q; ++i)
    for (int k = 0; k < hp; ++k) {
      const std::size_t j = static_cast<std::size_t>(i) * hp + k;
      anchors[2 * j] = ref.coords[2 * static_cast<std::size_t>(i)];
      anchors[2 * j + 1] = ref.coords[2 * static_cast<std::size_t>(i) + 1];
      point_mask[j] = ref.mask[static_cast<std::size_t>(i)];
    }
  const Tensor points = ag::add(pred.offsets.reshape({q * hp, 2}), Tensor::from({q * hp, 2}, std::move(anchors)));
  const Tensor sampled = bilinear_sample(pv, points, point_mask).reshape({q, cfg_.n_heads, cfg_.n_points, channels_});
  const Tensor weights = ag::softmax_last(pred.logits);
  const Tensor update = out_proj_(aggregate_heads(weights, sampled));
  return masked_residual(queries, update, ref.mask);
}

Tensor DeformableCrossAttention::operator()(const Tensor& m_q3d, const Tensor& pv,
                                            const geometry::ReferencePoints& ref) const {
  if (m_q3d.rank() != 4 || m_q3d.dim(2) != channels_ || m_q3d.dim(0) != ref.n_range ||
      m_q3d.dim(1) != ref.n_azimuth || m_q3d.dim(3) != ref.n_elevation)
    throw ConfigError("query map " + ag::shape_str(m_q3d.shape()) + " does not match the reference grid");
  const int r = m_q3d.dim(0), a = m_q3d.dim(1), e = m_q3d.dim(3);
  const Tensor queries = ag::swap_last_two(m_q3d).reshape({r * a * e, channels_});
  const Tensor updated = attend(queries, pv, ref, predict_offsets(queries));
  return ag::swap_last_two(updated.reshape({r, a, e, channels_}));
}

Tensor collapse_elevation(const Tensor& m_q3d) {
  if (m_q3d.rank() != 4) throw ConfigError("collapse_elevation expects {R, A, C, E}");
  return ag::mean_last(m_q3d);
}

}  // namespace dinorade::xattn
