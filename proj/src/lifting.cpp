#include "dinorade/lifting.hpp"

#include "dinorade/errors.hpp"

namespace dinorade::lifting {

ElevationWeightNet::ElevationWeightNet(nn::ParameterStore& store, std::mt19937_64& rng, int n_elevation_raw,
                                       int n_segments, const LiftingConfig& cfg)
    : n_elevation_raw_(n_elevation_raw), n_segments_(n_segments) {
  if (cfg.per_channel) throw ConfigError("per-channel elevation weights are not supported");
  if (cfg.hidden < 1 || n_elevation_raw < 1 || n_segments < 1) throw ConfigError("invalid lifting sizes");
  l1_ = nn::Linear::create(store, rng, "lifting.mlp.0", n_elevation_raw, cfg.hidden);
  l2_ = nn::Linear::create(store, rng, "lifting.mlp.1", cfg.hidden, cfg.hidden);
  // Zero final layer: uniform weights until training moves them.
  l3_ = nn::Linear::create(store, rng, "lifting.mlp.2", cfg.hidden, n_segments, true, true);
}

Tensor ElevationWeightNet::operator()(const Tensor& p_rae, const geometry::GridSpec& grid) const {
  if (p_rae.rank() != 3 || p_rae.dim(2) != n_elevation_raw_)
    throw ConfigError("elevation weights expect {Rr, Ar, " + std::to_string(n_elevation_raw_) + "}, got " +
                      ag::shape_str(p_rae.shape()));
  if (grid.n_elevation != n_segments_) throw ConfigError("grid E differs from the weight network's E");
  if (p_rae.dim(0) % grid.n_range != 0 || p_rae.dim(1) % grid.n_azimuth != 0)
    throw ConfigError("raw RAE grid not divisible by the feature grid");
  const Tensor pooled =
      ag::avg_pool2d(p_rae, p_rae.dim(0) / grid.n_range, p_rae.dim(1) / grid.n_azimuth);
  Tensor x = ag::log1p(pooled);
  x = ag::relu(l1_(x));
  x = ag::relu(l2_(x));
  return ag::softmax_last(l3_(x));
}

Tensor uniform_elevation_weights(int n_range, int n_azimuth, int n_segments) {
  return Tensor::full({n_range, n_azimuth, n_segments}, 1.0 / n_segments);
}

Tensor lift(const Tensor& m_bev_rad, const Tensor& w_e) {
  if (m_bev_rad.rank() != 3 || w_e.rank() != 3 || m_bev_rad.dim(0) != w_e.dim(0) ||
      m_bev_rad.dim(1) != w_e.dim(1))
    throw ConfigError("lift: shapes " + ag::shape_str(m_bev_rad.shape()) + " and " +
                      ag::shape_str(w_e.shape()) + " disagree on (range, azimuth)");
  const int bins = m_bev_rad.dim(0) * m_bev_rad.dim(1);
  const int c = m_bev_rad.dim(2), e = w_e.dim(2);
  ag::Buffer out(static_cast<std::size_t>(bins) * c * e);
  auto m = m_bev_rad.data();
  auto w = w_e.data();
  for (int b = 0; b < bins; ++b)
    for (int k = 0; k < c; ++k) {
      const double v = m[static_cast<std::size_t>(b) * c + k];
      double* dst = out.data() + (static_cast<std::size_t>(b) * c + k) * e;
      const double* wb = w.data() + static_cast<std::size_t>(b) * e;
      for (int s = 0; s < e; ++s) dst[s] = v * wb[s];
    }
  return ag::make_result({m_bev_rad.dim(0), m_bev_rad.dim(1), c, e}, std::move(out), {&m_bev_rad, &w_e},
                     [mn = m_bev_rad.node(), wn = w_e.node(), bins, c, e](ag::Node& o) {
                       ag::Buffer* gm = mn->requires_grad ? &mn->ensure_grad() : nullptr;
                       ag::Buffer* gw = wn->requires_grad ? &wn->ensure_grad() : nullptr;
                       for (int b = 0; b < bins; ++b)
                         for (int k = 0; k < c; ++k) {
                           const std::size_t mi = static_cast<std::size_t>(b) * c + k;
                           const double* g = o.grad.data() + mi * e;
                           const double* wb = wn->value.data() + static_cast<std::size_t>(b) * e;
                           double acc = 0.0;
                           for (int s = 0; s < e; ++s) {
                             acc += g[s] * wb[s];
                             if (gw) (*gw)[static_cast<std::size_t>(b) * e + s] += g[s] * mn->value[mi];
                           }
                           if (gm) (*gm)[mi] += acc;
                         }
                     });
}

}  // namespace dinorade::lifting
