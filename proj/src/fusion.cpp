#include "dinorade/fusion.hpp"

#include <algorithm>
#include <cfloat>

#include "dinorade/errors.hpp"

namespace dinorade::fusion {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape() || a.rank() != 3)
    throw ConfigError(std::string(what) + ": shapes " + ag::shape_str(a.shape()) + " and " +
                      ag::shape_str(b.shape()) + " differ");
}

}  // namespace

FusionGate::FusionGate(nn::ParameterStore& store, std::mt19937_64& rng, int channels, const FusionConfig& cfg)
    : channels_(channels) {
  if (channels < 1) throw ConfigError("fusion channels must be >= 1");
  hidden_ = nn::Linear::create(store, rng, "fusion.gate.0", 2 * channels, channels);
  out_ = nn::Linear::create(store, rng, "fusion.gate.1", channels, cfg.per_channel ? channels : 1, true, true);
}

Tensor FusionGate::operator()(const Tensor& m_bev_rad, const Tensor& m_bev_cam) const {
  require_same(m_bev_rad, m_bev_cam, "gate");
  if (m_bev_rad.dim(2) != channels_) throw ConfigError("gate: channel count mismatch");
  const Tensor h = ag::relu(hidden_(ag::concat_last(m_bev_rad, m_bev_cam)));
  // Saturated logits would otherwise hit the closed endpoints.
  return ag::clamp(ag::sigmoid(out_(h)), DBL_EPSILON, 1.0 - DBL_EPSILON);
}

Tensor fuse(const Tensor& m_bev_rad, const Tensor& m_bev_cam, const Tensor& gamma) {
  require_same(m_bev_rad, m_bev_cam, "fuse");
  const int r = m_bev_rad.dim(0), a = m_bev_rad.dim(1), c = m_bev_rad.dim(2);
  if (gamma.rank() != 3 || gamma.dim(0) != r || gamma.dim(1) != a || (gamma.dim(2) != c && gamma.dim(2) != 1))
    throw ConfigError("fuse: gate shape " + ag::shape_str(gamma.shape()) + " does not match " +
                      ag::shape_str(m_bev_rad.shape()));
  const int gc = gamma.dim(2);
  auto rad = m_bev_rad.data();
  auto cam = m_bev_cam.data();
  auto g = gamma.data();
  ag::Buffer out(rad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double gi = g[gc == c ? i : i / static_cast<std::size_t>(c)];
    const double v = cam[i] + gi * (rad[i] - cam[i]);
    out[i] = std::clamp(v, std::min(rad[i], cam[i]), std::max(rad[i], cam[i]));
  }
  return ag::make_result(
      m_bev_rad.shape(), std::move(out), {&m_bev_rad, &m_bev_cam, &gamma},
      [rn = m_bev_rad.node(), cn = m_bev_cam.node(), gn = gamma.node(), c, gc](ag::Node& o) {
        ag::Buffer* gr = rn->requires_grad ? &rn->ensure_grad() : nullptr;
        ag::Buffer* gcam = cn->requires_grad ? &cn->ensure_grad() : nullptr;
        ag::Buffer* gg = gn->requires_grad ? &gn->ensure_grad() : nullptr;
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          const std::size_t gi = gc == c ? i : i / static_cast<std::size_t>(c);
          const double w = gn->value[gi];
          if (gr) (*gr)[i] += w * o.grad[i];
          if (gcam) (*gcam)[i] += (1.0 - w) * o.grad[i];
          if (gg) (*gg)[gi] += (rn->value[i] - cn->value[i]) * o.grad[i];
        }
      });
}

}  // namespace dinorade::fusion
