#pragma once

// Elevation-weighted lifting of the radar BEV map into a 3D query grid.
//
//   W_e   = softmax_E(MLP(log1p(avgpool(P_RAE))))        {R, A, E}
//   M_Q3D[r, a, c, e] = M_BEV,Rad[r, a, c] * W_e[r, a, e] {R, A, C, E}
//
// One weight fiber per bin is shared by all channels, so summing M_Q3D over E
// returns M_BEV,Rad.

#include <random>

#include "dinorade/geometry.hpp"
#include "dinorade/nn.hpp"

namespace dinorade::lifting {

using ag::Tensor;

struct LiftingConfig {
  int hidden = 64;
  /// Reserved for independent weight fibers per channel; rejected for now.
  bool per_channel = false;
};

class ElevationWeightNet {
 public:
  ElevationWeightNet(nn::ParameterStore& store, std::mt19937_64& rng, int n_elevation_raw, int n_segments,
                     const LiftingConfig& cfg = {});

  /// p_rae {Rr, Ar, El} on the raw grid -> W_e {R, A, E} on `grid`.
  Tensor operator()(const Tensor& p_rae, const geometry::GridSpec& grid) const;

 private:
  nn::Linear l1_, l2_, l3_;
  int n_elevation_raw_;
  int n_segments_;
};

/// Uniform weights 1/E, used when elevation weighting is disabled.
Tensor uniform_elevation_weights(int n_range, int n_azimuth, int n_segments);

/// M_Q3D = M_BEV,Rad replicated over E and scaled by the per-bin weights.
Tensor lift(const Tensor& m_bev_rad, const Tensor& w_e);

}  // namespace dinorade::lifting
