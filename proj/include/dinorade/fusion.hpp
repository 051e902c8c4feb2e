#pragma once

// Gated residual fusion of the radar and camera-refined BEV maps:
//
//   Gamma = sigmoid(MLP(M_BEV,Rad (+) M_BEV,Cam))
//   M_f   = Gamma * M_BEV,Rad + (1 - Gamma) * M_BEV,Cam

#include <random>

#include "dinorade/nn.hpp"

namespace dinorade::fusion {

using ag::Tensor;

struct FusionConfig {
  /// One gate value per channel; false gives one scalar per bin.
  bool per_channel = true;
};

class FusionGate {
 public:
  /// Two-layer MLP 2C -> C -> C (or 1); the output layer starts at zero.
  FusionGate(nn::ParameterStore& store, std::mt19937_64& rng, int channels, const FusionConfig& cfg = {});

  /// {R, A, C} x2 -> Gamma {R, A, C} (or {R, A, 1}), strictly inside (0, 1).
  Tensor operator()(const Tensor& m_bev_rad, const Tensor& m_bev_cam) const;

 private:
  nn::Linear hidden_, out_;
  int channels_;
};

/// Elementwise convex combination. gamma may be {R, A, C} or {R, A, 1}.
/// The result is clamped into [min(rad, cam), max(rad, cam)] so rounding
/// cannot leave the envelope.
Tensor fuse(const Tensor& m_bev_rad, const Tensor& m_bev_cam, const Tensor& gamma);

}  // namespace dinorade::fusion
