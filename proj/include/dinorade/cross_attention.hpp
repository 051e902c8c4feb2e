#pragma once

// Deformable cross-attention from lifted radar queries onto the
// perspective-view feature map.
//
// For every query (range bin, azimuth bin, height segment) an offset head
// proposes n_points sampling locations around the query's projected
// reference point; features are bilinearly sampled there, blended with
// softmax weights, projected back to C channels and added to the query.
// Queries whose reference point falls outside the camera frustum pass through
// untouched.

#include <cstdint>
#include <random>
#include <span>

#include "dinorade/geometry.hpp"
#include "dinorade/nn.hpp"

namespace dinorade::xattn {

using ag::Tensor;

struct DeformAttnConfig {
  int n_points = 4;
  int n_heads = 1;
  double offset_scale = 0.1;  // max |offset| in normalized image units
  int n_layers = 1;
  bool output_bias = false;

  void validate(int channels) const;
};

/// Samples pv {Hf, Wf, C} at normalized points {N, 2} = (u, v) in [0, 1]^2.
/// Feature cell j is centered at (j + 0.5) / Wf. Taps outside the map read
/// zero; entries with mask[n] == 0 yield exact zeros and no gradient.
Tensor bilinear_sample(const Tensor& pv, const Tensor& points, std::span<const std::uint8_t> mask);

struct OffsetPrediction {
  Tensor offsets;  // {Q, heads * points, 2}, normalized image units
  Tensor logits;   // {Q, heads, points}
};

class DeformableCrossAttention {
 public:
  DeformableCrossAttention(nn::ParameterStore& store, std::mt19937_64& rng, int channels,
                           const DeformAttnConfig& cfg, const std::string& name = "xattn.0");

  /// queries {Q, C}. Offsets are tanh-bounded by offset_scale.
  OffsetPrediction predict_offsets(const Tensor& queries) const;

  /// m_q3d {R, A, C, E}, pv {Hf, Wf, C} -> updated {R, A, C, E}.
  Tensor operator()(const Tensor& m_q3d, const Tensor& pv, const geometry::ReferencePoints& ref) const;

  /// Sampling + aggregation + residual update given explicit offsets and
  /// logits; exposed so gradients w.r.t. offsets can be probed directly.
  Tensor attend(const Tensor& queries, const Tensor& pv, const geometry::ReferencePoints& ref,
                const OffsetPrediction& pred) const;

  const DeformAttnConfig& config() const { return cfg_; }
  const nn::Linear& output_projection() const { return out_proj_; }

 private:
  DeformAttnConfig cfg_;
  int channels_;
  nn::Linear offset_head_, weight_head_, out_proj_;
};

/// Arithmetic mean over the height axis: {R, A, C, E} -> {R, A, C}.
Tensor collapse_elevation(const Tensor& m_q3d);

}  // namespace dinorade::xattn
