#pragma once

#include <random>

#include "dinorade/nn.hpp"

namespace dinorade::radar {

using ag::Tensor;

struct BackboneConfig {
  int channels = 32;       // C of M_BEV,Rad; each encoder emits C/2
  int encoder_convs = 2;   // 3x3 convs per encoder, the first one strided
  int downsample = 2;      // raw grid -> feature grid, per axis
  int trunk_blocks = 4;    // residual blocks after concatenation

  void validate() const;
};

/// Dual-encoder radar feature extractor producing M_BEV,Rad {R, A, C}.
///
/// Each projection is log1p-compressed and standardized, then its third axis
/// (Doppler or elevation) enters a 2D conv stack as input channels.
class RadarBackbone {
 public:
  RadarBackbone(nn::ParameterStore& store, std::mt19937_64& rng, const BackboneConfig& cfg,
                int n_doppler, int n_elevation_raw);

  /// p_rad {Rr, Ar, D} -> {Rr/ds, Ar/ds, C/2}.
  Tensor encode_rad(const Tensor& p_rad) const;
  /// p_rae {Rr, Ar, El} -> {Rr/ds, Ar/ds, C/2}.
  Tensor encode_rae(const Tensor& p_rae) const;
  /// Concatenates two encoder streams (first, second) and runs the trunk.
  Tensor fuse_streams(const Tensor& first, const Tensor& second) const;
  /// Full backbone: fuse_streams(encode_rad, encode_rae).
  Tensor forward(const Tensor& p_rad, const Tensor& p_rae) const;

  const BackboneConfig& config() const { return cfg_; }

 private:
  struct Block {
    nn::Conv2d a, b;
  };

  Tensor encode(const std::vector<nn::Conv2d>& stack, const Tensor& input, int expected_channels) const;

  BackboneConfig cfg_;
  int n_doppler_;
  int n_elevation_raw_;
  std::vector<nn::Conv2d> rad_stack_, rae_stack_;
  std::vector<Block> trunk_;
};

}  // namespace dinorade::radar
