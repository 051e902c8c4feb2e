#pragma once

// End-to-end detector assembled per ablation mode:
//
//   R       radar backbone -> head
//   R+C     + camera branch, lift with uniform (frozen) height weights
//   R+C+W   + learned height weights
//   R+C*+W  as R+C+W with the alternative vision backend

#include <memory>
#include <optional>
#include <string>

#include "dinorade/cross_attention.hpp"
#include "dinorade/dataio.hpp"
#include "dinorade/detection_head.hpp"
#include "dinorade/fusion.hpp"
#include "dinorade/lifting.hpp"
#include "dinorade/radar_backbone.hpp"
#include "dinorade/vision_encoder.hpp"

namespace dinorade {

enum class AblationMode { kR, kRC, kRCW, kRCstarW };

std::string_view mode_name(AblationMode m);
std::optional<AblationMode> parse_mode(std::string_view name);
inline bool uses_camera(AblationMode m) { return m != AblationMode::kR; }

struct ModelConfig {
  AblationMode mode = AblationMode::kRCW;
  geometry::GridSpec grid;
  int n_doppler = 16;
  int n_elevation_raw = 8;
  radar::BackboneConfig backbone;
  /// Empty on camera-free configurations (mode R only).
  std::optional<vision::VisionConfig> vision;
  /// Backend used by R+C*+W.
  std::optional<vision::VisionConfig> alt_vision;
  lifting::LiftingConfig lifting;
  xattn::DeformAttnConfig attention;
  fusion::FusionConfig fusion;
  double head_prior_bias = -2.19;

  void validate() const;
};

/// Intermediate maps of one forward pass, exposed for inspection and tests.
struct ForwardTrace {
  ag::Tensor bev_rad;    // {R, A, C}
  ag::Tensor w_e;        // {R, A, E}
  ag::Tensor m_q3d;      // {R, A, C, E} before attention
  ag::Tensor bev_cam;    // {R, A, C}
  ag::Tensor gamma;      // fusion gate
  ag::Tensor fused;      // {R, A, C}
  head::HeadOutput out;
};

class DinoRadeModel {
 public:
  DinoRadeModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }
  bool has_camera_branch() const { return encoder_ != nullptr; }

  /// Frozen patch features {H/p, W/p, C_vit}; constant per frame, so callers
  /// may cache them. Throws ConfigError in mode R.
  ag::Tensor patch_features(const dataio::Frame& frame) const;

  /// patches: optional cached output of patch_features for this frame.
  ForwardTrace trace(const dataio::Frame& frame, const ag::Tensor* patches = nullptr) const;
  head::HeadOutput forward(const dataio::Frame& frame, const ag::Tensor* patches = nullptr) const {
    return trace(frame, patches).out;
  }

 private:
  ModelConfig cfg_;
  nn::ParameterStore store_;
  std::unique_ptr<radar::RadarBackbone> backbone_;
  std::unique_ptr<vision::PatchEncoder> encoder_;
  std::unique_ptr<vision::FpnUpsampler> fpn_;
  std::unique_ptr<lifting::ElevationWeightNet> weights_;
  std::vector<xattn::DeformableCrossAttention> attention_;
  std::unique_ptr<fusion::FusionGate> gate_;
  std::unique_ptr<head::DetectionHead> head_;
};

/// float32 array -> float64 tensor (no grad).
ag::Tensor to_tensor(const dataio::FloatArray& a);

}  // namespace dinorade
