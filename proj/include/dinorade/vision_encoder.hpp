#pragma once

// Perspective-view features: a frozen patch encoder behind a named backend
// registry, followed by a trainable two-stage upsampler.

#include <functional>
#include <memory>
#include <random>
#include <string>

#include "dinorade/dataio.hpp"
#include "dinorade/nn.hpp"

namespace dinorade::vision {

using ag::Tensor;

struct VisionConfig {
  std::string backend = "stub";  // registry name
  std::string external_path;     // weight file for the "external" backend
  int patch_size = 16;
  int vit_channels = 96;         // C_vit
  std::uint64_t stub_seed = 0x5eed;
};

/// Maps an {H, W, 3} image to an {H/p, W/p, C_vit} patch feature map. Weights
/// are frozen: implementations must not expose trainable tensors.
class PatchEncoder {
 public:
  virtual ~PatchEncoder() = default;
  virtual Tensor encode(const dataio::FloatArray& image) const = 0;
  virtual int channels() const = 0;
  virtual int patch_size() const = 0;
};

/// Linear patch embedding with a fixed weight matrix {p*p*3, C_vit} and bias.
/// Both the deterministic stub and externally loaded weights use it.
class LinearPatchEncoder : public PatchEncoder {
 public:
  LinearPatchEncoder(int patch_size, Tensor weight, Tensor bias);

  /// Seed-derived random projection scaled by 1/sqrt(p*p*3).
  static std::unique_ptr<LinearPatchEncoder> stub(int patch_size, int channels, std::uint64_t seed);
  /// Loads "patch_embed.weight" {p*p*3, C} and optional "patch_embed.bias"
  /// from a weight container (same format as checkpoints).
  static std::unique_ptr<LinearPatchEncoder> from_file(const std::string& path, int patch_size);

  Tensor encode(const dataio::FloatArray& image) const override;
  int channels() const override { return weight_.dim(1); }
  int patch_size() const override { return patch_; }
  const Tensor& weight() const { return weight_; }

 private:
  int patch_;
  Tensor weight_;
  Tensor bias_;
};

using BackendFactory = std::function<std::unique_ptr<PatchEncoder>(const VisionConfig&)>;

/// Registers a backend under a name usable as vision.backend. Built-ins:
/// "stub" and "external".
void register_backend(const std::string& name, BackendFactory factory);
std::unique_ptr<PatchEncoder> make_patch_encoder(const VisionConfig& cfg);

/// Throws ConfigError when the image is not divisible by the patch size.
Tensor patchify_encode(const dataio::FloatArray& image, const PatchEncoder& encoder);

/// Two stages of (bilinear x2, 3x3 conv): C_vit -> C -> C, net 4x spatial gain.
class FpnUpsampler {
 public:
  FpnUpsampler(nn::ParameterStore& store, std::mt19937_64& rng, int in_channels, int out_channels);
  Tensor operator()(const Tensor& patch_map) const;

 private:
  nn::Conv2d stage1_, stage2_;
  int in_channels_;
};

}  // namespace dinorade::vision
