#include "dinorade/radar_backbone.hpp"

#include "dinorade/errors.hpp"

namespace dinorade::radar {

void BackboneConfig::validate() const {
  if (channels < 2 || channels % 2 != 0) throw ConfigError("backbone channels must be even and >= 2");
  if (encoder_convs < 1 || downsample < 1 || trunk_blocks < 0) throw ConfigError("invalid backbone depth");
}

RadarBackbone::RadarBackbone(nn::ParameterStore& store, std::mt19937_64& rng, const BackboneConfig& cfg,
                             int n_doppler, int n_elevation_raw)
    : cfg_(cfg), n_doppler_(n_doppler), n_elevation_raw_(n_elevation_raw) {
  cfg_.validate();
  const int half = cfg_.channels / 2;
  for (int i = 0; i < cfg_.encoder_convs; ++i) {
    const int stride = i == 0 ? cfg_.downsample : 1;
    rad_stack_.push_back(nn::Conv2d::create(store, rng, "backbone.rad." + std::to_string(i),
                                            i == 0 ? n_doppler : half, half, 3, stride));
    rae_stack_.push_back(nn::Conv2d::create(store, rng, "backbone.rae." + std::to_string(i),
                                            i == 0 ? n_elevation_raw : half, half, 3, stride));
  }
  for (int i = 0; i < cfg_.trunk_blocks; ++i) {
    const std::string n = "backbone.trunk." + std::to_string(i);
    trunk_.push_back({nn::Conv2d::create(store, rng, n + ".a", cfg_.channels, cfg_.channels, 3),
                      nn::Conv2d::create(store, rng, n + ".b", cfg_.channels, cfg_.channels, 3)});
  }
}

Tensor RadarBackbone::encode(const std::vector<nn::Conv2d>& stack, const Tensor& input,
                             int expected_channels) const {
  if (input.rank() != 3 || input.dim(2) != expected_channels)
    throw ConfigError("radar encoder expects {R, A, " + std::to_string(expected_channels) + "}, got " +
                      ag::shape_str(input.shape()));
  if (input.dim(0) % cfg_.downsample != 0 || input.dim(1) % cfg_.downsample != 0)
    throw ConfigError("raw radar grid " + ag::shape_str(input.shape()) + " not divisible by downsample " +
                      std::to_string(cfg_.downsample));
  Tensor x = ag::standardize(ag::log1p(input));
  for (const auto& conv : stack) x = ag::relu(conv(x));
  return x;
}

Tensor RadarBackbone::encode_rad(const Tensor& p_rad) const { return encode(rad_stack_, p_rad, n_doppler_); }

Tensor RadarBackbone::encode_rae(const Tensor& p_rae) const {
  return encode(rae_stack_, p_rae, n_elevation_raw_);
}

Tensor RadarBackbone::fuse_streams(const Tensor& first, const Tensor& second) const {
  if (first.shape() != second.shape())
    throw ConfigError("encoder streams disagree: " + ag::shape_str(first.shape()) + " vs " +
                      ag::shape_str(second.shape()));
  Tensor x = ag::concat_last(first, second);
  for (const auto& blk : trunk_) x = ag::relu(ag::add(x, blk.b(ag::relu(blk.a(x)))));
  return x;
}

Tensor RadarBackbone::forward(const Tensor& p_rad, const Tensor& p_rae) const {
  return fuse_streams(encode_rad(p_rad), encode_rae(p_rae));
}

}  // namespace dinorade::radar
