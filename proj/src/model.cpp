#include "dinorade/model.hpp"

#include "dinorade/errors.hpp"

namespace dinorade {

std::string_view mode_name(AblationMode m) {
  switch (m) {
    case AblationMode::kR: return "R";
    case AblationMode::kRC: return "R+C";
    case AblationMode::kRCW: return "R+C+W";
    case AblationMode::kRCstarW: return "R+C*+W";
  }
  return "?";
}

std::optional<AblationMode> parse_mode(std::string_view name) {
  for (AblationMode m : {AblationMode::kR, AblationMode::kRC, AblationMode::kRCW, AblationMode::kRCstarW})
    if (mode_name(m) == name) return m;
  return std::nullopt;
}

void ModelConfig::validate() const {
  grid.validate();
  backbone.validate();
  if (n_doppler < 1 || n_elevation_raw < 1) throw ConfigError("raw radar axes must be >= 1");
  if (mode == AblationMode::kRCstarW && !alt_vision)
    throw ConfigError("mode R+C*+W needs an alt_vision section");
  if (uses_camera(mode) && mode != AblationMode::kRCstarW && !vision)
    throw ConfigError("mode " + std::string(mode_name(mode)) + " needs a vision section");
  if (uses_camera(mode)) attention.validate(backbone.channels);
}

ag::Tensor to_tensor(const dataio::FloatArray& a) {
  return ag::Tensor::from(a.shape, std::vector<double>(a.data.begin(), a.data.end()));
}

DinoRadeModel::DinoRadeModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const int c = cfg_.backbone.channels;
  backbone_ = std::make_unique<radar::RadarBackbone>(store_, rng, cfg_.backbone, cfg_.n_doppler, cfg_.n_elevation_raw);
  if (uses_camera(cfg_.mode)) {
    const vision::VisionConfig& vc = cfg_.mode == AblationMode::kRCstarW ? *cfg_.alt_vision : *cfg_.vision;
    encoder_ = vision::make_patch_encoder(vc);
    fpn_ = std::make_unique<vision::FpnUpsampler>(store_, rng, encoder_->channels(), c);
    if (cfg_.mode != AblationMode::kRC)
      weights_ = std::make_unique<lifting::ElevationWeightNet>(store_, rng, cfg_.n_elevation_raw,
                                                               cfg_.grid.n_elevation, cfg_.lifting);
    for (int i = 0; i < cfg_.attention.n_layers; ++i)
      attention_.emplace_back(store_, rng, c, cfg_.attention, "xattn." + std::to_string(i));
    gate_ = std::make_unique<fusion::FusionGate>(store_, rng, c, cfg_.fusion);
  }
  head_ = std::make_unique<head::DetectionHead>(store_, rng, c, cfg_.head_prior_bias);
}

ag::Tensor DinoRadeModel::patch_features(const dataio::Frame& frame) const {
  if (!encoder_) throw ConfigError("mode R has no camera branch");
  return vision::patchify_encode(frame.image, *encoder_);
}

ForwardTrace DinoRadeModel::trace(const dataio::Frame& frame, const ag::Tensor* patches) const {
  frame.projections.validate();
  ForwardTrace t;
  const ag::Tensor p_rad = to_tensor(frame.projections.p_rad);
  const ag::Tensor p_rae = to_tensor(frame.projections.p_rae);
  t.bev_rad = backbone_->forward(p_rad, p_rae);
  const auto& g = cfg_.grid;
  if (t.bev_rad.dim(0) != g.n_range || t.bev_rad.dim(1) != g.n_azimuth)
    throw ConfigError("backbone output " + ag::shape_str(t.bev_rad.shape()) + " does not match the " +
                      std::to_string(g.n_range) + "x" + std::to_string(g.n_azimuth) + " grid");
  if (!encoder_) {
    t.fused = t.bev_rad;
    t.out = (*head_)(t.fused);
    return t;
  }
  const ag::Tensor feats = patches ? *patches : patch_features(frame);
  const ag::Tensor pv = (*fpn_)(feats);
  t.w_e = weights_ ? (*weights_)(p_rae, g) : lifting::uniform_elevation_weights(g.n_range, g.n_azimuth, g.n_elevation);
  t.m_q3d = lifting::lift(t.bev_rad, t.w_e);
  const geometry::ReferencePoints ref = geometry::reference_points(g, frame.camera);
  ag::Tensor q = t.m_q3d;
  for (const auto& layer : attention_) q = layer(q, pv, ref);
  t.bev_cam = xattn::collapse_elevation(q);
  t.gamma = (*gate_)(t.bev_rad, t.bev_cam);
  t.fused = fusion::fuse(t.bev_rad, t.bev_cam, t.gamma);
  t.out = (*head_)(t.fused);
  return t;
}

}  // namespace dinorade
