#include "dinorade/vision_encoder.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "dinorade/container.hpp"
#include "dinorade/errors.hpp"

namespace dinorade::vision {

LinearPatchEncoder::LinearPatchEncoder(int patch_size, Tensor weight, Tensor bias)
    : patch_(patch_size), weight_(std::move(weight)), bias_(std::move(bias)) {
  if (patch_ < 1 || weight_.rank() != 2 || weight_.dim(0) != patch_ * patch_ * 3)
    throw ConfigError("patch embedding must be {p*p*3, C}, got " + ag::shape_str(weight_.shape()));
  if (bias_.rank() != 1 || bias_.dim(0) != weight_.dim(1)) throw ConfigError("patch bias must be {C}");
  weight_.set_requires_grad(false);
  bias_.set_requires_grad(false);
}

std::unique_ptr<LinearPatchEncoder> LinearPatchEncoder::stub(int patch_size, int channels, std::uint64_t seed) {
  const int in = patch_size * patch_size * 3;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  std::vector<double> w(static_cast<std::size_t>(in) * channels);
  for (double& v : w) v = dist(rng);
  return std::make_unique<LinearPatchEncoder>(patch_size, Tensor::from({in, channels}, std::move(w)),
                                              Tensor::zeros({channels}));
}

std::unique_ptr<LinearPatchEncoder> LinearPatchEncoder::from_file(const std::string& path, int patch_size) {
  if (path.empty()) throw ConfigError("vision backend 'external' needs vision.external_path");
  const Container c = read_container(path, "DRCKPT01");
  const Payload& w = c.payload("patch_embed.weight");
  if (w.shape.size() != 2) throw ConfigError("patch_embed.weight must be 2D");
  std::vector<double> bias(static_cast<std::size_t>(w.shape[1]), 0.0);
  for (const auto& p : c.payloads)
    if (p.name == "patch_embed.bias") {
      if (p.data.size() != bias.size()) throw ConfigError("patch_embed.bias size mismatch");
      bias.assign(p.data.begin(), p.data.end());
    }
  return std::make_unique<LinearPatchEncoder>(
      patch_size, Tensor::from({w.shape[0], w.shape[1]}, std::vector<double>(w.data.begin(), w.data.end())),
      Tensor::from({w.shape[1]}, std::move(bias)));
}

Tensor LinearPatchEncoder::encode(const dataio::FloatArray& image) const {
  if (image.shape.size() != 3 || image.shape[2] != 3) throw ConfigError("image must be {H, W, 3}");
  const int h = image.shape[0], w = image.shape[1];
  if (h % patch_ != 0 || w % patch_ != 0)
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch size " +
                      std::to_string(patch_));
  const int hp = h / patch_, wp = w / patch_;
  const int in = patch_ * patch_ * 3;
  std::vector<double> patches(static_cast<std::size_t>(hp) * wp * in);
  for (int py = 0; py < hp; ++py)
    for (int px = 0; px < wp; ++px) {
      double* dst = patches.data() + (static_cast<std::size_t>(py) * wp + px) * in;
      for (int y = 0; y < patch_; ++y)
        for (int x = 0; x < patch_; ++x)
          for (int c = 0; c < 3; ++c)
            *dst++ = image.data[(static_cast<std::size_t>(py * patch_ + y) * w + px * patch_ + x) * 3 + c];
    }
  const Tensor flat = Tensor::from({hp, wp, in}, std::move(patches));
  return ag::linear(flat, weight_, &bias_);
}

namespace {

std::map<std::string, BackendFactory>& registry() {
  static std::map<std::string, BackendFactory> r{
      {"stub",
       [](const VisionConfig& c) -> std::unique_ptr<PatchEncoder> {
         return LinearPatchEncoder::stub(c.patch_size, c.vit_channels, c.stub_seed);
       }},
      {"external",
       [](const VisionConfig& c) -> std::unique_ptr<PatchEncoder> {
         return LinearPatchEncoder::from_file(c.external_path, c.patch_size);
       }},
  };
  return r;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void register_backend(const std::string& name, BackendFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::unique_ptr<PatchEncoder> make_patch_encoder(const VisionConfig& cfg) {
  BackendFactory f;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(cfg.backend);
    if (it == registry().end()) throw ConfigError("unknown vision backend '" + cfg.backend + "'");
    f = it->second;
  }
  return f(cfg);
}

Tensor patchify_encode(const dataio::FloatArray& image, const PatchEncoder& encoder) {
  ag::NoGradGuard frozen;
  return encoder.encode(image);
}

FpnUpsampler::FpnUpsampler(nn::ParameterStore& store, std::mt19937_64& rng, int in_channels, int out_channels)
    : stage1_(nn::Conv2d::create(store, rng, "fpn.stage1", in_channels, out_channels, 3)),
      stage2_(nn::Conv2d::create(store, rng, "fpn.stage2", out_channels, out_channels, 3)),
      in_channels_(in_channels) {}

Tensor FpnUpsampler::operator()(const Tensor& patch_map) const {
  if (patch_map.rank() != 3 || patch_map.dim(2) != in_channels_)
    throw ConfigError("upsampler expects {h, w, " + std::to_string(in_channels_) + "}, got " +
                      ag::shape_str(patch_map.shape()));
  Tensor x = ag::relu(stage1_(ag::upsample_bilinear2x(patch_map)));
  return stage2_(ag::upsample_bilinear2x(x));
}

}  // namespace dinorade::vision
