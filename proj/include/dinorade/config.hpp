#pragma once

// Run configuration: one JSON document, merged over built-in defaults (the
// desk profile). Top-level scalars can be overridden from the environment as
// RADE_<KEY>, e.g. RADE_SEED=3 or RADE_ABLATION_MODE=R.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dinorade/dataio.hpp"
#include "dinorade/detection_head.hpp"
#include "dinorade/evaluation.hpp"
#include "dinorade/losses.hpp"
#include "dinorade/model.hpp"

namespace dinorade {

struct CameraSetup {
  int height_px = 160;
  int width_px = 256;
  double hfov_deg = 90.0;
  double mount_height_m = 0.5;

  geometry::CameraModel model() const;
};

struct ConditionSpec {
  std::string tag;
  double weight = 1.0;
  dataio::OcclusionMode occlusion = dataio::OcclusionMode::kNone;
};

struct SynthConfig {
  int n_frames = 32;
  int objects_min = 1;
  int objects_max = 3;
  std::vector<ConditionSpec> conditions{{"clear", 1.0, dataio::OcclusionMode::kNone}};
};

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double min_learning_rate = 1e-4;
  int batch_size = 6;
  int epochs = 11;
  /// When > 0, caps the number of optimizer steps.
  long max_steps = 0;
};

struct HeadConfig {
  double sigma = 0.75;  // target Gaussian, in bins
  head::DecodeConfig decode;
};

struct PlotConfig {
  int width_px = 480;
  int height_px = 640;
};

struct RunConfig {
  std::uint64_t seed = 7;
  ModelConfig model;
  dataio::SceneConfig scene;
  CameraSetup camera;
  SynthConfig synth;
  HeadConfig head;
  loss::LossWeights loss;
  eval::EvalConfig eval;
  OptimizerConfig optimizer;
  PlotConfig plot;

  /// Desk-scale profile: 32x16 grid, C=32, E=4, 160x256 image.
  static RunConfig desk();
  /// Paper-scale shapes: 256x112 grid, C=128, E=10, 720x1280 image.
  static RunConfig paper();

  void validate() const;
  nlohmann::json to_json() const;
  /// Merges `j` over the desk defaults; unknown keys raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
};

/// Reads a config file (empty path: desk defaults) and applies RADE_*
/// environment overrides.
RunConfig load_config(const std::filesystem::path& path);

/// Applies RADE_<KEY> overrides for top-level scalar keys of `j`.
void apply_env_overrides(nlohmann::json& j);

}  // namespace dinorade
