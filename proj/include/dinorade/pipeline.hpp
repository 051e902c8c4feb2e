#pragma once

// Dataset synthesis and evaluation runs shared by the CLI and the tests.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dinorade/training.hpp"

namespace dinorade::pipeline {

/// Condition index per frame: a seeded categorical draw over the configured
/// condition weights.
std::vector<std::size_t> draw_conditions(const SynthConfig& synth, std::uint64_t seed, int n_frames);

/// Frame i uses scene seed `seed + i`. Object counts are drawn uniformly in
/// [objects_min, objects_max] from the same stream as the conditions.
std::vector<dataio::Frame> synthesize(const RunConfig& cfg, int n_frames);

/// Writes frame_NNNNN.drf files and manifest.json; returns the entries.
std::vector<dataio::ManifestEntry> synthesize_to(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                                 int n_frames);

/// Frame ids are file stems of the manifest paths.
std::string frame_id(const std::filesystem::path& frame_path);

struct Dataset {
  std::vector<std::string> ids;
  std::vector<dataio::Frame> frames;
};

/// Throws DataError when the manifest lists no frames.
Dataset load(const std::filesystem::path& directory);

std::vector<eval::GroundTruthFrame> ground_truth(const Dataset& data);

/// Runs inference on every frame; returns frame_id -> detections.
std::map<std::string, std::vector<Box3D>> detect_all(const DinoRadeModel& model, const Dataset& data,
                                                     const head::DecodeConfig& decode);

/// Builds the model for `cfg` and loads weights from a checkpoint.
DinoRadeModel load_model(const RunConfig& cfg, const std::filesystem::path& checkpoint);

}  // namespace dinorade::pipeline
