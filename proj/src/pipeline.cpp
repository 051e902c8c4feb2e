#include "dinorade/pipeline.hpp"

#include <cstdio>
#include <random>

#include "dinorade/errors.hpp"

namespace dinorade::pipeline {

namespace {

constexpr std::uint64_t kDrawSalt = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kOcclusionSalt = 0xc2b2ae3d27d4eb4fULL;

}  // namespace

std::vector<std::size_t> draw_conditions(const SynthConfig& synth, std::uint64_t seed, int n_frames) {
  std::vector<double> w;
  for (const auto& c : synth.conditions) w.push_back(c.weight);
  std::mt19937_64 rng(seed ^ kDrawSalt);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::vector<std::size_t> out;
  for (int i = 0; i < n_frames; ++i) out.push_back(pick(rng));
  return out;
}

std::vector<dataio::Frame> synthesize(const RunConfig& cfg, int n_frames) {
  if (n_frames < 0) throw ConfigError("n_frames must be >= 0");
  const auto cond = draw_conditions(cfg.synth, cfg.seed, n_frames);
  std::mt19937_64 rng((cfg.seed ^ kDrawSalt) + 1);
  std::uniform_int_distribution<int> count(cfg.synth.objects_min, cfg.synth.objects_max);
  const auto cam = cfg.camera.model();
  std::vector<dataio::Frame> frames;
  for (int i = 0; i < n_frames; ++i) {
    const std::uint64_t s = cfg.seed + static_cast<std::uint64_t>(i);
    const ConditionSpec& c = cfg.synth.conditions[cond[static_cast<std::size_t>(i)]];
    dataio::Frame f = dataio::generate_scene(s, count(rng), cfg.model.grid, cam, {c.occlusion, s ^ kOcclusionSalt},
                                             cfg.scene);
    f.condition_tag = c.tag;
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<dataio::ManifestEntry> synthesize_to(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                                 int n_frames) {
  std::filesystem::create_directories(out_dir);
  const auto frames = synthesize(cfg, n_frames);
  std::vector<dataio::ManifestEntry> entries;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.drf", i);
    dataio::write_frame(frames[i], out_dir / name);
    entries.push_back({name, frames[i].condition_tag});
  }
  dataio::write_manifest(out_dir, entries);
  return entries;
}

std::string frame_id(const std::filesystem::path& frame_path) { return frame_path.stem().string(); }

Dataset load(const std::filesystem::path& directory) {
  Dataset d;
  for (const auto& e : dataio::dataset_manifest(directory)) {
    d.ids.push_back(frame_id(e.path));
    d.frames.push_back(dataio::read_frame(e.path));
    d.frames.back().condition_tag = e.condition_tag;
  }
  if (d.frames.empty()) throw DataError("manifest in '" + directory.string() + "' lists no frames");
  return d;
}

std::vector<eval::GroundTruthFrame> ground_truth(const Dataset& data) {
  std::vector<eval::GroundTruthFrame> out;
  for (std::size_t i = 0; i < data.frames.size(); ++i)
    out.push_back({data.ids[i], data.frames[i].condition_tag, data.frames[i].boxes});
  return out;
}

std::map<std::string, std::vector<Box3D>> detect_all(const DinoRadeModel& model, const Dataset& data,
                                                     const head::DecodeConfig& decode) {
  std::map<std::string, std::vector<Box3D>> out;
  for (std::size_t i = 0; i < data.frames.size(); ++i) out[data.ids[i]] = train::infer(model, data.frames[i], decode);
  return out;
}

DinoRadeModel load_model(const RunConfig& cfg, const std::filesystem::path& checkpoint) {
  DinoRadeModel model(cfg.model, cfg.seed);
  model.params().load(checkpoint);
  return model;
}

}  // namespace dinorade::pipeline
