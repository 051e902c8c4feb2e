#pragma once

// Reference training loop (single-threaded, deterministic for a fixed seed)
// and inference helpers.

#include <filesystem>
#include <ostream>
#include <vector>

#include "dinorade/config.hpp"

namespace dinorade::train {

struct TrainOptions {
  OptimizerConfig optimizer;
  loss::LossWeights loss;
  double sigma = 0.75;
  std::uint64_t seed = 7;  // batch order
  bool shuffle = true;
  /// When set, final.ckpt, best.ckpt and train_log.jsonl are written here.
  std::filesystem::path out_dir;
  /// Extra sink for the JSON-lines log.
  std::ostream* log = nullptr;

  static TrainOptions from(const RunConfig& cfg);
};

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  double focal = 0.0;
  double gwd = 0.0;
  double l1 = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  double best_loss = 0.0;
};

/// Optimizer steps for `n_frames`: epochs * ceil(n / batch), capped by
/// max_steps when that is positive.
long planned_steps(std::size_t n_frames, const OptimizerConfig& opt);

/// AdamW with cosine annealing over planned_steps. A non-finite loss aborts
/// with NumericError after writing last_good.ckpt (parameters before the
/// failing step) into out_dir.
TrainResult train(DinoRadeModel& model, const std::vector<dataio::Frame>& frames, const TrainOptions& opt);

std::vector<Box3D> infer(const DinoRadeModel& model, const dataio::Frame& frame, const head::DecodeConfig& decode);

}  // namespace dinorade::train
