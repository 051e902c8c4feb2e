#include "dinorade/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "dinorade/errors.hpp"

namespace dinorade::train {

TrainOptions TrainOptions::from(const RunConfig& cfg) {
  TrainOptions o;
  o.optimizer = cfg.optimizer;
  o.loss = cfg.loss;
  o.sigma = cfg.head.sigma;
  o.seed = cfg.seed;
  return o;
}

nlohmann::json StepRecord::to_json() const {
  return {{"step", step},
          {"epoch", epoch},
          {"lr", lr},
          {"loss", {{"total", total}, {"focal", focal}, {"gwd", gwd}, {"l1", l1}}}};
}

long planned_steps(std::size_t n_frames, const OptimizerConfig& opt) {
  const long per_epoch = static_cast<long>((n_frames + static_cast<std::size_t>(opt.batch_size) - 1) /
                                           static_cast<std::size_t>(opt.batch_size));
  const long total = per_epoch * opt.epochs;
  return opt.max_steps > 0 ? std::min(total, opt.max_steps) : total;
}

TrainResult train(DinoRadeModel& model, const std::vector<dataio::Frame>& frames, const TrainOptions& opt) {
  if (frames.empty()) throw DataError("training set is empty");
  opt.loss.validate();
  const auto& grid = model.config().grid;
  std::vector<head::TargetMaps> targets;
  std::vector<ag::Tensor> patches;
  for (const auto& f : frames) {
    targets.push_back(head::render_targets(f.boxes, grid, opt.sigma));
    if (model.has_camera_branch()) patches.push_back(model.patch_features(f));
  }

  std::ofstream log_file;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    log_file.open(opt.out_dir / "train_log.jsonl");
    if (!log_file) throw Error("cannot write " + (opt.out_dir / "train_log.jsonl").string());
  }

  nn::ParameterStore& store = model.params();
  nn::AdamW adam(store, {.weight_decay = opt.optimizer.weight_decay});
  const long total_steps = planned_steps(frames.size(), opt.optimizer);
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult res;
  res.best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best = store.snapshot();
  long step = 0;
  for (int epoch = 0; step < total_steps; ++epoch) {
    if (opt.shuffle) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size() && step < total_steps;
         start += static_cast<std::size_t>(opt.optimizer.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.optimizer.batch_size));
      const double inv = 1.0 / static_cast<double>(end - start);
      store.zero_grad();
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = nn::cosine_lr(step, total_steps, opt.optimizer.learning_rate, opt.optimizer.min_learning_rate);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto out = model.forward(frames[i], model.has_camera_branch() ? &patches[i] : nullptr);
        const auto l = loss::total_loss(out, targets[i], grid, opt.loss);
        const double value = l.total.item();
        if (!std::isfinite(value)) {
          if (!opt.out_dir.empty()) store.save(opt.out_dir / "last_good.ckpt");
          throw NumericError("non-finite loss at step " + std::to_string(step) + " (frame " + std::to_string(i) +
                             "); last good weights kept in last_good.ckpt");
        }
        ag::backward(ag::scale(l.total, inv));
        rec.total += value * inv;
        rec.focal += l.focal * inv;
        rec.gwd += l.gwd * inv;
        rec.l1 += l.l1 * inv;
      }
      if (rec.total < res.best_loss) {
        res.best_loss = rec.total;
        best = store.snapshot();
      }
      adam.step(store, rec.lr);
      const std::string line = rec.to_json().dump();
      if (log_file.is_open()) log_file << line << '\n';
      if (opt.log) *opt.log << line << '\n';
      res.steps.push_back(rec);
      ++step;
    }
  }
  store.zero_grad();
  if (!opt.out_dir.empty()) {
    store.save(opt.out_dir / "final.ckpt");
    const auto final_values = store.snapshot();
    store.restore(best);
    store.save(opt.out_dir / "best.ckpt");
    store.restore(final_values);
  }
  return res;
}

std::vector<Box3D> infer(const DinoRadeModel& model, const dataio::Frame& frame, const head::DecodeConfig& decode) {
  ag::NoGradGuard no_grad;
  return head::decode(model.forward(frame), model.config().grid, decode);
}

}  // namespace dinorade::train
