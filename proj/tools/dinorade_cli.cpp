// dinorade: synthesize data, train, evaluate, run inference and plot PR curves.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure, 1 anything else.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "dinorade/errors.hpp"
#include "dinorade/pipeline.hpp"
#include "dinorade/raster.hpp"

namespace {

using namespace dinorade;

struct Common {
  std::string config;
  std::int64_t seed = -1;
  std::string mode;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration (default: desk profile)");
  cmd->add_option("--seed", c.seed, "Override the configured seed");
  cmd->add_option("--mode", c.mode, "Ablation mode: R, R+C, R+C+W or R+C*+W");
}

RunConfig resolve(const Common& c) {
  nlohmann::json patch = nlohmann::json::object();
  if (c.seed >= 0) patch["seed"] = c.seed;
  if (!c.mode.empty()) patch["ablation_mode"] = c.mode;
  RunConfig cfg = load_config(c.config);
  if (patch.empty()) return cfg;
  nlohmann::json j = cfg.to_json();
  j.merge_patch(patch);
  return RunConfig::from_json(j);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"Radar-camera BEV detector: synth | train | eval | infer | plot-pr"};
  app.require_subcommand(1);

  Common synth_c, train_c, eval_c, infer_c;
  std::string synth_out, train_data, train_out, eval_data, eval_ckpt, eval_out, eval_dets;
  std::string infer_ckpt, infer_frame, infer_out, infer_plot;
  std::string pr_report, pr_out;
  std::vector<std::string> pr_classes, pr_conditions;
  int synth_frames = -1;
  double infer_threshold = -1.0;
  bool eval_gt = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth, synth_c);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--frames", synth_frames, "Number of frames (default: synth.n_frames)");

  auto* train = app.add_subcommand("train", "Train on a dataset directory");
  add_common(train, train_c);
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--out", train_out, "Run directory for checkpoints and the log")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(eval, eval_c);
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--checkpoint", eval_ckpt, "Weights to evaluate");
  eval->add_option("--detections", eval_dets, "Evaluate a detections JSON-lines file instead of a model");
  eval->add_flag("--gt-as-detections", eval_gt, "Score the ground truth against itself");
  eval->add_option("--out", eval_out, "Directory for report.json / report.txt")->required();

  auto* infer = app.add_subcommand("infer", "Detect objects in one frame");
  add_common(infer, infer_c);
  infer->add_option("--checkpoint", infer_ckpt, "Weights (default: untrained initialization)");
  infer->add_option("--frame", infer_frame, "Frame file")->required();
  infer->add_option("--out", infer_out, "Detections JSON-lines file (default: stdout)");
  infer->add_option("--plot", infer_plot, "Write a BEV overlay PNG");
  infer->add_option("--threshold", infer_threshold, "Override head.score_threshold");

  auto* plot = app.add_subcommand("plot-pr", "Plot precision-recall curves from report.json");
  plot->add_option("--report", pr_report, "report.json")->required();
  plot->add_option("--out", pr_out, "Output PNG")->required();
  plot->add_option("--class", pr_classes, "Class ids to include (default: all)");
  plot->add_option("--condition", pr_conditions, "Conditions to include (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (synth->parsed()) {
    const RunConfig cfg = resolve(synth_c);
    const int n = synth_frames >= 0 ? synth_frames : cfg.synth.n_frames;
    const auto entries = pipeline::synthesize_to(cfg, synth_out, n);
    std::cerr << "wrote " << entries.size() << " frames to " << synth_out << '\n';
  } else if (train->parsed()) {
    const RunConfig cfg = resolve(train_c);
    const auto data = pipeline::load(train_data);
    DinoRadeModel model(cfg.model, cfg.seed);
    auto opt = train::TrainOptions::from(cfg);
    opt.out_dir = train_out;
    std::filesystem::create_directories(train_out);
    write_json(std::filesystem::path(train_out) / "config.json", cfg.to_json());
    const auto res = train::train(model, data.frames, opt);
    std::cerr << "trained " << res.steps.size() << " steps, final loss " << res.steps.back().total << '\n';
  } else if (eval->parsed()) {
    const RunConfig cfg = resolve(eval_c);
    const auto data = pipeline::load(eval_data);
    std::map<std::string, std::vector<Box3D>> dets;
    if (eval_gt) {
      for (std::size_t i = 0; i < data.frames.size(); ++i) dets[data.ids[i]] = data.frames[i].boxes;
    } else if (!eval_dets.empty()) {
      dets = head::read_detections(eval_dets);
    } else {
      if (eval_ckpt.empty()) throw ConfigError("eval needs --checkpoint, --detections or --gt-as-detections");
      const DinoRadeModel model = pipeline::load_model(cfg, eval_ckpt);
      dets = pipeline::detect_all(model, data, cfg.head.decode);
      std::filesystem::create_directories(eval_out);
      std::ofstream out(std::filesystem::path(eval_out) / "detections.jsonl");
      for (const auto& [id, boxes] : dets) head::write_detections(out, id, boxes);
    }
    const auto report = eval::build_report(dets, pipeline::ground_truth(data), cfg.eval);
    eval::write_report(report, eval_out);
    std::cout << report.to_text();
  } else if (infer->parsed()) {
    RunConfig cfg = resolve(infer_c);
    if (infer_threshold >= 0.0) cfg.head.decode.score_threshold = infer_threshold;
    const dataio::Frame frame = dataio::read_frame(infer_frame);
    const DinoRadeModel model =
        infer_ckpt.empty() ? DinoRadeModel(cfg.model, cfg.seed) : pipeline::load_model(cfg, infer_ckpt);
    const auto boxes = train::infer(model, frame, cfg.head.decode);
    const std::string id = pipeline::frame_id(infer_frame);
    if (infer_out.empty()) {
      head::write_detections(std::cout, id, boxes);
    } else {
      std::ofstream out(infer_out);
      if (!out) throw Error("cannot write " + infer_out);
      head::write_detections(out, id, boxes);
    }
    if (!infer_plot.empty())
      raster::write_png(raster::render_bev(frame.boxes, boxes, cfg.eval.roi, cfg.plot.width_px, cfg.plot.height_px),
                        infer_plot);
  } else if (plot->parsed()) {
    std::ifstream in(pr_report);
    if (!in) throw DataError("cannot read " + pr_report);
    nlohmann::json report;
    try {
      report = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(pr_report + ": " + e.what());
    }
    std::vector<std::string> skipped;
    raster::write_png(raster::render_pr(report, pr_classes, pr_conditions, 640, 480, &skipped), pr_out);
    for (const auto& s : skipped) std::cerr << "no PR points for " << s << ", skipped\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dinorade::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const dinorade::GeometryError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const dinorade::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const dinorade::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
