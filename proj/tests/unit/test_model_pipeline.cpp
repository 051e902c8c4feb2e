#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dinorade/config.hpp"
#include "dinorade/errors.hpp"
#include "dinorade/model.hpp"
#include "dinorade/pipeline.hpp"
#include "dinorade/raster.hpp"
#include "dinorade/training.hpp"
#include "oracles.hpp"

using namespace dinorade;
namespace fs = std::filesystem;

namespace {

RunConfig desk_mode(AblationMode m) {
  RunConfig cfg = RunConfig::desk();
  cfg.model.mode = m;
  return cfg;
}

bool has_prefix(const nn::ParameterStore& s, const std::string& prefix) {
  for (const auto& [name, t] : s.entries())
    if (name.rfind(prefix, 0) == 0) return true;
  return false;
}

std::size_t param_count(const nn::ParameterStore& s) {
  std::size_t n = 0;
  for (const auto& [name, t] : s.entries()) n += t.size();
  return n;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("ablation modes build the expected branches") {
    const DinoRadeModel r(desk_mode(AblationMode::kR).model, 1);
    const DinoRadeModel rc(desk_mode(AblationMode::kRC).model, 1);
    const DinoRadeModel rcw(desk_mode(AblationMode::kRCW).model, 1);
    const DinoRadeModel alt(desk_mode(AblationMode::kRCstarW).model, 1);
    CHECK_FALSE(r.has_camera_branch());
    CHECK(rc.has_camera_branch());
    CHECK_FALSE(has_prefix(r.params(), "xattn"));
    CHECK_FALSE(has_prefix(r.params(), "fusion"));
    CHECK(has_prefix(rc.params(), "xattn"));
    CHECK_FALSE(has_prefix(rc.params(), "lifting"));
    CHECK(has_prefix(rcw.params(), "lifting"));
    CHECK(param_count(r.params()) < param_count(rc.params()));
    CHECK(param_count(rc.params()) < param_count(rcw.params()));
    CHECK(param_count(alt.params()) != param_count(rcw.params()));
    CHECK(mode_name(AblationMode::kRCstarW) == "R+C*+W");
    CHECK(parse_mode("R+C+W") == AblationMode::kRCW);
    CHECK_FALSE(parse_mode("RCW").has_value());
  }

  TEST_CASE("mode R ignores the camera bit for bit") {
    const RunConfig cfg = desk_mode(AblationMode::kR);
    const DinoRadeModel m(cfg.model, 3);
    dataio::Frame f = pipeline::synthesize(cfg, 1)[0];
    const auto a = m.forward(f);
    for (float& v : f.image.data) v = 1.0f - v;
    f.camera.intrinsics(0, 0) *= 2.0;
    const auto b = m.forward(f);
    for (std::size_t i = 0; i < a.heatmaps.size(); ++i) REQUIRE(a.heatmaps[i] == b.heatmaps[i]);
    for (std::size_t i = 0; i < a.regression.size(); ++i) REQUIRE(a.regression[i] == b.regression[i]);
    CHECK_THROWS_AS(m.patch_features(f), ConfigError);
  }

  TEST_CASE("R+C lifts with uniform weights and conserves mass") {
    const RunConfig cfg = desk_mode(AblationMode::kRC);
    const DinoRadeModel m(cfg.model, 4);
    const auto tr = m.trace(pipeline::synthesize(cfg, 1)[0]);
    const int e = cfg.model.grid.n_elevation;
    for (double v : tr.w_e.data()) CHECK(v == 1.0 / e);
    const std::size_t n = tr.bev_rad.size();
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int k = 0; k < e; ++k) s += tr.m_q3d[i * e + k];
      worst = std::max(worst, std::abs(s - tr.bev_rad[i]) / std::max(1.0, std::abs(tr.bev_rad[i])));
    }
    CHECK(worst < 1e-12);
  }

  TEST_CASE("fresh R+C+W model: half gate, valid heads") {
    const RunConfig cfg = RunConfig::desk();
    const DinoRadeModel m(cfg.model, 5);
    const auto tr = m.trace(pipeline::synthesize(cfg, 1)[0]);
    for (double g : tr.gamma.data()) CHECK(g == 0.5);
    CHECK(tr.out.heatmaps.shape() == ag::Shape{32, 16, kNumClasses});
    CHECK(tr.fused.shape() == ag::Shape{32, 16, 32});
  }
}

TEST_SUITE("config") {
  TEST_CASE("profiles validate and round-trip through JSON") {
    const RunConfig desk = RunConfig::desk();
    desk.validate();
    const RunConfig paper = RunConfig::paper();
    paper.validate();
    CHECK(paper.model.grid.n_range == 256);
    CHECK(paper.model.grid.n_azimuth == 112);
    CHECK(paper.model.grid.n_elevation == 10);
    CHECK(RunConfig::from_json(desk.to_json()).to_json() == desk.to_json());
    CHECK(RunConfig::from_json(paper.to_json()).to_json() == paper.to_json());
  }

  TEST_CASE("partial documents merge over the desk defaults") {
    const RunConfig cfg = RunConfig::from_json({{"seed", 11}, {"optimizer", {{"batch_size", 2}}}});
    CHECK(cfg.seed == 11);
    CHECK(cfg.optimizer.batch_size == 2);
    CHECK(cfg.optimizer.learning_rate == RunConfig::desk().optimizer.learning_rate);
  }

  TEST_CASE("unknown keys and invalid values are rejected") {
    CHECK_THROWS_AS(RunConfig::from_json({{"sed", 1}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"optimizer", {{"learning_rate", -1.0}}}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"ablation_mode", "RCW"}}), ConfigError);
  }

  TEST_CASE("environment overrides top-level scalars") {
    nlohmann::json j = RunConfig::desk().to_json();
    ::setenv("RADE_SEED", "3", 1);
    apply_env_overrides(j);
    ::unsetenv("RADE_SEED");
    CHECK(RunConfig::from_json(j).seed == 3);
  }
}

TEST_SUITE("pipeline") {
  TEST_CASE("condition draws are seeded and follow the weights") {
    SynthConfig s;
    s.conditions = {{"clear", 0.5, dataio::OcclusionMode::kNone}, {"fog", 0.5, dataio::OcclusionMode::kHeavy}};
    const auto a = pipeline::draw_conditions(s, 42, 100);
    CHECK(a == pipeline::draw_conditions(s, 42, 100));
    CHECK(a != pipeline::draw_conditions(s, 43, 100));
    const auto fog = std::count(a.begin(), a.end(), 1u);
    CHECK(fog > 30);
    CHECK(fog < 70);
  }

  TEST_CASE("synthesis is deterministic and directory output is byte-identical") {
    RunConfig cfg = RunConfig::desk();
    const auto a = pipeline::synthesize(cfg, 3);
    const auto b = pipeline::synthesize(cfg, 3);
    for (int i = 0; i < 3; ++i) CHECK(a[i].projections.p_rad == b[i].projections.p_rad);
    const fs::path d1 = fs::temp_directory_path() / "dinorade_pipe_1", d2 = fs::temp_directory_path() / "dinorade_pipe_2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    pipeline::synthesize_to(cfg, d1, 3);
    pipeline::synthesize_to(cfg, d2, 3);
    for (const auto& e : fs::directory_iterator(d1)) {
      std::ifstream x(e.path(), std::ios::binary), y(d2 / e.path().filename(), std::ios::binary);
      const std::string sx{std::istreambuf_iterator<char>(x), std::istreambuf_iterator<char>()};
      const std::string sy{std::istreambuf_iterator<char>(y), std::istreambuf_iterator<char>()};
      CHECK(sx == sy);
    }
    const auto data = pipeline::load(d1);
    CHECK(data.ids == std::vector<std::string>{"frame_00000", "frame_00001", "frame_00002"});
  }

  TEST_CASE("training is bit-reproducible and the schedule is planned") {
    RunConfig cfg = RunConfig::desk();
    cfg.optimizer.batch_size = 2;
    cfg.optimizer.epochs = 2;
    CHECK(train::planned_steps(3, cfg.optimizer) == 4);
    cfg.optimizer.max_steps = 3;
    CHECK(train::planned_steps(3, cfg.optimizer) == 3);
    const auto frames = pipeline::synthesize(cfg, 3);
    auto run = [&] {
      DinoRadeModel m(cfg.model, cfg.seed);
      std::ostringstream log;
      auto opt = train::TrainOptions::from(cfg);
      opt.log = &log;
      train::train(m, frames, opt);
      const auto w = m.params().entries()[0].second.data();
      return std::make_pair(log.str(), std::vector<double>(w.begin(), w.end()));
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    REQUIRE(a.second.size() == b.second.size());
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.second.size(); ++i) diff += a.second[i] != b.second[i];
    CHECK(diff == 0);
    CHECK(std::count(a.first.begin(), a.first.end(), '\n') == 3);
  }

  TEST_CASE("empty dataset is an error") {
    const fs::path d = fs::temp_directory_path() / "dinorade_pipe_empty";
    fs::remove_all(d);
    fs::create_directories(d);
    std::ofstream(d / dataio::kManifestName) << "[]";
    CHECK_THROWS_AS(pipeline::load(d), DataError);
  }

  TEST_CASE("BEV overlay of ground truth drawn as predictions hides every ground-truth pixel") {
    const RunConfig cfg = RunConfig::desk();
    const auto boxes = pipeline::synthesize(cfg, 1)[0].boxes;
    const auto img = raster::render_bev(boxes, boxes, cfg.eval.roi, 480, 640, false);
    CHECK(img.width() == 480);
    CHECK(img.height() == 640);
    int white = 0, red = 0;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        white += img.at(x, y) == raster::kWhite;
        red += img.at(x, y) == raster::kRed;
      }
    CHECK(white == 0);
    CHECK(red > 0);
  }
}
