#include "dinorade/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <numbers>

#include "dinorade/errors.hpp"

namespace dinorade {

using nlohmann::json;

geometry::CameraModel CameraSetup::model() const {
  return geometry::CameraModel::forward_looking(height_px, width_px, hfov_deg * std::numbers::pi / 180.0,
                                                mount_height_m);
}

RunConfig RunConfig::desk() {
  RunConfig c;
  auto& g = c.model.grid;
  g.n_range = 32;
  g.n_azimuth = 16;
  g.n_elevation = 4;
  g.range_bounds_m = {0.0, 76.8};
  g.azimuth_bounds_rad = {-std::numbers::pi / 4, std::numbers::pi / 4};
  g.elevation_bounds_m = {-2.0, 6.0};
  c.model.backbone.channels = 32;
  c.model.vision = vision::VisionConfig{};
  vision::VisionConfig alt;
  alt.stub_seed = 0xa17;
  alt.vit_channels = 64;
  c.model.alt_vision = alt;
  c.scene.n_range_raw = 64;
  c.scene.n_azimuth_raw = 32;
  c.model.n_doppler = c.scene.n_doppler;
  c.model.n_elevation_raw = c.scene.n_elevation_raw;
  return c;
}

RunConfig RunConfig::paper() {
  RunConfig c = desk();
  auto& g = c.model.grid;
  g.n_range = 256;
  g.n_azimuth = 112;
  g.n_elevation = 10;
  g.range_bounds_m = {0.0, 76.8};
  c.model.backbone.channels = 128;
  c.model.vision->vit_channels = 384;
  c.model.alt_vision->vit_channels = 384;
  c.scene.n_range_raw = 512;
  c.scene.n_azimuth_raw = 224;
  c.scene.n_doppler = 64;
  c.scene.n_elevation_raw = 37;
  c.model.n_doppler = 64;
  c.model.n_elevation_raw = 37;
  c.camera.height_px = 720;
  c.camera.width_px = 1280;
  c.model.attention.n_points = 4;
  c.plot = {720, 960};
  return c;
}

void RunConfig::validate() const {
  model.validate();
  scene.validate(model.grid);
  if (scene.n_doppler != model.n_doppler || scene.n_elevation_raw != model.n_elevation_raw)
    throw ConfigError("scene and model disagree on raw Doppler/elevation bins");
  if (scene.n_range_raw != model.grid.n_range * model.backbone.downsample ||
      scene.n_azimuth_raw != model.grid.n_azimuth * model.backbone.downsample)
    throw ConfigError("raw radar grid must equal the feature grid times backbone.downsample");
  if (camera.height_px < 1 || camera.width_px < 1 || !(camera.hfov_deg > 0 && camera.hfov_deg < 180))
    throw ConfigError("invalid camera setup");
  for (const auto* v : {&model.vision, &model.alt_vision})
    if (*v && (camera.height_px % (*v)->patch_size != 0 || camera.width_px % (*v)->patch_size != 0))
      throw ConfigError("image size must be divisible by the vision patch size");
  if (synth.n_frames < 0 || synth.objects_min < 0 || synth.objects_max < synth.objects_min)
    throw ConfigError("invalid synth counts");
  if (synth.conditions.empty()) throw ConfigError("synth.conditions must not be empty");
  for (const auto& c : synth.conditions)
    if (!(c.weight >= 0)) throw ConfigError("condition weights must be non-negative");
  if (!(head.sigma > 0)) throw ConfigError("head.sigma must be positive");
  if (head.decode.top_k < 0) throw ConfigError("head.top_k must be >= 0");
  loss.validate();
  eval.validate();
  if (!(optimizer.learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (optimizer.min_learning_rate < 0 || optimizer.min_learning_rate > optimizer.learning_rate)
    throw ConfigError("min_learning_rate must be in [0, learning_rate]");
  if (optimizer.weight_decay < 0 || optimizer.batch_size < 1 || optimizer.epochs < 1 || optimizer.max_steps < 0)
    throw ConfigError("invalid optimizer settings");
  if (plot.width_px < 16 || plot.height_px < 16) throw ConfigError("plot size too small");
}

namespace {

json pair_json(const std::pair<double, double>& p) { return {p.first, p.second}; }

std::pair<double, double> pair_from(const json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2) throw ConfigError(std::string(key) + " needs two values");
  return {v[0], v[1]};
}

json vision_json(const std::optional<vision::VisionConfig>& v) {
  if (!v) return nullptr;
  return {{"backend", v->backend},
          {"external_path", v->external_path},
          {"patch_size", v->patch_size},
          {"vit_channels", v->vit_channels},
          {"stub_seed", v->stub_seed}};
}

std::optional<vision::VisionConfig> vision_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  vision::VisionConfig v;
  v.backend = j.at("backend").get<std::string>();
  v.external_path = j.at("external_path").get<std::string>();
  v.patch_size = j.at("patch_size").get<int>();
  v.vit_channels = j.at("vit_channels").get<int>();
  v.stub_seed = j.at("stub_seed").get<std::uint64_t>();
  return v;
}

// Rejects keys of `user` that do not exist in `ref`. Sections that are null
// in the defaults accept any object.
void check_keys(const json& user, const json& ref, const std::string& where) {
  if (!user.is_object() || !ref.is_object()) return;
  for (const auto& [k, v] : user.items()) {
    if (!ref.contains(k)) throw ConfigError("unknown config key '" + where + k + "'");
    check_keys(v, ref.at(k), where + k + ".");
  }
}

}  // namespace

json RunConfig::to_json() const {
  const auto& g = model.grid;
  json conditions = json::array();
  for (const auto& c : synth.conditions)
    conditions.push_back({{"tag", c.tag}, {"weight", c.weight}, {"occlusion", std::string(dataio::occlusion_name(c.occlusion))}});
  return {
      {"seed", seed},
      {"ablation_mode", std::string(mode_name(model.mode))},
      {"grid",
       {{"n_range", g.n_range},
        {"n_azimuth", g.n_azimuth},
        {"n_elevation", g.n_elevation},
        {"range_bounds_m", pair_json(g.range_bounds_m)},
        {"azimuth_bounds_rad", pair_json(g.azimuth_bounds_rad)},
        {"elevation_bounds_m", pair_json(g.elevation_bounds_m)}}},
      {"scene",
       {{"n_range_raw", scene.n_range_raw},
        {"n_azimuth_raw", scene.n_azimuth_raw},
        {"n_doppler", scene.n_doppler},
        {"n_elevation_raw", scene.n_elevation_raw},
        {"elevation_angle_bounds_rad", pair_json(scene.elevation_angle_bounds_rad)},
        {"velocity_window_mps", scene.velocity_window_mps},
        {"max_speed_mps", scene.max_speed_mps},
        {"noise_mean", scene.noise_mean},
        {"dims_jitter", scene.dims_jitter},
        {"class_agnostic_radar", scene.class_agnostic_radar},
        {"min_bin_separation", scene.min_bin_separation},
        {"max_retries", scene.max_retries},
        {"min_blob_px", scene.min_blob_px},
        {"roi",
         {{"x_bounds_m", pair_json(scene.roi.x_bounds_m)},
          {"y_bounds_m", pair_json(scene.roi.y_bounds_m)},
          {"z_bounds_m", pair_json(scene.roi.z_bounds_m)}}}}},
      {"camera",
       {{"height_px", camera.height_px},
        {"width_px", camera.width_px},
        {"hfov_deg", camera.hfov_deg},
        {"mount_height_m", camera.mount_height_m}}},
      {"backbone",
       {{"channels", model.backbone.channels},
        {"encoder_convs", model.backbone.encoder_convs},
        {"downsample", model.backbone.downsample},
        {"trunk_blocks", model.backbone.trunk_blocks}}},
      {"vision", vision_json(model.vision)},
      {"alt_vision", vision_json(model.alt_vision)},
      {"lifting", {{"hidden", model.lifting.hidden}, {"per_channel", model.lifting.per_channel}}},
      {"attention",
       {{"n_points", model.attention.n_points},
        {"n_heads", model.attention.n_heads},
        {"offset_scale", model.attention.offset_scale},
        {"n_layers", model.attention.n_layers},
        {"output_bias", model.attention.output_bias}}},
      {"fusion", {{"per_channel", model.fusion.per_channel}}},
      {"head",
       {{"sigma", head.sigma},
        {"score_threshold", head.decode.score_threshold},
        {"top_k", head.decode.top_k},
        {"prior_bias", model.head_prior_bias}}},
      {"loss", {{"w_focal", loss.w_focal}, {"w_gwd", loss.w_gwd}, {"w_l1", loss.w_l1}, {"gwd_tau", loss.gwd_tau}}},
      {"eval",
       {{"iou_threshold", eval.iou_threshold},
        {"interpolation_points", eval.interpolation_points},
        {"roi",
         {{"x_bounds_m", pair_json(eval.roi.x_bounds_m)},
          {"y_bounds_m", pair_json(eval.roi.y_bounds_m)},
          {"z_bounds_m", pair_json(eval.roi.z_bounds_m)}}}}},
      {"optimizer",
       {{"learning_rate", optimizer.learning_rate},
        {"weight_decay", optimizer.weight_decay},
        {"min_learning_rate", optimizer.min_learning_rate},
        {"batch_size", optimizer.batch_size},
        {"epochs", optimizer.epochs},
        {"max_steps", optimizer.max_steps}}},
      {"synth",
       {{"n_frames", synth.n_frames},
        {"objects_min", synth.objects_min},
        {"objects_max", synth.objects_max},
        {"conditions", conditions}}},
      {"plot", {{"width_px", plot.width_px}, {"height_px", plot.height_px}}},
  };
}

RunConfig RunConfig::from_json(const json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  json j = desk().to_json();
  check_keys(user, j, "");
  j.merge_patch(user);
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto mode = parse_mode(j.at("ablation_mode").get<std::string>());
    if (!mode) throw ConfigError("ablation_mode must be one of R, R+C, R+C+W, R+C*+W");
    c.model.mode = *mode;
    const json& g = j.at("grid");
    auto& grid = c.model.grid;
    grid.n_range = g.at("n_range").get<int>();
    grid.n_azimuth = g.at("n_azimuth").get<int>();
    grid.n_elevation = g.at("n_elevation").get<int>();
    grid.range_bounds_m = pair_from(g, "range_bounds_m");
    grid.azimuth_bounds_rad = pair_from(g, "azimuth_bounds_rad");
    grid.elevation_bounds_m = pair_from(g, "elevation_bounds_m");

    const json& s = j.at("scene");
    auto& sc = c.scene;
    sc.n_range_raw = s.at("n_range_raw").get<int>();
    sc.n_azimuth_raw = s.at("n_azimuth_raw").get<int>();
    sc.n_doppler = s.at("n_doppler").get<int>();
    sc.n_elevation_raw = s.at("n_elevation_raw").get<int>();
    sc.elevation_angle_bounds_rad = pair_from(s, "elevation_angle_bounds_rad");
    sc.velocity_window_mps = s.at("velocity_window_mps").get<double>();
    sc.max_speed_mps = s.at("max_speed_mps").get<double>();
    sc.noise_mean = s.at("noise_mean").get<double>();
    sc.dims_jitter = s.at("dims_jitter").get<double>();
    sc.class_agnostic_radar = s.at("class_agnostic_radar").get<bool>();
    sc.min_bin_separation = s.at("min_bin_separation").get<int>();
    sc.max_retries = s.at("max_retries").get<int>();
    sc.min_blob_px = s.at("min_blob_px").get<double>();
    sc.roi.x_bounds_m = pair_from(s.at("roi"), "x_bounds_m");
    sc.roi.y_bounds_m = pair_from(s.at("roi"), "y_bounds_m");
    sc.roi.z_bounds_m = pair_from(s.at("roi"), "z_bounds_m");
    c.model.n_doppler = sc.n_doppler;
    c.model.n_elevation_raw = sc.n_elevation_raw;

    const json& cam = j.at("camera");
    c.camera.height_px = cam.at("height_px").get<int>();
    c.camera.width_px = cam.at("width_px").get<int>();
    c.camera.hfov_deg = cam.at("hfov_deg").get<double>();
    c.camera.mount_height_m = cam.at("mount_height_m").get<double>();

    const json& b = j.at("backbone");
    c.model.backbone.channels = b.at("channels").get<int>();
    c.model.backbone.encoder_convs = b.at("encoder_convs").get<int>();
    c.model.backbone.downsample = b.at("downsample").get<int>();
    c.model.backbone.trunk_blocks = b.at("trunk_blocks").get<int>();
    c.model.vision = vision_from(j.value("vision", json(nullptr)));
    c.model.alt_vision = vision_from(j.value("alt_vision", json(nullptr)));
    c.model.lifting.hidden = j.at("lifting").at("hidden").get<int>();
    c.model.lifting.per_channel = j.at("lifting").at("per_channel").get<bool>();
    const json& a = j.at("attention");
    c.model.attention.n_points = a.at("n_points").get<int>();
    c.model.attention.n_heads = a.at("n_heads").get<int>();
    c.model.attention.offset_scale = a.at("offset_scale").get<double>();
    c.model.attention.n_layers = a.at("n_layers").get<int>();
    c.model.attention.output_bias = a.at("output_bias").get<bool>();
    c.model.fusion.per_channel = j.at("fusion").at("per_channel").get<bool>();

    const json& h = j.at("head");
    c.head.sigma = h.at("sigma").get<double>();
    c.head.decode.score_threshold = h.at("score_threshold").get<double>();
    c.head.decode.top_k = h.at("top_k").get<int>();
    c.model.head_prior_bias = h.at("prior_bias").get<double>();

    const json& l = j.at("loss");
    c.loss.w_focal = l.at("w_focal").get<double>();
    c.loss.w_gwd = l.at("w_gwd").get<double>();
    c.loss.w_l1 = l.at("w_l1").get<double>();
    c.loss.gwd_tau = l.at("gwd_tau").get<double>();

    const json& e = j.at("eval");
    c.eval.iou_threshold = e.at("iou_threshold").get<double>();
    c.eval.interpolation_points = e.at("interpolation_points").get<int>();
    c.eval.roi.x_bounds_m = pair_from(e.at("roi"), "x_bounds_m");
    c.eval.roi.y_bounds_m = pair_from(e.at("roi"), "y_bounds_m");
    c.eval.roi.z_bounds_m = pair_from(e.at("roi"), "z_bounds_m");

    const json& o = j.at("optimizer");
    c.optimizer.learning_rate = o.at("learning_rate").get<double>();
    c.optimizer.weight_decay = o.at("weight_decay").get<double>();
    c.optimizer.min_learning_rate = o.at("min_learning_rate").get<double>();
    c.optimizer.batch_size = o.at("batch_size").get<int>();
    c.optimizer.epochs = o.at("epochs").get<int>();
    c.optimizer.max_steps = o.at("max_steps").get<long>();

    const json& sy = j.at("synth");
    c.synth.n_frames = sy.at("n_frames").get<int>();
    c.synth.objects_min = sy.at("objects_min").get<int>();
    c.synth.objects_max = sy.at("objects_max").get<int>();
    c.synth.conditions.clear();
    for (const json& cj : sy.at("conditions")) {
      ConditionSpec cs;
      cs.tag = cj.at("tag").get<std::string>();
      cs.weight = cj.value("weight", 1.0);
      const auto occ = dataio::parse_occlusion(cj.value("occlusion", std::string("none")));
      if (!occ) throw ConfigError("unknown occlusion mode in condition '" + cs.tag + "'");
      cs.occlusion = *occ;
      c.synth.conditions.push_back(cs);
    }
    c.plot.width_px = j.at("plot").at("width_px").get<int>();
    c.plot.height_px = j.at("plot").at("height_px").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void apply_env_overrides(json& j) {
  for (auto& [key, value] : j.items()) {
    if (value.is_object() || value.is_array()) continue;
    std::string env = "RADE_";
    for (char ch : key) env += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const char* raw = std::getenv(env.c_str());
    if (!raw) continue;
    const std::string s(raw);
    try {
      if (value.is_string() || value.is_null())
        value = s;
      else
        value = json::parse(s);
    } catch (const json::exception&) {
      throw ConfigError(env + "='" + s + "' is not a valid value for '" + key + "'");
    }
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config " + path.string() + ": " + e.what());
    }
  }
  json full = RunConfig::desk().to_json();
  check_keys(j, full, "");
  full.merge_patch(j);
  apply_env_overrides(full);
  return RunConfig::from_json(full);
}

}  // namespace dinorade
