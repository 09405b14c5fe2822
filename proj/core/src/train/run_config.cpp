#include "fryshort/train/run_config.hpp"

#include <set>
#include <string>
#include <vector>

#include "fryshort/util/errors.hpp"

namespace fryshort::train {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) throw ConfigError("unknown config key \"" + where + "." + key + "\"");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for \"" + where + "." + key + "\": " + e.what());
  }
}

template <typename T, std::size_t N>
void read_array(const json& obj, const char* key, std::array<T, N>& out,
                const std::string& where) {
  if (!obj.contains(key)) return;
  const json& arr = obj.at(key);
  if (!arr.is_array() || arr.size() != N)
    throw ConfigError("\"" + where + "." + key + "\" must be an array of " + std::to_string(N));
  for (std::size_t i = 0; i < N; ++i) {
    try {
      out[i] = arr[i].get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value in \"" + where + "." + key + "\": " + e.what());
    }
  }
}

std::string fusion_method_name(model::FusionMethod m) {
  return m == model::FusionMethod::film ? "film" : "concat";
}

model::FusionMethod fusion_method_parse(const std::string& s) {
  if (s == "film") return model::FusionMethod::film;
  if (s == "concat") return model::FusionMethod::concat;
  throw ConfigError("unknown fusion method: " + s);
}

}  // namespace

void RunConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (total_iters < 1) throw ConfigError("total_iters must be >= 1");
  if (warmup_iters < 0 || warmup_iters >= total_iters)
    throw ConfigError("warmup_iters must lie in [0, total_iters)");
  if (base_lr <= 0.0 || weight_decay < 0.0) throw ConfigError("bad optimizer settings");
  if (augment.scale_min <= 0.0 || augment.scale_max < augment.scale_min)
    throw ConfigError("augment scale range must satisfy 0 < min <= max");
  const auto m = model.switches.da_method;
  if ((m == model::DaMethod::mmd || m == model::DaMethod::coral) && batch_size < 2)
    throw ConfigError("distributional domain alignment needs batch_size >= 2");
  if (model.image_h % 32 != 0 || model.image_w % 32 != 0)
    throw ConfigError("image size must be divisible by 32");
}

RunConfig toy_preset() { return RunConfig{}; }

RunConfig paper_shape_preset() {
  RunConfig cfg;
  cfg.total_iters = 40000;
  cfg.warmup_iters = 1500;
  cfg.model.image_h = 512;
  cfg.model.image_w = 512;
  cfg.model.backbone.stage_channels = {64, 128, 320, 512};
  cfg.model.backbone.stage_depths = {3, 4, 6, 3};
  cfg.model.encoder.embed_dim = 256;
  cfg.model.encoder.patch_size = 16;
  cfg.model.encoder.heads = 8;
  cfg.model.fusion.channels = 256;
  cfg.model.fusion.gn_groups = 32;
  cfg.model.dann.hidden = 256;
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["dataset"] = cfg.dataset_dir;
  j["seed"] = cfg.seed;
  j["train"] = {{"base_lr", cfg.base_lr},
                {"weight_decay", cfg.weight_decay},
                {"batch_size", cfg.batch_size},
                {"total_iters", cfg.total_iters},
                {"warmup_iters", cfg.warmup_iters},
                {"poly_power", cfg.poly_power}};
  j["augment"] = {{"resize", cfg.augment.resize},
                  {"scale_min", cfg.augment.scale_min},
                  {"scale_max", cfg.augment.scale_max},
                  {"hflip", cfg.augment.hflip},
                  {"photometric", cfg.augment.photometric}};
  const auto& m = cfg.model;
  j["model"]["image"] = {{"height", m.image_h}, {"width", m.image_w}};
  j["model"]["backbone"] = {
      {"channels", m.backbone.stage_channels},
      {"depths", m.backbone.stage_depths},
      {"attention", m.backbone.attention_enabled}};
  j["model"]["encoder"] = {{"depth", m.encoder.depth},
                           {"embed_dim", m.encoder.embed_dim},
                           {"patch_size", m.encoder.patch_size},
                           {"mask_ratio", m.encoder.mask_ratio},
                           {"heads", m.encoder.heads}};
  j["model"]["fusion"] = {{"channels", m.fusion.channels},
                          {"gn_groups", m.fusion.gn_groups},
                          {"alpha_init", m.fusion.film_alpha_init},
                          {"gate_bias", m.fusion.gate_bias_init}};
  j["model"]["dann"] = {{"hidden", m.dann.hidden},
                        {"lambda", m.dann.lambda_weight},
                        {"grl_alpha", m.dann.grl_alpha},
                        {"dropout", m.dann.dropout_p}};
  const auto& v = m.switches;
  j["variant"] = {{"enable_rgb", v.enable_rgb},
                  {"da_method", model::to_string(v.da_method)},
                  {"fusion_method", fusion_method_name(v.fusion_method)},
                  {"fused_regression", v.fused_regression},
                  {"enable_mae", v.enable_mae},
                  {"enable_chem", v.enable_chem},
                  {"enable_thermal_dann", v.enable_thermal_dann},
                  {"enable_rgb_dann", v.enable_rgb_dann}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  check_keys(j, {"dataset", "seed", "train", "augment", "model", "variant"}, "config");
  read(j, "dataset", cfg.dataset_dir, "config");
  read(j, "seed", cfg.seed, "config");

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, {"base_lr", "weight_decay", "batch_size", "total_iters", "warmup_iters",
                   "poly_power"},
               "train");
    read(t, "base_lr", cfg.base_lr, "train");
    read(t, "weight_decay", cfg.weight_decay, "train");
    read(t, "batch_size", cfg.batch_size, "train");
    read(t, "total_iters", cfg.total_iters, "train");
    read(t, "warmup_iters", cfg.warmup_iters, "train");
    read(t, "poly_power", cfg.poly_power, "train");
  }
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    check_keys(a, {"resize", "scale_min", "scale_max", "hflip", "photometric"}, "augment");
    read(a, "resize", cfg.augment.resize, "augment");
    read(a, "scale_min", cfg.augment.scale_min, "augment");
    read(a, "scale_max", cfg.augment.scale_max, "augment");
    read(a, "hflip", cfg.augment.hflip, "augment");
    read(a, "photometric", cfg.augment.photometric, "augment");
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, {"image", "backbone", "encoder", "fusion", "dann"}, "model");
    if (m.contains("image")) {
      const json& im = m.at("image");
      check_keys(im, {"height", "width"}, "model.image");
      read(im, "height", cfg.model.image_h, "model.image");
      read(im, "width", cfg.model.image_w, "model.image");
    }
    if (m.contains("backbone")) {
      const json& b = m.at("backbone");
      check_keys(b, {"channels", "depths", "attention"}, "model.backbone");
      read_array(b, "channels", cfg.model.backbone.stage_channels, "model.backbone");
      read_array(b, "depths", cfg.model.backbone.stage_depths, "model.backbone");
      read(b, "attention", cfg.model.backbone.attention_enabled, "model.backbone");
    }
    if (m.contains("encoder")) {
      const json& e = m.at("encoder");
      check_keys(e, {"depth", "embed_dim", "patch_size", "mask_ratio", "heads"}, "model.encoder");
      read(e, "depth", cfg.model.encoder.depth, "model.encoder");
      read(e, "embed_dim", cfg.model.encoder.embed_dim, "model.encoder");
      read(e, "patch_size", cfg.model.encoder.patch_size, "model.encoder");
      read(e, "mask_ratio", cfg.model.encoder.mask_ratio, "model.encoder");
      read(e, "heads", cfg.model.encoder.heads, "model.encoder");
    }
    if (m.contains("fusion")) {
      const json& f = m.at("fusion");
      check_keys(f, {"channels", "gn_groups", "alpha_init", "gate_bias"}, "model.fusion");
      read(f, "channels", cfg.model.fusion.channels, "model.fusion");
      read(f, "gn_groups", cfg.model.fusion.gn_groups, "model.fusion");
      read(f, "alpha_init", cfg.model.fusion.film_alpha_init, "model.fusion");
      read(f, "gate_bias", cfg.model.fusion.gate_bias_init, "model.fusion");
    }
    if (m.contains("dann")) {
      const json& d = m.at("dann");
      check_keys(d, {"hidden", "lambda", "grl_alpha", "dropout"}, "model.dann");
      read(d, "hidden", cfg.model.dann.hidden, "model.dann");
      read(d, "lambda", cfg.model.dann.lambda_weight, "model.dann");
      read(d, "grl_alpha", cfg.model.dann.grl_alpha, "model.dann");
      read(d, "dropout", cfg.model.dann.dropout_p, "model.dann");
    }
  }
  if (j.contains("variant")) {
    const json& v = j.at("variant");
    check_keys(v,
               {"enable_rgb", "da_method", "fusion_method", "fused_regression", "enable_mae",
                "enable_chem", "enable_thermal_dann", "enable_rgb_dann"},
               "variant");
    auto& sw = cfg.model.switches;
    read(v, "enable_rgb", sw.enable_rgb, "variant");
    std::string da_name, fusion_name;
    read(v, "da_method", da_name, "variant");
    read(v, "fusion_method", fusion_name, "variant");
    if (!da_name.empty()) sw.da_method = model::da_method_from_string(da_name);
    if (!fusion_name.empty()) sw.fusion_method = fusion_method_parse(fusion_name);
    read(v, "fused_regression", sw.fused_regression, "variant");
    read(v, "enable_mae", sw.enable_mae, "variant");
    read(v, "enable_chem", sw.enable_chem, "variant");
    read(v, "enable_thermal_dann", sw.enable_thermal_dann, "variant");
    read(v, "enable_rgb_dann", sw.enable_rgb_dann, "variant");
  }
  cfg.model.fusion.method = cfg.model.switches.fusion_method;
  cfg.validate();
  return cfg;
}

json to_json(const GenerateSpec& spec) {
  const auto& g = spec.generator;
  json j;
  j["seed"] = spec.seed;
  j["videos"] = {{"total", g.total_videos}, {"frames_per_video", g.frames_per_video}};
  j["image"] = {{"height", g.image_h}, {"width", g.image_w}};
  j["shortcut_strength"] = g.shortcut_strength;
  j["clean_contrast"] = g.clean_contrast;
  j["good_totox"] = {g.good_totox_min, g.good_totox_max};
  j["replace_totox"] = {g.replace_totox_min, g.replace_totox_max};
  j["temp_f"] = {g.temp_min_f, g.temp_max_f};
  return j;
}

GenerateSpec generate_spec_from_json(const json& j) {
  GenerateSpec spec;
  check_keys(j,
             {"seed", "videos", "image", "shortcut_strength", "clean_contrast", "good_totox",
              "replace_totox", "temp_f"},
             "config");
  read(j, "seed", spec.seed, "config");
  auto& g = spec.generator;
  if (j.contains("videos")) {
    const json& v = j.at("videos");
    check_keys(v, {"total", "frames_per_video"}, "videos");
    read(v, "total", g.total_videos, "videos");
    read(v, "frames_per_video", g.frames_per_video, "videos");
  }
  if (j.contains("image")) {
    const json& im = j.at("image");
    check_keys(im, {"height", "width"}, "image");
    read(im, "height", g.image_h, "image");
    read(im, "width", g.image_w, "image");
  }
  read(j, "shortcut_strength", g.shortcut_strength, "config");
  read(j, "clean_contrast", g.clean_contrast, "config");
  auto read_range = [&](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    std::array<double, 2> r{lo, hi};
    read_array(j, key, r, "config");
    lo = r[0];
    hi = r[1];
    if (hi < lo) throw ConfigError(std::string(key) + " range must be ordered");
  };
  read_range("good_totox", g.good_totox_min, g.good_totox_max);
  read_range("replace_totox", g.replace_totox_min, g.replace_totox_max);
  read_range("temp_f", g.temp_min_f, g.temp_max_f);
  if (g.total_videos < 3) throw ConfigError("videos.total must be >= 3");
  if (g.frames_per_video < 1) throw ConfigError("videos.frames_per_video must be >= 1");
  if (g.image_h < 8 || g.image_w < 8) throw ConfigError("image size too small");
  return spec;
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key.path=value, got \"" + assignment + "\"");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("empty key segment in override \"" + assignment + "\"");
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null())
      throw ConfigError("override path \"" + path + "\" descends into a non-object");
    start = dot + 1;
  }
}

json parse_config_text(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON");
  return j;
}

}  // namespace fryshort::train
