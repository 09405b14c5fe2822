#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "fryshort/data/manifest.hpp"
#include "fryshort/model/network.hpp"
#include "fryshort/train/schedule.hpp"

namespace fryshort::train {

struct AugmentConfig {
  bool resize = true;
  double scale_min = 0.5;
  double scale_max = 2.0;
  bool hflip = true;
  bool photometric = true;
};

/// Everything a training run needs; archived verbatim as config.lock so any
/// run is replayable from the file alone.
struct RunConfig {
  std::string dataset_dir;
  std::uint64_t seed = 0;

  double base_lr = 6e-5;
  double weight_decay = 1e-2;
  std::int64_t batch_size = 4;
  std::int64_t total_iters = 2000;
  std::int64_t warmup_iters = 150;
  double poly_power = 1.0;

  AugmentConfig augment;
  model::ModelConfig model;

  Schedule schedule() const {
    return Schedule{base_lr, warmup_iters, total_iters, poly_power};
  }
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// Presets selectable from the command line. "toy" is the desk-scale
/// default; "paper-shape" mirrors the published architecture widths and is
/// meant for shape checking, not desk-scale training.
RunConfig toy_preset();
RunConfig paper_shape_preset();

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Dataset-generation settings for the `generate` command.
struct GenerateSpec {
  data::GeneratorConfig generator;
  std::uint64_t seed = 1234;
};

nlohmann::json to_json(const GenerateSpec& spec);
GenerateSpec generate_spec_from_json(const nlohmann::json& j);

/// Applies one dotted-path override ("train.total_iters=500") onto a JSON
/// tree. The value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& root, const std::string& assignment);

/// Parses a JSON document, mapping parse failures to ConfigError.
nlohmann::json parse_config_text(const std::string& text);

}  // namespace fryshort::train
