// fryshort — dataset generation, training, evaluation, ablation, probing and
// plotting for the dual-stream fryer monitor, driven by JSON configs.
//
// Exit codes: 0 ok, 2 config error, 3 I/O error, 4 contract violation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fryshort/data/chemistry.hpp"
#include "fryshort/data/dataset_io.hpp"
#include "fryshort/data/manifest.hpp"
#include "fryshort/nn/serialize.hpp"
#include "fryshort/train/ablation.hpp"
#include "fryshort/train/plots.hpp"
#include "fryshort/train/probe.hpp"
#include "fryshort/train/run_config.hpp"
#include "fryshort/train/trainer.hpp"
#include "fryshort/util/errors.hpp"
#include "fryshort/util/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fryshort;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string preset;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool out_required) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  auto* out = cmd->add_option("--out", opts.out_dir, "Output directory");
  if (out_required) out->required();
  cmd->add_option("--preset", opts.preset, "Base config preset")
      ->check(CLI::IsMember({"toy", "paper-shape"}));
  cmd->add_option("--overrides", opts.overrides,
                  "Dotted key=value assignments applied after the config file");
  cmd->add_option("--seed", opts.seed, "Master seed (applied last)");
}

std::string slurp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

// Objects merge key-by-key; anything else in `over` replaces the base value.
void deep_merge(json& base, const json& over) {
  if (!base.is_object() || !over.is_object()) {
    base = over;
    return;
  }
  for (const auto& [key, value] : over.items()) {
    if (base.contains(key))
      deep_merge(base[key], value);
    else
      base[key] = value;
  }
}

/// Layered config resolution: preset (or built-in defaults) under the file
/// config under --overrides, with --seed taking final precedence.
json effective_config(const CommonOpts& opts, const json& defaults) {
  json cfg = defaults;
  if (opts.preset == "paper-shape") cfg = train::to_json(train::paper_shape_preset());
  if (!opts.config_path.empty()) {
    auto text = slurp_file(opts.config_path);
    deep_merge(cfg, train::parse_config_text(text));
  }
  for (const auto& assignment : opts.overrides) train::apply_override(cfg, assignment);
  if (opts.seed) cfg["seed"] = *opts.seed;
  return cfg;
}

/// Archive the exact config a run used, so any command can be replayed from
/// the output directory alone.
void write_lock(const std::string& out_dir, const json& cfg) {
  fs::create_directories(out_dir);
  write_file(out_dir + "/config.lock", cfg.dump(2) + "\n");
}

train::RunConfig resolve_run_config(const CommonOpts& opts) {
  json cfg = effective_config(opts, train::to_json(train::toy_preset()));
  return train::run_config_from_json(cfg);
}

const char* class_name(data::OilClass c) {
  return c == data::OilClass::good ? "good" : "replace";
}

int cmd_generate(const CommonOpts& opts) {
  json cfg = effective_config(opts, train::to_json(train::GenerateSpec{}));
  auto spec = train::generate_spec_from_json(cfg);
  auto manifest = data::sample_manifest(spec.generator, spec.seed);
  data::write_dataset(manifest, opts.out_dir);
  write_lock(opts.out_dir, cfg);

  std::map<std::string, std::map<std::string, int>> counts;
  for (const auto& v : manifest.videos)
    ++counts[data::to_string(v.split)][class_name(data::classify_totox(v.chem.totox))];
  std::cout << "dataset written to " << opts.out_dir << "\n";
  for (const char* split : {"train", "val", "test"}) {
    auto& by_class = counts[split];
    std::cout << "  " << std::setw(5) << split << ": " << (by_class["good"] + by_class["replace"])
              << " videos (good " << by_class["good"] << ", replace " << by_class["replace"]
              << "), " << spec.generator.frames_per_video << " frames each\n";
  }
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  auto cfg = resolve_run_config(opts);
  if (cfg.dataset_dir.empty())
    throw ConfigError("train needs a dataset directory (config key \"dataset\")");
  auto ds = train::load_dataset(cfg.dataset_dir);
  write_lock(opts.out_dir, train::to_json(cfg));
  train::Trainer trainer(cfg, ds, opts.out_dir);
  auto result = trainer.train();
  std::cout << "trained " << cfg.total_iters << " iters; best val mIoU "
            << std::setprecision(4) << 100.0 * result.best_val_miou << "% at iter "
            << result.best_iter << "\n"
            << "checkpoints: " << result.best_checkpoint << ", " << result.last_checkpoint << "\n";
  return 0;
}

/// Rebuild the network a checkpoint was trained with. The config comes from
/// --config/--preset when given, otherwise from the copy stashed in the
/// checkpoint itself.
struct RestoredNet {
  train::RunConfig cfg;
  std::unique_ptr<model::DualStreamNet> net;
};

RestoredNet restore(const CommonOpts& opts, const std::string& checkpoint_path,
                    const train::LoadedDataset*& ds_out,
                    std::optional<train::LoadedDataset>& ds_storage) {
  auto ck = nn::load_checkpoint(checkpoint_path);
  RestoredNet r;
  if (opts.config_path.empty() && opts.preset.empty()) {
    auto it = ck.meta.find("config");
    if (it == ck.meta.end())
      throw ConfigError("checkpoint lacks an embedded config; pass --config");
    r.cfg = train::run_config_from_json(json::parse(it->second));
    for (const auto& assignment : opts.overrides) {
      json j = train::to_json(r.cfg);
      train::apply_override(j, assignment);
      r.cfg = train::run_config_from_json(j);
    }
  } else {
    r.cfg = resolve_run_config(opts);
  }
  if (r.cfg.dataset_dir.empty()) throw ConfigError("no dataset directory in effective config");
  ds_storage.emplace(train::load_dataset(r.cfg.dataset_dir));
  ds_out = &*ds_storage;
  Rng rng(r.cfg.seed);
  r.net = std::make_unique<model::DualStreamNet>(
      rng, r.cfg.model, static_cast<std::int64_t>(ds_out->train_video_ids.size()));
  nn::load_into(*r.net, ck);
  return r;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint, const std::string& split) {
  const train::LoadedDataset* ds = nullptr;
  std::optional<train::LoadedDataset> storage;
  auto restored = restore(opts, checkpoint, ds, storage);
  write_lock(opts.out_dir, train::to_json(restored.cfg));

  std::vector<train::FramePrediction> rows;
  auto report = train::evaluate(*restored.net, ds->split(data::split_from_string(split)),
                                ds->manifest, restored.cfg.batch_size, &rows);

  fs::create_directories(opts.out_dir + "/metrics");
  std::ostringstream metrics;
  metrics << std::setprecision(12);
  metrics << "miou,mf1,cls_acc,mae_pv,mae_p_av,mae_totox,mae_temp,mean_mae,n_frames\n"
          << report.seg.miou << ',' << report.seg.mf1 << ',' << report.cls_accuracy << ','
          << report.mae[0] << ',' << report.mae[1] << ',' << report.mae[2] << ','
          << report.mae[3] << ',' << report.mean_mae << ',' << report.n_frames << "\n";
  write_file(opts.out_dir + "/metrics/eval_" + split + ".csv", metrics.str());

  std::ostringstream preds;
  preds << std::setprecision(12);
  preds << "video_id,frame_idx,true_class,pred_class,pred_pv,pred_p_av,pred_totox,pred_temp\n";
  for (const auto& r : rows)
    preds << r.video_id << ',' << r.frame_idx << ',' << class_name(r.truth) << ','
          << class_name(r.predicted) << ',' << r.reg_raw[0] << ',' << r.reg_raw[1] << ','
          << r.reg_raw[2] << ',' << r.reg_raw[3] << "\n";
  write_file(opts.out_dir + "/metrics/predictions_" + split + ".csv", preds.str());

  std::cout << split << ": mIoU " << std::setprecision(4) << 100.0 * report.seg.miou
            << "%, mF1 " << 100.0 * report.seg.mf1 << "%, cls " << 100.0 * report.cls_accuracy
            << "%, mean MAE " << report.mean_mae << " (" << report.n_frames << " frames)\n";
  return 0;
}

int cmd_probe(const CommonOpts& opts, const std::string& checkpoint) {
  const train::LoadedDataset* ds = nullptr;
  std::optional<train::LoadedDataset> storage;
  auto restored = restore(opts, checkpoint, ds, storage);
  write_lock(opts.out_dir, train::to_json(restored.cfg));

  auto probe = train::probe_audit(*restored.net, *ds, restored.cfg.seed);
  fs::create_directories(opts.out_dir + "/metrics");
  std::ostringstream csv;
  csv << std::setprecision(12);
  csv << "accuracy,n_fit,n_held,n_classes\n"
      << probe.accuracy << ',' << probe.n_fit << ',' << probe.n_held << ',' << probe.n_classes
      << "\n";
  write_file(opts.out_dir + "/metrics/probe.csv", csv.str());
  std::cout << "camera-identity probe: " << std::setprecision(4) << 100.0 * probe.accuracy
            << "% over " << probe.n_classes << " cameras (" << probe.n_held << " held-out frames)\n";
  return 0;
}

int cmd_ablate(const CommonOpts& opts) {
  auto cfg = resolve_run_config(opts);
  if (cfg.dataset_dir.empty())
    throw ConfigError("ablate needs a dataset directory (config key \"dataset\")");
  auto ds = train::load_dataset(cfg.dataset_dir);
  write_lock(opts.out_dir, train::to_json(cfg));
  auto rows = train::run_ablation(cfg, ds, opts.out_dir);
  std::cout << std::left << std::setw(18) << "variant" << std::right << std::setw(9) << "mIoU%"
            << std::setw(9) << "cls%" << std::setw(10) << "MAE" << std::setw(9) << "probe%\n";
  for (const auto& r : rows)
    std::cout << std::left << std::setw(18) << r.variant << std::right << std::fixed
              << std::setprecision(1) << std::setw(9) << 100.0 * r.test.seg.miou << std::setw(9)
              << 100.0 * r.test.cls_accuracy << std::setprecision(2) << std::setw(10)
              << r.test.mean_mae << std::setprecision(1) << std::setw(8)
              << 100.0 * r.probe_accuracy << "\n";
  return 0;
}

int cmd_plot(const std::string& run_dir, const std::string& out_dir) {
  auto train_csv = slurp_file(run_dir + "/logs/train_log.csv");
  auto val_csv = slurp_file(run_dir + "/metrics/val_metrics.csv");

  // Render both images before touching the filesystem so a bad CSV leaves no
  // partial output behind.
  auto curves = train::render_loss_curves(train_csv, val_csv);
  auto bars = train::render_mae_bars(val_csv);

  fs::create_directories(out_dir);
  write_file(out_dir + "/loss_curves.svg", curves);
  write_file(out_dir + "/mae_bars.svg", bars);
  std::cout << "wrote " << out_dir << "/loss_curves.svg and " << out_dir << "/mae_bars.svg\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-stream fryer-oil monitor: synthetic data, training and analysis"};
  app.require_subcommand(1);

  CommonOpts gen_o, train_o, eval_o, ablate_o, probe_o;
  std::string eval_ckpt, probe_ckpt, eval_split = "test", plot_run, plot_out;

  auto* generate = app.add_subcommand("generate", "Sample a synthetic dataset");
  add_common(generate, gen_o, /*out_required=*/true);

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd, train_o, true);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_common(eval_cmd, eval_o, true);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--split", eval_split, "Dataset split")
      ->check(CLI::IsMember({"train", "val", "test"}));

  auto* ablate = app.add_subcommand("ablate", "Run the full ablation grid");
  add_common(ablate, ablate_o, true);

  auto* probe = app.add_subcommand("probe", "Linear camera-identity probe on fused features");
  add_common(probe, probe_o, true);
  probe->add_option("--checkpoint", probe_ckpt, "Checkpoint file")->required();

  auto* plot = app.add_subcommand("plot", "Render SVG charts from a run's CSV logs");
  plot->add_option("--run", plot_run, "Run directory with logs/ and metrics/")->required();
  plot->add_option("--out", plot_out, "Output directory (default <run>/plots)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(generate)) return cmd_generate(gen_o);
    if (app.got_subcommand(train_cmd)) return cmd_train(train_o);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(eval_o, eval_ckpt, eval_split);
    if (app.got_subcommand(ablate)) return cmd_ablate(ablate_o);
    if (app.got_subcommand(probe)) return cmd_probe(probe_o, probe_ckpt);
    if (app.got_subcommand(plot))
      return cmd_plot(plot_run, plot_out.empty() ? plot_run + "/plots" : plot_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
