#include "fryshort/train/ablation.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fryshort/train/probe.hpp"
#include "fryshort/util/errors.hpp"

namespace fryshort::train {

namespace fs = std::filesystem;

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> names = {
      "thermal_only", "thermal_dann", "dual_dann",  "full",          "no_thermal_dann", "no_chem",
      "no_all_dann",  "da_mmd",       "da_coral",   "fusion_concat", "no_mae"};
  return names;
}

model::VariantSwitches variant_switches(const std::string& name) {
  model::VariantSwitches sw;  // defaults describe the full model
  auto thermal_base = [] {
    model::VariantSwitches t;
    t.enable_rgb = false;
    t.da_method = model::DaMethod::none;
    t.fused_regression = false;
    t.enable_mae = false;
    t.enable_chem = false;
    t.enable_thermal_dann = false;
    t.enable_rgb_dann = false;
    return t;
  };

  if (name == "thermal_only") return thermal_base();
  if (name == "thermal_dann") {
    auto t = thermal_base();
    t.da_method = model::DaMethod::grl;
    t.enable_thermal_dann = true;
    return t;
  }
  if (name == "dual_dann") {
    sw.fused_regression = false;
    return sw;
  }
  if (name == "full") return sw;
  if (name == "no_thermal_dann") {
    sw.enable_thermal_dann = false;
    return sw;
  }
  if (name == "no_chem") {
    sw.enable_chem = false;
    return sw;
  }
  if (name == "no_all_dann") {
    sw.da_method = model::DaMethod::none;
    sw.enable_thermal_dann = false;
    sw.enable_rgb_dann = false;
    return sw;
  }
  if (name == "da_mmd") {
    sw.da_method = model::DaMethod::mmd;
    return sw;
  }
  if (name == "da_coral") {
    sw.da_method = model::DaMethod::coral;
    return sw;
  }
  if (name == "fusion_concat") {
    sw.fusion_method = model::FusionMethod::concat;
    return sw;
  }
  if (name == "no_mae") {
    sw.enable_mae = false;
    return sw;
  }
  throw ConfigError("unknown ablation variant: " + name);
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const LoadedDataset& ds,
                                      const std::string& out_dir) {
  std::vector<AblationRow> rows;
  fs::create_directories(fs::path(out_dir) / "metrics");

  for (const auto& name : ablation_variants()) {
    RunConfig cfg = base;
    cfg.model.switches = variant_switches(name);
    cfg.model.fusion.method = cfg.model.switches.fusion_method;

    const std::string run_dir = (fs::path(out_dir) / "runs" / name).string();
    Trainer trainer(cfg, ds, run_dir);
    trainer.train();
    AblationRow row;
    row.variant = name;
    row.test = evaluate(trainer.net(), ds.test, ds.manifest, cfg.batch_size);
    row.probe_accuracy = probe_audit(trainer.net(), ds, cfg.seed).accuracy;
    rows.push_back(row);
  }

  std::ofstream csv((fs::path(out_dir) / "metrics" / "ablation.csv").string());
  if (!csv) throw std::runtime_error("cannot write ablation table under " + out_dir);
  csv << "variant,test_miou,test_mf1,test_cls_acc,test_mean_mae,probe_acc\n";
  for (const auto& row : rows) {
    std::ostringstream line;
    line << row.variant << ',' << std::setprecision(12) << row.test.seg.miou << ','
         << row.test.seg.mf1 << ',' << row.test.cls_accuracy << ',' << row.test.mean_mae << ','
         << row.probe_accuracy;
    csv << line.str() << '\n';
  }
  return rows;
}

}  // namespace fryshort::train
