#pragma once

#include <string>
#include <vector>

#include "fryshort/train/trainer.hpp"

namespace fryshort::train {

/// The in-scope ablation grid, in fixed report order: pipeline construction,
/// component removals, domain-alignment methods, fusion method, no-MAE.
const std::vector<std::string>& ablation_variants();

/// Switch assignment for one named variant. Throws ConfigError for names
/// outside the grid.
model::VariantSwitches variant_switches(const std::string& name);

struct AblationRow {
  std::string variant;
  MetricsReport test;
  double probe_accuracy = 0.0;
};

/// Trains and evaluates every variant of the grid with the base config's
/// budget and seed. Each variant writes a full run directory under
/// `out_dir`/runs/<name>; the summary table lands in
/// `out_dir`/metrics/ablation.csv.
std::vector<AblationRow> run_ablation(const RunConfig& base, const LoadedDataset& ds,
                                      const std::string& out_dir);

}  // namespace fryshort::train
