#pragma once

#include <string>

namespace fryshort::train {

/// SVG line chart of the training total loss with the validation mIoU
/// overlaid on a secondary axis. Inputs are the raw CSV texts written by the
/// trainer. Pure text-to-text: identical inputs give identical bytes.
/// Throws std::runtime_error when either CSV has no data rows.
std::string render_loss_curves(const std::string& train_csv, const std::string& val_csv);

/// SVG bar chart of the four per-target MAE values from the last validation
/// row. Same determinism and error contract as render_loss_curves.
std::string render_mae_bars(const std::string& val_csv);

}  // namespace fryshort::train
