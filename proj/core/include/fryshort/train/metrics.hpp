#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fryshort/data/manifest.hpp"

namespace fryshort::train {

/// Pixel confusion-matrix accumulator; rows = ground truth, cols = predicted.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n_classes = 3);

  void add(int gt, int pred);
  void add_map(const std::vector<std::uint8_t>& gt, const std::vector<std::uint8_t>& pred);
  void merge(const ConfusionMatrix& other);

  std::int64_t at(int gt, int pred) const;
  int n_classes() const { return n_classes_; }

 private:
  int n_classes_;
  std::vector<std::int64_t> counts_;
};

struct ClassScore {
  double iou = 0.0;
  double f1 = 0.0;
  bool present = false;  // appears in ground truth or prediction
};

/// Per-class IoU/F1 and their means as fractions in [0, 1]. Classes absent
/// from both ground truth and prediction are excluded from the means.
struct SegScores {
  std::vector<ClassScore> per_class;
  double miou = 0.0;
  double mf1 = 0.0;
};

SegScores seg_scores(const ConfusionMatrix& cm);

/// Inverse of z-scoring: z·σ + μ.
double denormalize(double z, const data::TargetStats& stats);

/// Split-level evaluation summary. Fractions in [0, 1]; MAE in raw units.
struct MetricsReport {
  SegScores seg;
  double cls_accuracy = 0.0;
  std::array<double, 4> mae{};  // pv, p_av, totox, temp
  double mean_mae = 0.0;
  std::int64_t n_frames = 0;
};

}  // namespace fryshort::train
