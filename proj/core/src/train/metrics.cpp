#include "fryshort/train/metrics.hpp"

#include <string>

#include "fryshort/util/errors.hpp"

namespace fryshort::train {

ConfusionMatrix::ConfusionMatrix(int n_classes) : n_classes_(n_classes) {
  if (n_classes < 1) throw ConfigError("confusion matrix needs >= 1 class");
  counts_.assign(static_cast<std::size_t>(n_classes) * n_classes, 0);
}

void ConfusionMatrix::add(int gt, int pred) {
  if (gt < 0 || gt >= n_classes_ || pred < 0 || pred >= n_classes_)
    throw ContractViolation("label " + std::to_string(gt) + "/" + std::to_string(pred) +
                            " outside the class range");
  ++counts_[static_cast<std::size_t>(gt) * n_classes_ + pred];
}

void ConfusionMatrix::add_map(const std::vector<std::uint8_t>& gt,
                              const std::vector<std::uint8_t>& pred) {
  if (gt.size() != pred.size()) throw ContractViolation("mask size mismatch");
  for (std::size_t i = 0; i < gt.size(); ++i) add(gt[i], pred[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_classes_ != n_classes_) throw ContractViolation("class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::int64_t ConfusionMatrix::at(int gt, int pred) const {
  return counts_[static_cast<std::size_t>(gt) * n_classes_ + pred];
}

SegScores seg_scores(const ConfusionMatrix& cm) {
  const int n = cm.n_classes();
  SegScores out;
  out.per_class.resize(static_cast<std::size_t>(n));
  int counted = 0;
  for (int c = 0; c < n; ++c) {
    std::int64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (int other = 0; other < n; ++other) {
      if (other == c) continue;
      fp += cm.at(other, c);
      fn += cm.at(c, other);
    }
    auto& score = out.per_class[static_cast<std::size_t>(c)];
    score.present = (tp + fp + fn) > 0;
    if (!score.present) continue;
    score.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    score.f1 = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
    out.miou += score.iou;
    out.mf1 += score.f1;
    ++counted;
  }
  if (counted > 0) {
    out.miou /= counted;
    out.mf1 /= counted;
  }
  return out;
}

double denormalize(double z, const data::TargetStats& stats) {
  return z * stats.stddev + stats.mean;
}

}  // namespace fryshort::train
