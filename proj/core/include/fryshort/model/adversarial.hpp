#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fryshort/nn/module.hpp"

namespace fryshort::model {

using nn::Tensor;

enum class DaMethod { grl, mmd, coral, none };

DaMethod da_method_from_string(const std::string& s);
std::string to_string(DaMethod m);

struct DannConfig {
  double lambda_weight = 0.1;
  double grl_alpha = 1.0;
  std::int64_t hidden = 64;  // 256 at full size
  double dropout_p = 0.5;
};

/// Maps raw video ids to dense domain indices over the training videos.
/// Any id outside the training split is a contract violation.
class DomainIndex {
 public:
  explicit DomainIndex(std::vector<int> train_video_ids);
  std::int64_t at(int video_id) const;
  std::int64_t size() const { return static_cast<std::int64_t>(ids_.size()); }
  const std::vector<int>& ids() const { return ids_; }

 private:
  std::vector<int> ids_;  // sorted
};

/// Domain classifier: Linear → BatchNorm → ReLU → Dropout → Linear. Batch
/// norm always runs on batch statistics; the head never executes at
/// inference, so running estimates are irrelevant.
class DomainHead : public nn::Module {
 public:
  DomainHead(Rng& rng, std::int64_t in_dim, std::int64_t hidden, std::int64_t n_domains,
             double dropout_p);
  Tensor forward(const Tensor& features, Rng& dropout_rng, bool training) const;

 private:
  std::unique_ptr<nn::Linear> fc1_, fc2_;
  std::unique_ptr<nn::BatchNorm> bn_;
  double dropout_p_;
};

/// Cross-entropy of the head on gradient-reversed pooled features. Every
/// video id must belong to the training split (checked via `domains`).
Tensor dann_loss(const DomainHead& head, const Tensor& features_gap,
                 const std::vector<int>& video_ids, const DomainIndex& domains, double grl_alpha,
                 Rng& dropout_rng, bool training);

struct GroupedLoss {
  Tensor value;
  bool single_domain = false;  // batch had < 2 groups; value is zero
};

/// RBF-kernel MMD² averaged over unordered pairs of per-video groups.
/// Bandwidth is the median pairwise distance within each pair's union;
/// within-group terms use the unbiased estimator when the group has ≥ 2
/// samples and the biased one otherwise.
GroupedLoss mmd_loss(const Tensor& features, const std::vector<int>& group_ids);

/// Covariance alignment: per group, ‖cov_g − cov_batch‖²_F / (4d²) plus
/// ‖μ_g − μ_batch‖² / d, averaged over groups (population covariance).
GroupedLoss coral_loss(const Tensor& features, const std::vector<int>& group_ids);

}  // namespace fryshort::model
