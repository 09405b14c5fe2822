#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fryshort/data/dataset_io.hpp"
#include "fryshort/model/adversarial.hpp"
#include "fryshort/model/heads.hpp"
#include "fryshort/model/network.hpp"
#include "fryshort/nn/optim.hpp"
#include "fryshort/train/metrics.hpp"
#include "fryshort/train/run_config.hpp"

namespace fryshort::train {

/// A dataset directory loaded into memory (desk-scale datasets are small).
struct LoadedDataset {
  data::DatasetManifest manifest;
  std::vector<data::FramePair> train, val, test;
  std::vector<int> train_video_ids;  // sorted, unique

  const std::vector<data::FramePair>& split(data::Split s) const;
  const data::VideoSpec& video(int video_id) const;
};

LoadedDataset load_dataset(const std::string& dir);

/// One frame's evaluation record, for the per-frame predictions report.
struct FramePrediction {
  int video_id = 0;
  int frame_idx = 0;
  data::OilClass truth = data::OilClass::good;
  data::OilClass predicted = data::OilClass::good;
  std::array<double, 4> reg_raw{};  // denormalized pv, p_av, totox, temp
};

/// Augmentation-free evaluation of a split: pixel confusion over all frames,
/// majority-vote frame classification against the video's true class, and
/// per-target MAE in raw denormalized units. Leaves the network in eval mode.
MetricsReport evaluate(model::DualStreamNet& net, const std::vector<data::FramePair>& frames,
                       const data::DatasetManifest& manifest, std::int64_t batch_size,
                       std::vector<FramePrediction>* per_frame = nullptr);

struct TrainArtifacts {
  double iter0_total = 0.0;
  double best_val_miou = -1.0;
  std::int64_t best_iter = -1;
  std::string best_checkpoint;
  std::string last_checkpoint;
  MetricsReport final_val;
};

/// Deterministic single-process training loop. Writes
/// logs/train_log.csv, metrics/val_metrics.csv and checkpoints/{best,last}.ckpt
/// under `out_dir`. Domain losses only ever see training frames; the domain
/// index turns any other frame into a hard abort.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, const LoadedDataset& dataset, std::string out_dir);

  TrainArtifacts train();

  model::DualStreamNet& net() { return *net_; }
  const model::DomainIndex& domains() const { return domains_; }

 private:
  struct Batch {
    nn::Tensor thermal, rgb, reg_targets, chem_targets;
    std::vector<std::int64_t> labels;
    std::vector<int> video_ids;
  };
  Batch make_batch(std::int64_t iter);
  model::LossParts compute_losses(const Batch& batch, Rng& step_rng);
  void save(const std::string& path, std::int64_t iter, double val_miou);

  RunConfig cfg_;
  const LoadedDataset& ds_;
  std::string out_dir_;
  model::DomainIndex domains_;
  model::LossWeights weights_;
  std::unique_ptr<model::DualStreamNet> net_;
  std::unique_ptr<nn::AdamW> opt_;
  Rng master_;
  Rng sampler_;
};

}  // namespace fryshort::train
