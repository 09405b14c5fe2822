#include "fryshort/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "fryshort/nn/ops.hpp"
#include "fryshort/nn/serialize.hpp"
#include "fryshort/train/augment.hpp"
#include "fryshort/train/schedule.hpp"
#include "fryshort/util/errors.hpp"

namespace fryshort::train {

namespace fs = std::filesystem;
using nn::Tensor;

const std::vector<data::FramePair>& LoadedDataset::split(data::Split s) const {
  switch (s) {
    case data::Split::train: return train;
    case data::Split::val: return val;
    case data::Split::test: return test;
  }
  throw ConfigError("bad split");
}

const data::VideoSpec& LoadedDataset::video(int video_id) const {
  for (const auto& v : manifest.videos)
    if (v.video_id == video_id) return v;
  throw ContractViolation("video " + std::to_string(video_id) + " not in manifest");
}

LoadedDataset load_dataset(const std::string& dir) {
  LoadedDataset ds;
  ds.manifest = data::read_manifest(dir);
  ds.train = data::load_split(dir, ds.manifest, data::Split::train);
  ds.val = data::load_split(dir, ds.manifest, data::Split::val);
  ds.test = data::load_split(dir, ds.manifest, data::Split::test);
  std::set<int> ids;
  for (const auto& v : ds.manifest.videos)
    if (v.split == data::Split::train) ids.insert(v.video_id);
  ds.train_video_ids.assign(ids.begin(), ids.end());
  if (ds.train.empty()) throw ConfigError("dataset has no training frames");
  return ds;
}

namespace {

/// Mean cross-entropy over every pixel of a (B, 3, H, W) logit map.
Tensor pixel_ce(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  const auto b = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  Tensor rows = reshape(permute(logits, {0, 2, 3, 1}), {b * h * w, c});
  return cross_entropy(rows, labels);
}

Tensor column(const Tensor& t, std::int64_t i) { return slice(t, 1, i, 1); }

std::vector<std::uint8_t> argmax_map(const double* logits, std::int64_t classes, std::int64_t hw) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(hw));
  for (std::int64_t p = 0; p < hw; ++p) {
    int best = 0;
    double best_v = logits[p];
    for (std::int64_t c = 1; c < classes; ++c) {
      const double v = logits[c * hw + p];
      if (v > best_v) {
        best_v = v;
        best = static_cast<int>(c);
      }
    }
    out[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

struct BatchTensors {
  Tensor thermal, rgb;
};

BatchTensors frames_to_tensors(const std::vector<const data::FramePair*>& frames) {
  const auto b = static_cast<std::int64_t>(frames.size());
  const std::int64_t h = frames[0]->h, w = frames[0]->w;
  std::vector<double> thermal(static_cast<std::size_t>(b) * h * w);
  std::vector<double> rgb(static_cast<std::size_t>(b) * 3 * h * w);
  for (std::int64_t i = 0; i < b; ++i) {
    const auto& f = *frames[static_cast<std::size_t>(i)];
    if (f.h != h || f.w != w) throw ContractViolation("mixed frame sizes in one batch");
    std::copy(f.thermal.begin(), f.thermal.end(),
              thermal.begin() + static_cast<std::size_t>(i) * h * w);
    std::copy(f.rgb.begin(), f.rgb.end(), rgb.begin() + static_cast<std::size_t>(i) * 3 * h * w);
  }
  return {Tensor::from_data({b, 1, h, w}, std::move(thermal)),
          Tensor::from_data({b, 3, h, w}, std::move(rgb))};
}

void write_csv_row(std::ofstream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(12) << v;
  return s.str();
}

}  // namespace

MetricsReport evaluate(model::DualStreamNet& net, const std::vector<data::FramePair>& frames,
                       const data::DatasetManifest& manifest, std::int64_t batch_size,
                       std::vector<FramePrediction>* per_frame) {
  if (frames.empty()) throw ConfigError("evaluate needs a non-empty split");
  if (per_frame) per_frame->clear();
  net.set_training(false);
  nn::NoGradGuard guard;

  ConfusionMatrix cm(3);
  std::int64_t cls_hits = 0;
  std::array<double, 4> abs_err{};
  const auto& stats = manifest.norm_stats;
  const std::array<const data::TargetStats*, 4> per_target{&stats.pv, &stats.p_av, &stats.totox,
                                                           &stats.temp_f};
  Rng unused(0);

  MetricsReport report;
  for (std::size_t start = 0; start < frames.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(frames.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const data::FramePair*> chunk;
    for (std::size_t i = start; i < end; ++i) chunk.push_back(&frames[i]);
    auto tensors = frames_to_tensors(chunk);
    auto out = net.run(tensors.thermal, tensors.rgb, /*training=*/false, unused, nullptr);

    const auto h = out.seg_logits.dim(2), w = out.seg_logits.dim(3);
    const double* logits = out.seg_logits.values().data();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto& frame = *chunk[i];
      auto pred = argmax_map(logits + i * 3 * static_cast<std::size_t>(h * w), 3, h * w);
      cm.add_map(frame.mask, pred);

      const auto& video = [&]() -> const data::VideoSpec& {
        for (const auto& v : manifest.videos)
          if (v.video_id == frame.video_id) return v;
        throw ContractViolation("frame references unknown video");
      }();
      const auto truth = data::classify_totox(video.chem.totox);
      const auto voted = model::majority_vote(pred);
      if (voted == truth) ++cls_hits;

      FramePrediction row;
      row.video_id = frame.video_id;
      row.frame_idx = frame.frame_idx;
      row.truth = truth;
      row.predicted = voted;

      const std::array<double, 4> raw{video.chem.pv, video.chem.p_av, video.chem.totox,
                                      video.chem.temp_f};
      for (int t = 0; t < 4; ++t) {
        const double z = out.reg_z.values()[i * 4 + static_cast<std::size_t>(t)];
        const double value = denormalize(z, *per_target[static_cast<std::size_t>(t)]);
        row.reg_raw[static_cast<std::size_t>(t)] = value;
        abs_err[static_cast<std::size_t>(t)] += std::abs(value - raw[static_cast<std::size_t>(t)]);
      }
      if (per_frame) per_frame->push_back(row);
    }
  }

  report.seg = seg_scores(cm);
  report.n_frames = static_cast<std::int64_t>(frames.size());
  report.cls_accuracy = static_cast<double>(cls_hits) / static_cast<double>(frames.size());
  double sum = 0;
  for (int t = 0; t < 4; ++t) {
    report.mae[static_cast<std::size_t>(t)] =
        abs_err[static_cast<std::size_t>(t)] / static_cast<double>(frames.size());
    sum += report.mae[static_cast<std::size_t>(t)];
  }
  report.mean_mae = sum / 4.0;
  return report;
}

Trainer::Trainer(const RunConfig& cfg, const LoadedDataset& dataset, std::string out_dir)
    : cfg_(cfg),
      ds_(dataset),
      out_dir_(std::move(out_dir)),
      domains_(dataset.train_video_ids),
      master_(cfg.seed),
      sampler_(master_.stream("sampler")) {
  cfg_.validate();
  weights_.dann = cfg_.model.dann.lambda_weight;
  weights_.rgb_dann = cfg_.model.dann.lambda_weight;
  Rng init = master_.stream("init");
  net_ = std::make_unique<model::DualStreamNet>(init, cfg_.model,
                                               static_cast<std::int64_t>(domains_.size()));
  opt_ = std::make_unique<nn::AdamW>(
      net_->parameters(), nn::AdamWConfig{.lr = cfg_.base_lr, .weight_decay = cfg_.weight_decay});
}

Trainer::Batch Trainer::make_batch(std::int64_t iter) {
  const auto n = static_cast<std::int64_t>(ds_.train.size());
  const auto m = cfg_.model.switches.da_method;
  const bool distributional = m == model::DaMethod::mmd || m == model::DaMethod::coral;

  std::vector<std::int64_t> picks;
  while (true) {
    picks.clear();
    for (std::int64_t i = 0; i < cfg_.batch_size; ++i) picks.push_back(sampler_.uniform_int(n));
    if (!distributional || ds_.train_video_ids.size() < 2) break;
    std::set<int> vids;
    for (auto p : picks) vids.insert(ds_.train[static_cast<std::size_t>(p)].video_id);
    if (vids.size() >= 2) break;  // distributional alignment needs a contrast
  }

  Rng aug_rng = master_.stream("augment").stream(static_cast<std::uint64_t>(iter));
  std::vector<data::FramePair> frames;
  for (auto p : picks)
    frames.push_back(augment_frame(ds_.train[static_cast<std::size_t>(p)], cfg_.augment,
                                   static_cast<int>(cfg_.model.image_h),
                                   static_cast<int>(cfg_.model.image_w), aug_rng));

  Batch batch;
  std::vector<const data::FramePair*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  auto tensors = frames_to_tensors(ptrs);
  batch.thermal = tensors.thermal;
  batch.rgb = tensors.rgb;

  const auto b = static_cast<std::int64_t>(frames.size());
  std::vector<double> reg(static_cast<std::size_t>(b) * 4), chem(static_cast<std::size_t>(b) * 3);
  for (std::int64_t i = 0; i < b; ++i) {
    const auto& f = frames[static_cast<std::size_t>(i)];
    batch.video_ids.push_back(f.video_id);
    for (auto v : f.mask) batch.labels.push_back(v);
    const auto z = data::normalized_targets(ds_.video(f.video_id).chem, ds_.manifest.norm_stats);
    for (int t = 0; t < 4; ++t) reg[static_cast<std::size_t>(i) * 4 + static_cast<std::size_t>(t)] = z[static_cast<std::size_t>(t)];
    for (int t = 0; t < 3; ++t)
      chem[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(t)] = z[static_cast<std::size_t>(t) + 1];
  }
  batch.reg_targets = Tensor::from_data({b, 4}, std::move(reg));
  batch.chem_targets = Tensor::from_data({b, 3}, std::move(chem));
  return batch;
}

model::LossParts Trainer::compute_losses(const Batch& batch, Rng& step_rng) {
  const auto& sw = cfg_.model.switches;
  const bool chem_on = sw.enable_rgb && sw.enable_chem;
  auto out = net_->run(batch.thermal, batch.rgb, /*training=*/true, step_rng,
                       chem_on ? &batch.chem_targets : nullptr);

  model::LossParts parts;
  parts.seg = pixel_ce(out.seg_logits, batch.labels);
  if (out.aux_logits.defined()) parts.aux = pixel_ce(out.aux_logits, batch.labels);
  parts.pv = huber_loss(column(out.reg_z, 0), column(batch.reg_targets, 0));
  parts.p_av = huber_loss(column(out.reg_z, 1), column(batch.reg_targets, 1));
  parts.totox = huber_loss(column(out.reg_z, 2), column(batch.reg_targets, 2));
  parts.temp = huber_loss(column(out.reg_z, 3), column(batch.reg_targets, 3));
  if (out.mae_loss.defined()) parts.mae = out.mae_loss;
  if (out.chem_loss.defined()) parts.chem = out.chem_loss;

  switch (sw.da_method) {
    case model::DaMethod::grl:
      if (const auto* head = net_->thermal_domain_head())
        parts.dann = model::dann_loss(*head, out.f4_gap, batch.video_ids, domains_,
                                      cfg_.model.dann.grl_alpha, step_rng, true);
      if (const auto* head = net_->rgb_domain_head(); head && out.ctx_gap.defined())
        parts.rgb_dann = model::dann_loss(*head, out.ctx_gap, batch.video_ids, domains_,
                                          cfg_.model.dann.grl_alpha, step_rng, true);
      break;
    case model::DaMethod::mmd:
    case model::DaMethod::coral: {
      const bool use_mmd = sw.da_method == model::DaMethod::mmd;
      for (int id : batch.video_ids) (void)domains_.at(id);  // train-split gate
      auto attach = [&](const Tensor& features) {
        return use_mmd ? model::mmd_loss(features, batch.video_ids)
                       : model::coral_loss(features, batch.video_ids);
      };
      if (auto g = attach(out.f4_gap); !g.single_domain) parts.dann = g.value;
      if (out.ctx_gap.defined())
        if (auto g = attach(out.ctx_gap); !g.single_domain) parts.rgb_dann = g.value;
      break;
    }
    case model::DaMethod::none: break;
  }
  return parts;
}

void Trainer::save(const std::string& path, std::int64_t iter, double val_miou) {
  std::map<std::string, std::string> meta;
  meta["iter"] = std::to_string(iter);
  meta["val_miou"] = fmt(val_miou);
  meta["config"] = to_json(cfg_).dump();
  const std::string manifest_text = data::manifest_to_json(ds_.manifest);
  meta["manifest_crc32"] = std::to_string(
      data::pixel_crc32(std::vector<std::uint8_t>(manifest_text.begin(), manifest_text.end())));
  nn::save_checkpoint(path, *net_, meta, opt_.get());
}

TrainArtifacts Trainer::train() {
  fs::create_directories(fs::path(out_dir_) / "checkpoints");
  fs::create_directories(fs::path(out_dir_) / "logs");
  fs::create_directories(fs::path(out_dir_) / "metrics");

  std::ofstream log((fs::path(out_dir_) / "logs" / "train_log.csv").string());
  std::ofstream val_log((fs::path(out_dir_) / "metrics" / "val_metrics.csv").string());
  if (!log || !val_log) throw std::runtime_error("cannot open log files under " + out_dir_);
  write_csv_row(log, {"iter", "lr", "total", "seg", "aux", "pv", "p_av", "totox", "temp", "mae",
                      "chem", "dann", "rgb_dann"});
  write_csv_row(val_log, {"iter", "miou", "mf1", "cls_acc", "mae_pv", "mae_p_av", "mae_totox",
                          "mae_temp", "mean_mae"});

  TrainArtifacts result;
  const auto schedule = cfg_.schedule();
  const std::int64_t cadence = std::max<std::int64_t>(1, cfg_.total_iters / 10);
  const auto weights = weights_;

  for (std::int64_t iter = 0; iter < cfg_.total_iters; ++iter) {
    net_->set_training(true);
    auto batch = make_batch(iter);
    Rng step_rng = master_.stream("step").stream(static_cast<std::uint64_t>(iter));
    auto parts = compute_losses(batch, step_rng);
    Tensor total = model::total_loss(parts, weights);
    total.backward();
    opt_->set_lr(lr_at(iter, schedule));
    opt_->step();
    opt_->zero_grad();

    if (iter == 0) result.iter0_total = total.item();
    auto cell = [](const Tensor& t) { return t.defined() ? fmt(t.item()) : std::string(); };
    write_csv_row(log, {std::to_string(iter), fmt(opt_->lr()), fmt(total.item()), cell(parts.seg),
                        cell(parts.aux), cell(parts.pv), cell(parts.p_av), cell(parts.totox),
                        cell(parts.temp), cell(parts.mae), cell(parts.chem), cell(parts.dann),
                        cell(parts.rgb_dann)});

    if ((iter + 1) % cadence == 0 || iter + 1 == cfg_.total_iters) {
      auto report = evaluate(*net_, ds_.val, ds_.manifest, cfg_.batch_size);
      write_csv_row(val_log,
                    {std::to_string(iter), fmt(report.seg.miou), fmt(report.seg.mf1),
                     fmt(report.cls_accuracy), fmt(report.mae[0]), fmt(report.mae[1]),
                     fmt(report.mae[2]), fmt(report.mae[3]), fmt(report.mean_mae)});
      val_log.flush();
      if (report.seg.miou > result.best_val_miou) {
        result.best_val_miou = report.seg.miou;
        result.best_iter = iter;
        result.best_checkpoint = (fs::path(out_dir_) / "checkpoints" / "best.ckpt").string();
        save(result.best_checkpoint, iter, report.seg.miou);
      }
      result.final_val = report;
    }
  }

  result.last_checkpoint = (fs::path(out_dir_) / "checkpoints" / "last.ckpt").string();
  save(result.last_checkpoint, cfg_.total_iters - 1, result.final_val.seg.miou);
  return result;
}

}  // namespace fryshort::train
