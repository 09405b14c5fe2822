#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fryshort/nn/serialize.hpp"
#include "fryshort/train/ablation.hpp"
#include "fryshort/train/augment.hpp"
#include "fryshort/train/metrics.hpp"
#include "fryshort/train/plots.hpp"
#include "fryshort/train/probe.hpp"
#include "fryshort/train/run_config.hpp"
#include "fryshort/train/schedule.hpp"
#include "fryshort/train/trainer.hpp"
#include "fryshort/util/errors.hpp"

using namespace fryshort;
using namespace fryshort::train;
namespace fs = std::filesystem;

TEST_CASE("learning-rate schedule: warmup endpoint, poly decay, errors") {
  Schedule s{6e-5, 150, 2000, 1.0};
  CHECK(lr_at(150, s) == 6e-5);  // both branches meet here, exactly
  CHECK(lr_at(0, s) == doctest::Approx(6e-5 / 150).epsilon(1e-12));
  CHECK(lr_at(1999, s) == doctest::Approx(6e-5 / 1850).epsilon(1e-9));
  CHECK(lr_at(149, s) == 6e-5 * 150 / 150.0);
  // halfway through the decay leg
  CHECK(lr_at(150 + 925, s) == doctest::Approx(3e-5).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(-1, s), ConfigError);
  CHECK_THROWS_AS(lr_at(2000, s), ConfigError);
  CHECK_THROWS_AS(lr_at(0, Schedule{6e-5, 2000, 2000, 1.0}), ConfigError);
}

TEST_CASE("run config: json round trip, strictness, overrides") {
  RunConfig toy = toy_preset();
  toy.dataset_dir = "/data/x";
  auto j = to_json(toy);
  RunConfig back = run_config_from_json(j);
  CHECK(to_json(back) == j);

  auto paper = paper_shape_preset();
  CHECK(paper.model.backbone.stage_channels == std::array<std::int64_t, 4>{64, 128, 320, 512});
  CHECK(to_json(run_config_from_json(to_json(paper))) == to_json(paper));

  auto bad = j;
  bad["trian"] = 1;
  CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);
  bad = j;
  bad["train"]["batch_sizes"] = 4;
  CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);
  bad = j;
  bad["variant"]["da_method"] = "adversarial";
  CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);

  apply_override(j, "train.total_iters=500");
  apply_override(j, "variant.da_method=mmd");
  apply_override(j, "dataset=/tmp/other");
  RunConfig patched = run_config_from_json(j);
  CHECK(patched.total_iters == 500);
  CHECK(patched.model.switches.da_method == model::DaMethod::mmd);
  CHECK(patched.dataset_dir == "/tmp/other");
  CHECK_THROWS_AS(apply_override(j, "no-equals-sign"), ConfigError);

  RunConfig invalid = toy_preset();
  invalid.batch_size = 0;
  CHECK_THROWS_AS(invalid.validate(), ConfigError);
  invalid = toy_preset();
  invalid.warmup_iters = invalid.total_iters;
  CHECK_THROWS_AS(invalid.validate(), ConfigError);
  invalid = toy_preset();
  invalid.model.switches.da_method = model::DaMethod::coral;
  invalid.batch_size = 1;
  CHECK_THROWS_AS(invalid.validate(), ConfigError);
}

TEST_CASE("generate spec: json round trip and proportional splits") {
  GenerateSpec spec;
  auto j = to_json(spec);
  CHECK(generate_spec_from_json(j).generator.total_videos == 28);
  apply_override(j, "videos.total=7");
  auto small = generate_spec_from_json(j);
  CHECK(small.generator.total_videos == 7);
  auto counts = data::split_counts(small.generator.total_videos);
  CHECK(counts.train == 5);
  CHECK(counts.val == 1);
  CHECK(counts.test == 1);
  auto bad = j;
  bad["video"] = 3;
  CHECK_THROWS_AS(generate_spec_from_json(bad), ConfigError);
}

namespace {

data::FramePair make_frame(int h, int w, std::uint64_t seed) {
  data::FramePair f;
  f.h = h;
  f.w = w;
  Rng rng(seed);
  for (int i = 0; i < h * w; ++i) {
    f.thermal.push_back(rng.uniform());
    f.mask.push_back(static_cast<std::uint8_t>(rng.uniform_int(3)));
  }
  for (int i = 0; i < 3 * h * w; ++i) f.rgb.push_back(rng.uniform());
  f.video_id = 3;
  f.frame_idx = 1;
  return f;
}

}  // namespace

TEST_CASE("augmentation: determinism, identity, label preservation") {
  auto frame = make_frame(16, 20, 7);
  AugmentConfig cfg;

  Rng a(11), b(11), c(12);
  auto out1 = augment_frame(frame, cfg, 16, 16, a);
  auto out2 = augment_frame(frame, cfg, 16, 16, b);
  CHECK(out1.thermal == out2.thermal);
  CHECK(out1.rgb == out2.rgb);
  CHECK(out1.mask == out2.mask);
  auto out3 = augment_frame(frame, cfg, 16, 16, c);
  CHECK(out1.thermal != out3.thermal);

  CHECK(out1.h == 16);
  CHECK(out1.w == 16);
  CHECK(out1.thermal.size() == 256);
  CHECK(out1.rgb.size() == 768);
  for (auto m : out1.mask) CHECK(m <= 2);
  for (auto v : out1.rgb) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(out1.video_id == 3);

  AugmentConfig off;
  off.resize = off.hflip = off.photometric = false;
  Rng d(1);
  auto same = augment_frame(frame, off, 16, 20, d);
  CHECK(same.thermal == frame.thermal);
  CHECK(same.rgb == frame.rgb);
  CHECK(same.mask == frame.mask);
}

TEST_CASE("augmentation helpers: flip involution, nearest upscale") {
  auto frame = make_frame(6, 8, 9);
  auto copy = frame;
  hflip_frame(copy);
  CHECK(copy.thermal != frame.thermal);
  hflip_frame(copy);
  CHECK(copy.thermal == frame.thermal);
  CHECK(copy.mask == frame.mask);

  std::vector<std::uint8_t> mask = {0, 1, 2, 0};
  auto up = resize_mask_nearest(mask, 2, 2, 4, 4);
  std::vector<std::uint8_t> expect = {0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 0, 0, 2, 2, 0, 0};
  CHECK(up == expect);
  CHECK(resize_mask_nearest(mask, 2, 2, 2, 2) == mask);
}

TEST_CASE("segmentation scores: worked example and absent-class rule") {
  ConfusionMatrix cm(3);
  // GT [[0,0],[1,1]], prediction [[0,1],[1,1]]
  cm.add(0, 0);
  cm.add(0, 1);
  cm.add(1, 1);
  cm.add(1, 1);
  auto s = seg_scores(cm);
  CHECK(s.per_class[0].iou == 0.5);
  CHECK(s.per_class[1].iou == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK_FALSE(s.per_class[2].present);
  CHECK(s.miou == doctest::Approx(7.0 / 12).epsilon(1e-15));

  ConfusionMatrix perfect(3);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 5; ++i) perfect.add(c, c);
  auto p = seg_scores(perfect);
  CHECK(p.miou == 1.0);
  CHECK(p.mf1 == 1.0);

  // class present only in the prediction still counts (with zero IoU)
  ConfusionMatrix leak(3);
  leak.add(0, 0);
  leak.add(0, 2);
  auto l = seg_scores(leak);
  CHECK(l.per_class[2].present);
  CHECK(l.per_class[2].iou == 0.0);
  CHECK(l.miou == doctest::Approx((0.5 + 0.0) / 2).epsilon(1e-15));

  CHECK_THROWS_AS(cm.add(3, 0), ContractViolation);
}

TEST_CASE("metric oracle: confusion scores equal naive set arithmetic on random maps") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint8_t> gt(64), pred(64);
    for (int i = 0; i < 64; ++i) {
      gt[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(rng.uniform_int(3));
      pred[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(rng.uniform_int(3));
    }
    ConfusionMatrix cm(3);
    cm.add_map(gt, pred);
    auto fast = seg_scores(cm);

    // naive per-class pixel-set arithmetic
    double iou_sum = 0, f1_sum = 0;
    int counted = 0;
    for (int c = 0; c < 3; ++c) {
      std::int64_t tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < 64; ++i) {
        const bool in_gt = gt[static_cast<std::size_t>(i)] == c;
        const bool in_pred = pred[static_cast<std::size_t>(i)] == c;
        tp += in_gt && in_pred;
        fp += !in_gt && in_pred;
        fn += in_gt && !in_pred;
      }
      if (tp + fp + fn == 0) continue;
      const double iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
      const double f1 = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
      CHECK(fast.per_class[static_cast<std::size_t>(c)].iou == iou);
      CHECK(fast.per_class[static_cast<std::size_t>(c)].f1 == f1);
      iou_sum += iou;
      f1_sum += f1;
      ++counted;
    }
    REQUIRE(counted > 0);
    CHECK(fast.miou == iou_sum / counted);
    CHECK(fast.mf1 == f1_sum / counted);
  }
}

TEST_CASE("denormalization") {
  data::TargetStats stats{30.0, 10.0};
  CHECK(denormalize(0.0, stats) == 30.0);
  CHECK(denormalize(1.5, data::TargetStats{20.0, 10.0}) == 35.0);
  const double raw = 47.3;
  const double z = (raw - stats.mean) / stats.stddev;
  CHECK(denormalize(z, stats) == doctest::Approx(raw).epsilon(1e-12));
}

TEST_CASE("linear probe: separable features, constant features, determinism") {
  using nn::Tensor;
  const std::int64_t n = 80, classes = 4;
  std::vector<double> onehot(static_cast<std::size_t>(n * classes), 0.0);
  std::vector<std::int64_t> labels;
  for (std::int64_t i = 0; i < n; ++i) {
    labels.push_back(i % classes);
    onehot[static_cast<std::size_t>(i * classes + i % classes)] = 1.0;
  }
  Tensor sep = Tensor::from_data({n, classes}, onehot);
  auto res = fit_linear_probe(sep, labels, classes, 5);
  CHECK(res.accuracy == 1.0);
  CHECK(res.n_held == 16);
  CHECK(res.n_fit == 64);

  Tensor flat = Tensor::full({n, classes}, 0.37);
  auto chance = fit_linear_probe(flat, labels, classes, 5);
  CHECK(chance.accuracy <= 0.5);

  auto again = fit_linear_probe(sep, labels, classes, 5);
  CHECK(again.accuracy == res.accuracy);
  CHECK_THROWS_AS(fit_linear_probe(sep, labels, 1, 5), ConfigError);
}

TEST_CASE("ablation grid: 11 variants with the documented switch mappings") {
  const auto& names = ablation_variants();
  CHECK(names.size() == 11);
  CHECK(names.front() == "thermal_only");

  auto t = variant_switches("thermal_only");
  CHECK_FALSE(t.enable_rgb);
  CHECK(t.da_method == model::DaMethod::none);
  CHECK_FALSE(t.enable_mae);
  CHECK_FALSE(t.enable_chem);
  CHECK_FALSE(t.enable_thermal_dann);
  CHECK_FALSE(t.enable_rgb_dann);

  auto full = variant_switches("full");
  CHECK(full.enable_rgb);
  CHECK(full.da_method == model::DaMethod::grl);
  CHECK(full.fused_regression);
  CHECK(full.enable_mae);
  CHECK(full.enable_chem);

  CHECK_FALSE(variant_switches("dual_dann").fused_regression);
  CHECK(variant_switches("da_coral").da_method == model::DaMethod::coral);
  CHECK(variant_switches("fusion_concat").fusion_method == model::FusionMethod::concat);
  CHECK_FALSE(variant_switches("no_mae").enable_mae);
  CHECK_FALSE(variant_switches("no_all_dann").enable_thermal_dann);
  CHECK_THROWS_AS(variant_switches("with_extra_cheese"), ConfigError);
}

namespace {

RunConfig micro_config(const std::string& dataset_dir, std::uint64_t seed) {
  RunConfig cfg;
  cfg.dataset_dir = dataset_dir;
  cfg.seed = seed;
  cfg.batch_size = 2;
  cfg.total_iters = 3;
  cfg.warmup_iters = 1;
  cfg.model.image_h = 32;
  cfg.model.image_w = 32;
  cfg.model.backbone.stage_channels = {8, 8, 8, 8};
  cfg.model.backbone.stage_depths = {1, 1, 1, 1};
  cfg.model.encoder.depth = 1;
  cfg.model.encoder.embed_dim = 16;
  cfg.model.encoder.heads = 2;
  cfg.model.encoder.patch_size = 8;
  cfg.model.fusion.channels = 8;
  cfg.model.fusion.gn_groups = 2;
  cfg.model.dann.hidden = 8;
  return cfg;
}

const std::string kMicroDataset = "/tmp/fryshort_micro_dataset";

void ensure_micro_dataset() {
  static bool done = false;
  if (done) return;
  data::GeneratorConfig gen;
  gen.total_videos = 7;
  gen.frames_per_video = 4;
  gen.image_h = 32;
  gen.image_w = 32;
  fs::remove_all(kMicroDataset);
  auto manifest = data::sample_manifest(gen, 913);
  data::write_dataset(manifest, kMicroDataset);
  done = true;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("trainer: end-to-end micro run with artifacts and determinism") {
  ensure_micro_dataset();
  auto ds = load_dataset(kMicroDataset);
  CHECK(ds.train_video_ids.size() == 5);
  CHECK(ds.train.size() == 20);
  CHECK(ds.val.size() == 4);
  CHECK(ds.test.size() == 4);

  const std::string out_a = "/tmp/fryshort_micro_run_a";
  const std::string out_b = "/tmp/fryshort_micro_run_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);

  Trainer trainer_a(micro_config(kMicroDataset, 77), ds, out_a);
  auto art_a = trainer_a.train();
  CHECK(std::isfinite(art_a.iter0_total));
  CHECK(art_a.iter0_total > 0.0);
  CHECK(art_a.best_val_miou >= 0.0);
  CHECK(fs::exists(out_a + "/checkpoints/best.ckpt"));
  CHECK(fs::exists(out_a + "/checkpoints/last.ckpt"));
  CHECK(fs::exists(out_a + "/logs/train_log.csv"));
  CHECK(fs::exists(out_a + "/metrics/val_metrics.csv"));
  const std::string log_a = slurp(out_a + "/logs/train_log.csv");
  CHECK(log_a.rfind("iter,lr,total,seg,aux,pv,p_av,totox,temp,mae,chem,dann,rgb_dann", 0) == 0);

  Trainer trainer_b(micro_config(kMicroDataset, 77), ds, out_b);
  auto art_b = trainer_b.train();
  CHECK(art_a.iter0_total == doctest::Approx(art_b.iter0_total).epsilon(1e-9));
  CHECK(log_a == slurp(out_b + "/logs/train_log.csv"));
  CHECK(slurp(out_a + "/metrics/val_metrics.csv") == slurp(out_b + "/metrics/val_metrics.csv"));

  // checkpoint round trip restores the exact parameter state
  auto ck = nn::load_checkpoint(art_a.last_checkpoint);
  CHECK(ck.meta.at("iter") == "2");
  Rng rebuild(1);
  auto cfg = micro_config(kMicroDataset, 77);
  model::DualStreamNet fresh(rebuild, cfg.model, 5);
  nn::load_into(fresh, ck);
  for (const auto& [name, tensor] : fresh.named_parameters()) {
    bool matched = false;
    for (const auto& [other_name, other] : trainer_a.net().named_parameters())
      if (other_name == name) {
        CHECK(tensor.values() == other.values());
        matched = true;
      }
    CHECK_MESSAGE(matched, name);
  }

  // domain losses refuse frames outside the training split
  model::DomainIndex domains(ds.train_video_ids);
  CHECK_THROWS_AS(domains.at(ds.test.front().video_id), ContractViolation);

  auto report = evaluate(trainer_a.net(), ds.test, ds.manifest, 2);
  CHECK(report.n_frames == 4);
  CHECK(report.cls_accuracy >= 0.0);
  CHECK(report.cls_accuracy <= 1.0);
  for (double m : report.mae) CHECK(std::isfinite(m));

  auto probe = probe_audit(trainer_a.net(), ds, 5);
  CHECK(probe.n_classes == 5);
  CHECK(probe.accuracy >= 0.0);
  CHECK(probe.accuracy <= 1.0);
}

TEST_CASE("ablation runner: table is complete and reproducible") {
  ensure_micro_dataset();
  auto ds = load_dataset(kMicroDataset);
  auto base = micro_config(kMicroDataset, 41);
  base.total_iters = 2;
  base.warmup_iters = 1;

  const std::string out_a = "/tmp/fryshort_ablate_a";
  const std::string out_b = "/tmp/fryshort_ablate_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  auto rows = run_ablation(base, ds, out_a);
  REQUIRE(rows.size() == 11);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].variant == ablation_variants()[i]);
  CHECK(fs::exists(out_a + "/metrics/ablation.csv"));
  CHECK(fs::exists(out_a + "/runs/full/checkpoints/last.ckpt"));

  auto rows_b = run_ablation(base, ds, out_b);
  CHECK(slurp(out_a + "/metrics/ablation.csv") == slurp(out_b + "/metrics/ablation.csv"));
}

TEST_CASE("plot rendering: deterministic SVG bytes and strict input errors") {
  const std::string train_csv =
      "iter,lr,total,seg,aux,pv,p_av,totox,temp,mae,chem,dann,rgb_dann\n"
      "0,4e-07,2.5,1.1,1.0,0.1,0.1,0.1,0.1,,,0.05,\n"
      "1,8e-07,2.1,0.9,0.85,0.08,0.09,0.1,0.08,,,0.05,\n"
      "2,1.2e-06,1.8,0.8,0.7,0.07,0.08,0.09,0.06,,,0.04,\n";
  const std::string val_csv =
      "iter,miou,mf1,cls_acc,mae_pv,mae_p_av,mae_totox,mae_temp,mean_mae\n"
      "1,0.41,0.5,0.5,2.5,1.75,9.0,12.5,6.4375\n"
      "2,0.55,0.62,0.75,2.0,1.5,8.0,11.0,5.625\n";

  auto curves = render_loss_curves(train_csv, val_csv);
  auto bars = render_mae_bars(val_csv);

  // pure functions of their input text: byte-for-byte repeatable
  CHECK(curves == render_loss_curves(train_csv, val_csv));
  CHECK(bars == render_mae_bars(val_csv));
  CHECK(curves.rfind("<svg", 0) == 0);
  CHECK(curves.find("</svg>") != std::string::npos);
  CHECK(bars.rfind("<svg", 0) == 0);
  CHECK(bars.find("</svg>") != std::string::npos);
  // the bar chart annotates the last row's values
  CHECK(bars.find(">11<") != std::string::npos);   // mae_temp value label
  CHECK(bars.find("Totox") != std::string::npos);  // target label

  // header-only and empty inputs are rejected, never rendered partially
  const std::string header_only = "iter,miou,mf1,cls_acc,mae_pv,mae_p_av,mae_totox,mae_temp,mean_mae\n";
  CHECK_THROWS_AS((void)render_mae_bars(header_only), std::runtime_error);
  CHECK_THROWS_AS((void)render_loss_curves(train_csv, ""), std::runtime_error);
  CHECK_THROWS_AS((void)render_loss_curves("", val_csv), std::runtime_error);

  // a CSV missing a required column is an error, as is a malformed cell
  CHECK_THROWS_AS((void)render_mae_bars("iter,miou\n1,0.5\n"), std::runtime_error);
  CHECK_THROWS_AS((void)render_loss_curves("iter,total\n0,abc\n", val_csv), std::runtime_error);

  // an empty MAE cell in the last row cannot be plotted
  const std::string hole =
      "iter,miou,mf1,cls_acc,mae_pv,mae_p_av,mae_totox,mae_temp,mean_mae\n"
      "1,0.5,0.5,0.5,2.0,1.5,,11.0,5.0\n";
  CHECK_THROWS_AS((void)render_mae_bars(hole), std::runtime_error);
}
