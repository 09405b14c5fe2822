// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.
//
//  1. exact invariants (fast)
//  2. metric fast path vs naive oracle
//  3. finite-difference gradient checks
//  4. shortcut reproduction: thermal-only collapses on unseen videos, the
//     full variant does not (3 seeds, majority vote)
//  5. camera-identity probe gap between the two variants
//  6. fused regression beats pre-fusion regression
//  7. bitwise dataset determinism and repeatable first-iteration loss
//
// Criteria 4-6 share nine training runs (3 variants x 3 seeds) on one
// generated dataset; everything runs single-threaded for reproducibility.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fryshort/data/chemistry.hpp"
#include "fryshort/data/dataset_io.hpp"
#include "fryshort/data/manifest.hpp"
#include "fryshort/model/adversarial.hpp"
#include "fryshort/model/backbone.hpp"
#include "fryshort/model/fusion.hpp"
#include "fryshort/model/heads.hpp"
#include "fryshort/model/network.hpp"
#include "fryshort/model/rgb_encoder.hpp"
#include "fryshort/nn/ops.hpp"
#include "fryshort/nn/serialize.hpp"
#include "fryshort/train/ablation.hpp"
#include "fryshort/train/metrics.hpp"
#include "fryshort/train/probe.hpp"
#include "fryshort/train/run_config.hpp"
#include "fryshort/train/schedule.hpp"
#include "fryshort/train/trainer.hpp"
#include "fryshort/util/rng.hpp"
#include "gradcheck.hpp"

using namespace fryshort;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << ")";
  if (!detail.empty()) std::cout << ": " << detail;
  std::cout << std::endl;
  if (!pass) ++g_failures;
}

struct SubChecks {
  std::vector<std::pair<std::string, bool>> items;
  void add(const std::string& what, bool ok) { items.emplace_back(what, ok); }
  bool all_ok() const {
    return std::all_of(items.begin(), items.end(), [](const auto& p) { return p.second; });
  }
  std::string summary() const {
    int ok = 0;
    std::string failures;
    for (const auto& [what, good] : items) {
      if (good)
        ++ok;
      else
        failures += (failures.empty() ? "failed: " : ", ") + what;
    }
    std::ostringstream s;
    s << ok << "/" << items.size() << " checks";
    if (!failures.empty()) s << " (" << failures << ")";
    return s.str();
  }
};

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.values()[static_cast<std::size_t>(i)] -
                             b.values()[static_cast<std::size_t>(i)]));
  return m;
}

model::ModelConfig tiny_model() {
  model::ModelConfig cfg;
  cfg.backbone.stage_channels = {8, 8, 8, 8};
  cfg.backbone.stage_depths = {1, 1, 1, 1};
  cfg.encoder.depth = 2;
  cfg.encoder.embed_dim = 16;
  cfg.encoder.heads = 2;
  cfg.encoder.patch_size = 8;
  cfg.fusion.channels = 8;
  cfg.fusion.gn_groups = 2;
  cfg.dann.hidden = 8;
  cfg.image_h = 64;
  cfg.image_w = 64;
  return cfg;
}

// ---------------------------------------------------------------- criterion 1

void criterion_exact_invariants() {
  SubChecks c;

  {  // totox identity over a generated manifest
    data::GeneratorConfig gen;
    auto manifest = data::sample_manifest(gen, 31415);
    bool ok = !manifest.videos.empty();
    for (const auto& v : manifest.videos)
      ok = ok && v.chem.totox == 2.0 * v.chem.pv + v.chem.p_av;
    c.add("totox identity", ok);
  }

  c.add("class boundary", data::classify_totox(25.0) == data::OilClass::replace &&
                              data::classify_totox(24.999) == data::OilClass::good);

  {  // gradient reversal: exact identity forward, -1x upstream backward
    Rng rng(11);
    Tensor x = Tensor::randn({3, 5}, rng);
    Tensor w = Tensor::randn({3, 5}, rng);
    x.set_requires_grad(true);
    x.zero_grad();
    Tensor y = nn::grl(x, 1.0);
    const bool forward_exact = y.values() == x.values();
    nn::sum_all(nn::mul(y, w)).backward();
    bool backward_exact = true;
    for (std::size_t i = 0; i < w.values().size(); ++i)
      backward_exact = backward_exact && x.grad()[i] == -w.values()[i];

    // numeric side: the forward map is the identity, so central differences
    // recover +upstream; the reverse-mode gradient must be its negation
    double max_rel = 0;
    const double h = 1e-6;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      nn::NoGradGuard ng;
      const double saved = x.data()[i];
      x.data()[i] = saved + h;
      const double fp = nn::sum_all(nn::mul(nn::grl(x, 1.0), w)).item();
      x.data()[i] = saved - h;
      const double fm = nn::sum_all(nn::mul(nn::grl(x, 1.0), w)).item();
      x.data()[i] = saved;
      const double numeric = (fp - fm) / (2 * h);
      const double analytic = x.grad()[static_cast<std::size_t>(i)];
      max_rel = std::max(max_rel, std::abs(analytic + numeric) /
                                      std::max(1.0, std::abs(numeric)));
    }
    c.add("grl", forward_exact && backward_exact && max_rel <= 1e-6);
  }

  {  // channel and spatial attention are exact identities at init
    Rng rng(12);
    model::ChannelGate cg(rng, 16);
    model::SpatialGate sg(rng);
    Tensor x = Tensor::randn({2, 16, 8, 8}, rng);
    nn::NoGradGuard ng;
    c.add("tca/tsa identity",
          max_abs_diff(cg.forward(x), x) == 0.0 && max_abs_diff(sg.forward(x), x) == 0.0);
  }

  {  // FiLM at init reduces to plain group norm; gate sits near sigmoid(4)
    Rng rng(13);
    model::FusionConfig fcfg;
    fcfg.channels = 16;
    fcfg.gn_groups = 4;
    model::FilmFusion film(rng, 16, 32, fcfg);
    Tensor f_ms = Tensor::randn({2, 16, 8, 8}, rng);
    Tensor ctx = Tensor::randn({2, 32, 8, 8}, rng);
    nn::NoGradGuard ng;
    Tensor ref = nn::group_norm(f_ms, 4, Tensor::full({16}, 1.0), Tensor::zeros({16}));
    const bool identity = max_abs_diff(film.forward(f_ms, ctx), ref) <= 1e-5;
    Tensor gate = film.gate_map(ctx);
    double mean = 0;
    for (double v : gate.values()) mean += v;
    mean /= static_cast<double>(gate.numel());
    c.add("film init", identity && mean >= 0.975 && mean <= 0.99);
  }

  {  // regression-only backward leaves all non-head parameters untouched
    Rng rng(14);
    model::DualStreamNet net(rng, tiny_model(), 3);
    Tensor thermal = Tensor::randn({2, 1, 64, 64}, rng, 0.25);
    Tensor rgb = Tensor::randn({2, 3, 64, 64}, rng, 0.25);
    Tensor chem = Tensor::zeros({2, 3});
    Rng step(15);
    auto out = net.run(thermal, rgb, /*training=*/true, step, &chem);
    nn::huber_loss(out.reg_z, Tensor::zeros({2, 4})).backward();
    bool frozen = true;
    double head_grad = 0;
    for (const auto& [name, t] : net.named_parameters()) {
      const bool is_head = name.rfind("pv_head", 0) == 0 || name.rfind("p_av_head", 0) == 0 ||
                           name.rfind("totox_head", 0) == 0 || name.rfind("temp_head", 0) == 0;
      if (is_head)
        head_grad += t.grad_norm();
      else
        frozen = frozen && t.grad_norm() == 0.0;
    }
    c.add("stop-gradient", frozen && head_grad > 0.0);
  }

  {
    Rng rng(16);
    c.add("mask plan", model::sample_mask(64, 0.75, rng).masked_idx.size() == 48);
  }

  {  // unit loss parts weighted-sum to 3.8
    model::LossParts parts;
    Tensor one = Tensor::full({1}, 1.0);
    parts.seg = parts.aux = parts.totox = parts.pv = parts.p_av = parts.temp = parts.mae =
        parts.chem = parts.dann = parts.rgb_dann = one;
    c.add("loss weights",
          std::abs(model::total_loss(parts, model::LossWeights{}).item() - 3.8) <= 1e-9);
  }

  {  // alignment penalties vanish on identical group distributions
    Rng rng(17);
    Tensor base = Tensor::randn({4, 5}, rng);
    Tensor feats = nn::concat({base, base}, 0);
    std::vector<int> groups = {0, 0, 0, 0, 1, 1, 1, 1};
    c.add("mmd identical", model::mmd_loss(feats, groups).value.item() <= 1e-6);
    c.add("coral identical", model::coral_loss(feats, groups).value.item() <= 1e-6);
  }

  c.add("warmup lr", train::lr_at(150, train::Schedule{6e-5, 150, 2000, 1.0}) == 6e-5);

  report(1, "exact invariants", c.all_ok(), c.summary());
}

// ---------------------------------------------------------------- criterion 2

struct NaiveScores {
  double miou = 0, mf1 = 0;
};

NaiveScores naive_scores(const std::vector<std::uint8_t>& truth,
                         const std::vector<std::uint8_t>& pred) {
  NaiveScores out;
  int present = 0;
  for (int cls = 0; cls < 3; ++cls) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == cls, p = pred[i] == cls;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    if (tp + fp + fn == 0) continue;
    ++present;
    out.miou += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    out.mf1 += static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
  }
  if (present > 0) {
    out.miou /= present;
    out.mf1 /= present;
  }
  return out;
}

void criterion_metric_oracle() {
  Rng rng(2024);
  bool all_equal = true;
  for (int trial = 0; trial < 100 && all_equal; ++trial) {
    std::vector<std::uint8_t> truth(64), pred(64);
    for (auto& v : truth) v = static_cast<std::uint8_t>(rng.uniform_int(3));
    for (auto& v : pred) v = static_cast<std::uint8_t>(rng.uniform_int(3));
    train::ConfusionMatrix cm(3);
    cm.add_map(truth, pred);
    auto fast = train::seg_scores(cm);
    auto naive = naive_scores(truth, pred);
    all_equal = fast.miou == naive.miou && fast.mf1 == naive.mf1;
  }

  train::ConfusionMatrix cm(3);
  cm.add(0, 0);
  cm.add(0, 1);
  cm.add(1, 1);
  cm.add(1, 1);
  const bool worked = train::seg_scores(cm).miou == 7.0 / 12.0;
  report(2, "metric oracle", all_equal && worked,
         all_equal ? "100 random pairs + worked example exact" : "fast path diverged");
}

// ---------------------------------------------------------------- criterion 3

Tensor* find_param(std::vector<std::pair<std::string, Tensor>>& named, const std::string& name) {
  for (auto& [n, t] : named)
    if (n == name) return &t;
  return nullptr;
}

void criterion_gradchecks() {
  SubChecks c;
  const double tol = 1e-3;

  {  // masked-reconstruction loss wrt the mask token and a decoder weight
    Rng rng(301);
    model::EncoderConfig ec;
    ec.depth = 1;
    ec.embed_dim = 16;
    ec.heads = 2;
    ec.patch_size = 8;
    model::ContextEncoder enc(rng, ec, 16, 16);
    Tensor thermal = Tensor::randn({1, 1, 16, 16}, rng, 0.5);
    Tensor rgb = Tensor::randn({1, 3, 16, 16}, rng, 0.5);
    auto named = enc.named_parameters();
    Tensor* mask_token = find_param(named, "mask_token");
    Tensor* dec_w = find_param(named, "dec_fc2.weight");
    auto mae_fn = [&]() {
      Rng mask_rng(77);
      auto joint = enc.encode_joint(thermal, rgb, mask_rng);
      return enc.reconstruct_masked(joint);
    };
    auto res = testing::gradcheck({*mask_token, *dec_w}, mae_fn, tol, 1e-5);
    c.add("reconstruction loss", res.ok);
  }

  {  // chemical-alignment loss wrt the chem head input weight
    Rng rng(302);
    model::EncoderConfig ec;
    ec.depth = 1;
    ec.embed_dim = 16;
    ec.heads = 2;
    ec.patch_size = 8;
    model::ContextEncoder enc(rng, ec, 16, 16);
    Tensor thermal = Tensor::randn({1, 1, 16, 16}, rng, 0.5);
    Tensor rgb = Tensor::randn({1, 3, 16, 16}, rng, 0.5);
    Tensor targets = Tensor::randn({1, 3}, rng, 0.5);
    auto named = enc.named_parameters();
    Tensor* chem_w = find_param(named, "chem_head.fc1.weight");
    auto chem_fn = [&]() {
      Rng mask_rng(78);
      auto joint = enc.encode_joint(thermal, rgb, mask_rng);
      return enc.chem_align(joint, targets);
    };
    auto res = testing::gradcheck({*chem_w}, chem_fn, tol, 1e-5);
    c.add("chemical alignment", res.ok);
  }

  {  // FiLM parameters: the blend scalar and the gamma/beta head weight
    Rng rng(303);
    model::FusionConfig fcfg;
    fcfg.channels = 8;
    fcfg.gn_groups = 2;
    model::FilmFusion film(rng, 8, 12, fcfg);
    // move off the exact-identity point so the head weight has influence
    auto named = film.named_parameters();
    Tensor* alpha = find_param(named, "alpha");
    Tensor* gb2 = find_param(named, "gb2.weight");
    {
      nn::NoGradGuard ng;
      alpha->data()[0] = 0.3;
      for (std::int64_t i = 0; i < gb2->numel(); ++i) gb2->data()[i] = 0.01;
    }
    Tensor f_ms = Tensor::randn({1, 8, 4, 4}, rng, 0.5);
    Tensor ctx = Tensor::randn({1, 12, 4, 4}, rng, 0.5);
    auto film_fn = [&]() { return nn::sum_all(nn::mul(film.forward(f_ms, ctx), f_ms)); };
    auto res = testing::gradcheck({*alpha, *gb2}, film_fn, tol, 1e-5);
    c.add("film parameters", res.ok);
  }

  {  // one DANN head behind the reversal layer
    Rng rng(304);
    model::DomainHead head(rng, /*in_dim=*/6, /*hidden=*/8, /*n_domains=*/4, /*dropout_p=*/0.5);
    model::DomainIndex domains({3, 5, 8, 9});
    Tensor feats = Tensor::randn({4, 6}, rng, 0.5);
    std::vector<int> ids = {3, 5, 8, 9};
    auto named = head.named_parameters();
    Tensor* w1 = find_param(named, "fc1.weight");
    auto dann_fn = [&]() {
      Rng drop(79);
      return model::dann_loss(head, feats, ids, domains, 1.0, drop, true);
    };
    auto res = testing::gradcheck({*w1}, dann_fn, tol, 1e-5);
    c.add("domain head", res.ok);
  }

  report(3, "gradient checks", c.all_ok(), c.summary());
}

// ----------------------------------------------------------- criteria 4 to 6

struct RunOutcome {
  train::MetricsReport train_report;
  train::MetricsReport test_report;
  double probe_accuracy = 0;
};

RunOutcome train_and_measure(const train::RunConfig& cfg, const train::LoadedDataset& ds,
                             const std::string& out_dir, const std::string& label) {
  const auto t0 = std::chrono::steady_clock::now();
  train::Trainer trainer(cfg, ds, out_dir);
  auto artifacts = trainer.train();

  // measure the end-of-training state, exactly as the eval command would
  auto ck = nn::load_checkpoint(artifacts.last_checkpoint);
  Rng rng(cfg.seed);
  model::DualStreamNet net(rng, cfg.model,
                           static_cast<std::int64_t>(ds.train_video_ids.size()));
  nn::load_into(net, ck);

  RunOutcome out;
  out.train_report = train::evaluate(net, ds.split(data::Split::train), ds.manifest,
                                     cfg.batch_size);
  out.test_report = train::evaluate(net, ds.split(data::Split::test), ds.manifest,
                                    cfg.batch_size);
  out.probe_accuracy = train::probe_audit(net, ds, cfg.seed).accuracy;

  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  std::cerr << "  [" << label << "] " << secs << "s; train mIoU "
            << 100.0 * out.train_report.seg.miou << "%, test mIoU "
            << 100.0 * out.test_report.seg.miou << "%, test cls "
            << 100.0 * out.test_report.cls_accuracy << "%, probe "
            << 100.0 * out.probe_accuracy << "%" << std::endl;
  return out;
}

void criteria_directional(const fs::path& work) {
  const std::string ds_dir = (work / "dataset").string();
  {
    data::GeneratorConfig gen;
    gen.total_videos = 14;
    auto manifest = data::sample_manifest(gen, 424242);
    data::write_dataset(manifest, ds_dir);
  }
  auto ds = train::load_dataset(ds_dir);

  const std::array<std::uint64_t, 3> seeds = {1, 2, 3};
  std::map<std::string, std::vector<RunOutcome>> outcomes;
  for (const std::uint64_t seed : seeds) {
    for (const std::string variant : {"thermal_only", "full", "prefusion_reg"}) {
      train::RunConfig cfg = train::toy_preset();
      cfg.dataset_dir = ds_dir;
      cfg.seed = seed;
      cfg.model.switches =
          train::variant_switches(variant == "prefusion_reg" ? "full" : variant);
      if (variant == "prefusion_reg") cfg.model.switches.fused_regression = false;
      cfg.model.fusion.method = cfg.model.switches.fusion_method;
      const std::string run_dir = (work / (variant + "-s" + std::to_string(seed))).string();
      outcomes[variant].push_back(
          train_and_measure(cfg, ds, run_dir, variant + " seed " + std::to_string(seed)));
    }
  }

  int collapse_hits = 0, full_hits = 0, probe_hits = 0, fused_hits = 0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto& thermal = outcomes["thermal_only"][s];
    const auto& full = outcomes["full"][s];
    const auto& prefusion = outcomes["prefusion_reg"][s];
    if (thermal.train_report.seg.miou >= 0.90 && thermal.test_report.cls_accuracy <= 0.70)
      ++collapse_hits;
    if (full.test_report.seg.miou >= 0.85 && full.test_report.cls_accuracy == 1.0) ++full_hits;
    if (thermal.probe_accuracy - full.probe_accuracy >= 0.20) ++probe_hits;
    if (full.test_report.mean_mae < prefusion.test_report.mean_mae) ++fused_hits;
  }

  std::ostringstream d4;
  d4 << "collapse " << collapse_hits << "/3 seeds, recovery " << full_hits << "/3 seeds";
  report(4, "shortcut reproduction", collapse_hits >= 2 && full_hits >= 2, d4.str());

  std::ostringstream d5;
  d5 << "gap >= 20pp in " << probe_hits << "/3 seeds";
  report(5, "probe audit", probe_hits >= 2, d5.str());

  std::ostringstream d6;
  d6 << "fused MAE lower in " << fused_hits << "/3 seeds";
  report(6, "fused regression routing", fused_hits >= 2, d6.str());
}

// ---------------------------------------------------------------- criterion 7

void criterion_determinism(const fs::path& work) {
  data::GeneratorConfig gen;
  gen.total_videos = 7;
  gen.frames_per_video = 4;
  gen.image_h = 32;
  gen.image_w = 32;

  const std::string dir_a = (work / "det_a").string();
  const std::string dir_b = (work / "det_b").string();
  data::write_dataset(data::sample_manifest(gen, 9090), dir_a);
  data::write_dataset(data::sample_manifest(gen, 9090), dir_b);
  auto ma = data::read_manifest(dir_a);
  auto mb = data::read_manifest(dir_b);
  const bool manifests_equal = data::manifest_to_json(ma) == data::manifest_to_json(mb);
  const bool checksums_equal = !ma.checksums.empty() && ma.checksums == mb.checksums;

  auto ds = train::load_dataset(dir_a);
  train::RunConfig cfg = train::toy_preset();
  cfg.dataset_dir = dir_a;
  cfg.seed = 77;
  cfg.total_iters = 1;
  cfg.warmup_iters = 0;
  cfg.batch_size = 2;
  cfg.model = tiny_model();
  cfg.model.image_h = 32;
  cfg.model.image_w = 32;
  cfg.model.encoder.depth = 1;

  train::Trainer run_a(cfg, ds, (work / "det_run_a").string());
  train::Trainer run_b(cfg, ds, (work / "det_run_b").string());
  const double loss_a = run_a.train().iter0_total;
  const double loss_b = run_b.train().iter0_total;
  const bool loss_equal = std::abs(loss_a - loss_b) < 1e-6;

  std::ostringstream d;
  d << "manifests " << (manifests_equal ? "identical" : "DIFFER") << ", "
    << ma.checksums.size() << " checksums, iter-0 loss delta " << std::abs(loss_a - loss_b);
  report(7, "determinism", manifests_equal && checksums_equal && loss_equal, d.str());
}

}  // namespace

int main() {
  // single-threaded by contract; must be set before the first parallel_for
  setenv("FRYSHORT_NUM_WORKERS", "1", 1);

  const fs::path work = fs::temp_directory_path() / "fryshort_acceptance";
  std::error_code ec;
  fs::remove_all(work, ec);
  fs::create_directories(work);

  criterion_exact_invariants();
  criterion_metric_oracle();
  criterion_gradchecks();
  criteria_directional(work);
  criterion_determinism(work);

  if (g_failures > 0) {
    std::cout << g_failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all criteria passed" << std::endl;
  return 0;
}
