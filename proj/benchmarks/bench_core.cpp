// Microbenchmarks for the hot paths: backbone and full-network forward,
// training step, domain-alignment penalties, augmentation and metrics.

#include <benchmark/benchmark.h>

#include <vector>

#include "fryshort/data/manifest.hpp"
#include "fryshort/data/render.hpp"
#include "fryshort/model/adversarial.hpp"
#include "fryshort/model/backbone.hpp"
#include "fryshort/model/network.hpp"
#include "fryshort/nn/ops.hpp"
#include "fryshort/nn/optim.hpp"
#include "fryshort/train/augment.hpp"
#include "fryshort/train/metrics.hpp"
#include "fryshort/util/rng.hpp"

using namespace fryshort;
using nn::Tensor;

namespace {

model::ModelConfig bench_model_config() {
  model::ModelConfig cfg;
  cfg.backbone.stage_channels = {16, 32, 48, 64};
  cfg.backbone.stage_depths = {2, 2, 2, 2};
  cfg.encoder.depth = 2;
  cfg.encoder.embed_dim = 64;
  cfg.encoder.heads = 4;
  cfg.encoder.patch_size = 8;
  cfg.fusion.channels = 64;
  cfg.fusion.gn_groups = 8;
  cfg.dann.hidden = 64;
  cfg.image_h = 64;
  cfg.image_w = 64;
  return cfg;
}

Tensor random_input(Rng& rng, std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
  return Tensor::randn({b, c, h, w}, rng);
}

void BM_BackboneForward(benchmark::State& state) {
  Rng rng(1);
  model::BackboneConfig cfg;
  model::ThermalBackbone backbone(rng, cfg);
  backbone.set_training(false);
  auto x = random_input(rng, 1, 1, 64, 64);
  nn::NoGradGuard guard;
  for (auto _ : state) {
    auto pyr = backbone.forward(x);
    benchmark::DoNotOptimize(pyr.f4.values().data());
  }
}
BENCHMARK(BM_BackboneForward);

void BM_NetInference(benchmark::State& state) {
  Rng rng(2);
  auto cfg = bench_model_config();
  model::DualStreamNet net(rng, cfg, 10);
  net.set_training(false);
  auto thermal = random_input(rng, 1, 1, 64, 64);
  auto rgb = random_input(rng, 1, 3, 64, 64);
  nn::NoGradGuard guard;
  for (auto _ : state) {
    auto out = net.run(thermal, rgb, /*training=*/false, rng, nullptr);
    benchmark::DoNotOptimize(out.seg_logits.values().data());
  }
}
BENCHMARK(BM_NetInference);

void BM_TrainStep(benchmark::State& state) {
  Rng rng(3);
  auto cfg = bench_model_config();
  model::DualStreamNet net(rng, cfg, 10);
  net.set_training(true);
  nn::AdamW opt(net.parameters(), {.lr = 1e-4, .weight_decay = 1e-2});
  auto thermal = random_input(rng, 2, 1, 64, 64);
  auto rgb = random_input(rng, 2, 3, 64, 64);
  auto chem = Tensor::randn({2, 3}, rng);
  for (auto _ : state) {
    auto out = net.run(thermal, rgb, /*training=*/true, rng, &chem);
    auto loss = nn::add(nn::add(nn::mean_all(out.seg_logits), out.mae_loss), out.chem_loss);
    opt.zero_grad();
    loss.backward();
    opt.step();
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_TrainStep);

void BM_MmdPenalty(benchmark::State& state) {
  Rng rng(4);
  auto feats = Tensor::randn({64, 32}, rng);
  std::vector<int> groups;
  for (int i = 0; i < 64; ++i) groups.push_back(i % 8);
  for (auto _ : state) {
    auto pen = model::mmd_loss(feats, groups);
    benchmark::DoNotOptimize(pen.value.item());
  }
}
BENCHMARK(BM_MmdPenalty);

void BM_AugmentFrame(benchmark::State& state) {
  Rng master(5);
  data::GeneratorConfig gen;
  gen.total_videos = 3;
  gen.frames_per_video = 1;
  auto manifest = data::sample_manifest(gen, 77);
  auto frame = data::render_frame(manifest.videos.front(), 0, manifest.config);
  train::AugmentConfig cfg;
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng step = master.stream(i++);
    auto out = train::augment_frame(frame, cfg, 64, 64, step);
    benchmark::DoNotOptimize(out.thermal.data());
  }
}
BENCHMARK(BM_AugmentFrame);

void BM_SegScores(benchmark::State& state) {
  Rng rng(6);
  const int n = 128 * 128;
  std::vector<std::uint8_t> truth(n), pred(n);
  for (int i = 0; i < n; ++i) {
    truth[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(rng.uniform_int(3));
    pred[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(rng.uniform_int(3));
  }
  for (auto _ : state) {
    train::ConfusionMatrix cm(3);
    cm.add_map(truth, pred);
    auto scores = train::seg_scores(cm);
    benchmark::DoNotOptimize(scores.miou);
  }
}
BENCHMARK(BM_SegScores);

}  // namespace

BENCHMARK_MAIN();
