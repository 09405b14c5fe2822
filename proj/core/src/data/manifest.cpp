#include "fryshort/data/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fryshort/util/rng.hpp"

namespace fryshort::data {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw std::logic_error("bad split");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + s);
}

std::string to_string(OilType t) { return t == OilType::corn ? "corn" : "canola"; }

OilType oil_type_from_string(const std::string& s) {
  if (s == "corn") return OilType::corn;
  if (s == "canola") return OilType::canola;
  throw std::invalid_argument("unknown oil type: " + s);
}

SplitCounts split_counts(int total_videos) {
  if (total_videos < 3)
    throw std::invalid_argument("need at least 3 videos for a train/val/test split");
  const int held = static_cast<int>(
      std::max<long long>(1, std::llround(static_cast<double>(total_videos) * 4.0 / 28.0)));
  SplitCounts c;
  c.val = held;
  c.test = held;
  c.train = total_videos - 2 * held;
  if (c.train <= 0) throw std::invalid_argument("split rule leaves no train videos");
  return c;
}

CameraFingerprint sample_fingerprint(std::uint64_t seed, double shortcut_strength,
                                     double clean_contrast) {
  CameraFingerprint fp;
  fp.seed = seed;
  const double amp = shortcut_strength * clean_contrast;
  Rng rng(seed);
  Rng a = rng.stream("amplitudes");
  fp.fpn_amplitude = amp * a.uniform(0.6, 1.0);
  fp.vignette_strength = amp * 2.0 * a.uniform(0.6, 1.0);
  fp.thermal_bias = amp * 0.5 * a.uniform(-1.0, 1.0);
  Rng c = rng.stream("color");
  for (auto& g : fp.wb_gain) g = 1.0 + shortcut_strength * 0.05 * c.uniform(-1.0, 1.0);
  fp.rgb_noise_sigma = shortcut_strength * 0.01 * c.uniform(0.3, 1.0);
  return fp;
}

namespace {

// Alternating class-balanced pick order so that val and test each contain
// both classes whenever their size allows it.
std::vector<int> stratified_order(std::vector<int> good, std::vector<int> replace, Rng& rng) {
  Rng g = rng.stream("shuffle_good");
  Rng r = rng.stream("shuffle_replace");
  auto shuffle = [](std::vector<int>& v, Rng& s) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[static_cast<std::size_t>(s.uniform_int(static_cast<std::int64_t>(i)))]);
  };
  shuffle(good, g);
  shuffle(replace, r);
  std::vector<int> order;
  order.reserve(good.size() + replace.size());
  std::size_t gi = 0, ri = 0;
  bool take_good = true;
  while (gi < good.size() || ri < replace.size()) {
    if (take_good && gi < good.size())
      order.push_back(good[gi++]);
    else if (!take_good && ri < replace.size())
      order.push_back(replace[ri++]);
    else if (gi < good.size())
      order.push_back(good[gi++]);
    else
      order.push_back(replace[ri++]);
    take_good = !take_good;
  }
  return order;
}

}  // namespace

DatasetManifest sample_manifest(const GeneratorConfig& cfg, std::uint64_t master_seed) {
  if (cfg.total_videos < 3 || cfg.frames_per_video <= 0)
    throw std::invalid_argument("generator config: positive video/frame counts required");
  if (cfg.image_h % 32 != 0 || cfg.image_w % 32 != 0)
    throw std::invalid_argument("generator config: image size must be divisible by 32");

  DatasetManifest m;
  m.generator_seed = master_seed;
  m.config = cfg;
  m.videos.resize(static_cast<std::size_t>(cfg.total_videos));

  Rng root(master_seed);
  std::vector<int> good_ids, replace_ids;
  for (int i = 0; i < cfg.total_videos; ++i) {
    VideoSpec& v = m.videos[static_cast<std::size_t>(i)];
    v.video_id = i;
    v.n_frames = cfg.frames_per_video;

    Rng vr = root.stream(Rng::hash_combine(Rng::hash_str("video"), static_cast<std::uint64_t>(i)));
    v.oil_type = vr.bernoulli(0.5) ? OilType::corn : OilType::canola;
    // Alternate classes so every split can be balanced.
    const bool good = (i % 2 == 0);
    const double totox = good ? vr.uniform(cfg.good_totox_min, cfg.good_totox_max)
                              : vr.uniform(cfg.replace_totox_min, cfg.replace_totox_max);
    const double p_av_fraction = vr.uniform(0.2, 0.6);
    const double p_av = p_av_fraction * totox;
    const double pv = (totox - p_av) / 2.0;
    v.chem = make_chemical_state(pv, p_av, vr.uniform(cfg.temp_min_f, cfg.temp_max_f));
    v.fingerprint = sample_fingerprint(Rng::hash_combine(master_seed, static_cast<std::uint64_t>(i)),
                                       cfg.shortcut_strength, cfg.clean_contrast);
    (good ? good_ids : replace_ids).push_back(i);
  }

  const SplitCounts counts = split_counts(cfg.total_videos);
  Rng split_rng = root.stream("splits");
  const std::vector<int> order = stratified_order(good_ids, replace_ids, split_rng);
  for (int k = 0; k < cfg.total_videos; ++k) {
    Split s;
    if (k < counts.test)
      s = Split::test;
    else if (k < counts.test + counts.val)
      s = Split::val;
    else
      s = Split::train;
    m.videos[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])].split = s;
  }

  m.norm_stats = compute_norm_stats(m);
  return m;
}

NormStats compute_norm_stats(const DatasetManifest& manifest) {
  std::vector<const VideoSpec*> train = videos_in_split(manifest, Split::train);
  if (train.empty()) throw std::invalid_argument("norm stats require a non-empty train split");
  auto stat_of = [&](auto field) {
    TargetStats s;
    double sum = 0;
    for (const auto* v : train) sum += field(v->chem);
    s.mean = sum / static_cast<double>(train.size());
    double var = 0;
    for (const auto* v : train) {
      const double d = field(v->chem) - s.mean;
      var += d * d;
    }
    var /= static_cast<double>(train.size());  // population convention
    s.stddev = std::max(std::sqrt(var), 1e-6);
    return s;
  };
  NormStats ns;
  ns.pv = stat_of([](const ChemicalState& c) { return c.pv; });
  ns.p_av = stat_of([](const ChemicalState& c) { return c.p_av; });
  ns.totox = stat_of([](const ChemicalState& c) { return c.totox; });
  ns.temp_f = stat_of([](const ChemicalState& c) { return c.temp_f; });
  return ns;
}

std::vector<const VideoSpec*> videos_in_split(const DatasetManifest& manifest, Split split) {
  std::vector<const VideoSpec*> out;
  for (const auto& v : manifest.videos)
    if (v.split == split) out.push_back(&v);
  return out;
}

std::array<double, 4> normalized_targets(const ChemicalState& chem, const NormStats& stats) {
  return {(chem.pv - stats.pv.mean) / stats.pv.stddev,
          (chem.p_av - stats.p_av.mean) / stats.p_av.stddev,
          (chem.totox - stats.totox.mean) / stats.totox.stddev,
          (chem.temp_f - stats.temp_f.mean) / stats.temp_f.stddev};
}

}  // namespace fryshort::data
