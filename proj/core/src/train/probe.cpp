#include "fryshort/train/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fryshort/nn/module.hpp"
#include "fryshort/nn/ops.hpp"
#include "fryshort/nn/optim.hpp"
#include "fryshort/util/errors.hpp"

namespace fryshort::train {

using nn::Tensor;

ProbeResult fit_linear_probe(const Tensor& features, const std::vector<std::int64_t>& labels,
                             std::int64_t n_classes, std::uint64_t seed) {
  if (features.rank() != 2) throw ConfigError("probe features must be (N, C)");
  const auto n = features.dim(0);
  const auto dim = features.dim(1);
  if (n != static_cast<std::int64_t>(labels.size())) throw ConfigError("label count mismatch");
  if (n < 5) throw ConfigError("probe needs at least 5 samples for an 80/20 split");
  if (n_classes < 2) throw ConfigError("probe needs at least 2 classes");

  Rng rng(seed);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[static_cast<std::size_t>(
                            rng.uniform_int(static_cast<std::int64_t>(i) + 1))]);
  const auto n_held = std::max<std::int64_t>(1, n / 5);
  std::vector<std::int64_t> held(order.begin(), order.begin() + n_held);
  std::vector<std::int64_t> fit(order.begin() + n_held, order.end());

  // standardize with fit-split statistics so the probe is well conditioned
  std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
  std::vector<double> std_dev(static_cast<std::size_t>(dim), 0.0);
  const auto& vals = features.values();
  for (auto r : fit)
    for (std::int64_t c = 0; c < dim; ++c)
      mean[static_cast<std::size_t>(c)] += vals[static_cast<std::size_t>(r * dim + c)];
  for (auto& m : mean) m /= static_cast<double>(fit.size());
  for (auto r : fit)
    for (std::int64_t c = 0; c < dim; ++c) {
      const double d = vals[static_cast<std::size_t>(r * dim + c)] - mean[static_cast<std::size_t>(c)];
      std_dev[static_cast<std::size_t>(c)] += d * d;
    }
  for (auto& s : std_dev) s = std::max(std::sqrt(s / static_cast<double>(fit.size())), 1e-6);

  auto standardized_rows = [&](const std::vector<std::int64_t>& rows) {
    std::vector<double> out(rows.size() * static_cast<std::size_t>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::int64_t c = 0; c < dim; ++c)
        out[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)] =
            (vals[static_cast<std::size_t>(rows[i] * dim + c)] -
             mean[static_cast<std::size_t>(c)]) /
            std_dev[static_cast<std::size_t>(c)];
    return out;
  };
  Tensor x_fit = Tensor::from_data({static_cast<std::int64_t>(fit.size()), dim},
                                   standardized_rows(fit));
  Tensor x_held = Tensor::from_data({static_cast<std::int64_t>(held.size()), dim},
                                    standardized_rows(held));
  std::vector<std::int64_t> y_fit, y_held;
  for (auto r : fit) y_fit.push_back(labels[static_cast<std::size_t>(r)]);
  for (auto r : held) y_held.push_back(labels[static_cast<std::size_t>(r)]);

  Rng init = rng.stream("probe-init");
  nn::Linear clf(init, dim, n_classes);
  nn::AdamW opt(clf.parameters(), nn::AdamWConfig{.lr = 5e-2, .weight_decay = 0.0});
  for (int step = 0; step < 300; ++step) {
    Tensor loss = cross_entropy(clf.forward(x_fit), y_fit);
    loss.backward();
    opt.step();
    opt.zero_grad();
  }

  nn::NoGradGuard guard;
  Tensor logits = clf.forward(x_held);
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < held.size(); ++i) {
    std::int64_t best = 0;
    double best_v = logits.values()[i * static_cast<std::size_t>(n_classes)];
    for (std::int64_t c = 1; c < n_classes; ++c) {
      const double v = logits.values()[i * static_cast<std::size_t>(n_classes) +
                                       static_cast<std::size_t>(c)];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    if (best == y_held[i]) ++hits;
  }
  ProbeResult res;
  res.accuracy = static_cast<double>(hits) / static_cast<double>(held.size());
  res.n_fit = static_cast<std::int64_t>(fit.size());
  res.n_held = static_cast<std::int64_t>(held.size());
  res.n_classes = n_classes;
  return res;
}

ProbeResult probe_audit(model::DualStreamNet& net, const LoadedDataset& ds, std::uint64_t seed) {
  net.set_training(false);
  model::DomainIndex domains(ds.train_video_ids);

  std::vector<double> rows;
  std::vector<std::int64_t> labels;
  std::int64_t dim = 0;
  {
    nn::NoGradGuard guard;
    Rng unused(0);
    for (const auto& frame : ds.train) {
      Tensor thermal = Tensor::from_data({1, 1, frame.h, frame.w}, frame.thermal);
      Tensor rgb = Tensor::from_data({1, 3, frame.h, frame.w}, frame.rgb);
      auto out = net.run(thermal, rgb, /*training=*/false, unused, nullptr);
      dim = out.f4_gap.dim(1);
      rows.insert(rows.end(), out.f4_gap.values().begin(), out.f4_gap.values().end());
      labels.push_back(domains.at(frame.video_id));
    }
  }
  Tensor features =
      Tensor::from_data({static_cast<std::int64_t>(labels.size()), dim}, std::move(rows));
  return fit_linear_probe(features, labels, static_cast<std::int64_t>(ds.train_video_ids.size()),
                          seed);
}

}  // namespace fryshort::train
