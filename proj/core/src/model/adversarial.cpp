#include "fryshort/model/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fryshort/nn/ops.hpp"
#include "fryshort/util/errors.hpp"

namespace fryshort::model {

using namespace nn;

DaMethod da_method_from_string(const std::string& s) {
  if (s == "grl") return DaMethod::grl;
  if (s == "mmd") return DaMethod::mmd;
  if (s == "coral") return DaMethod::coral;
  if (s == "none") return DaMethod::none;
  throw ConfigError("unknown domain-adaptation method: " + s);
}

std::string to_string(DaMethod m) {
  switch (m) {
    case DaMethod::grl: return "grl";
    case DaMethod::mmd: return "mmd";
    case DaMethod::coral: return "coral";
    case DaMethod::none: return "none";
  }
  return "?";
}

DomainIndex::DomainIndex(std::vector<int> train_video_ids) : ids_(std::move(train_video_ids)) {
  std::sort(ids_.begin(), ids_.end());
  if (std::adjacent_find(ids_.begin(), ids_.end()) != ids_.end())
    throw ConfigError("duplicate train video id");
  if (ids_.empty()) throw ConfigError("empty train video set");
}

std::int64_t DomainIndex::at(int video_id) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), video_id);
  if (it == ids_.end() || *it != video_id)
    throw ContractViolation("video " + std::to_string(video_id) +
                            " is not in the training split; domain losses accept training "
                            "frames only");
  return it - ids_.begin();
}

DomainHead::DomainHead(Rng& rng, std::int64_t in_dim, std::int64_t hidden, std::int64_t n_domains,
                       double dropout_p)
    : dropout_p_(dropout_p) {
  fc1_ = std::make_unique<Linear>(rng, in_dim, hidden);
  bn_ = std::make_unique<BatchNorm>(hidden);
  fc2_ = std::make_unique<Linear>(rng, hidden, n_domains);
  register_child("fc1", fc1_.get());
  register_child("bn", bn_.get());
  register_child("fc2", fc2_.get());
}

Tensor DomainHead::forward(const Tensor& features, Rng& dropout_rng, bool training) const {
  Tensor h = relu(bn_->forward(fc1_->forward(features), /*use_batch_stats=*/true));
  h = dropout(h, dropout_p_, dropout_rng, training);
  return fc2_->forward(h);
}

Tensor dann_loss(const DomainHead& head, const Tensor& features_gap,
                 const std::vector<int>& video_ids, const DomainIndex& domains, double grl_alpha,
                 Rng& dropout_rng, bool training) {
  if (static_cast<std::int64_t>(video_ids.size()) != features_gap.dim(0))
    throw ConfigError("one video id per feature row expected");
  std::vector<std::int64_t> labels;
  labels.reserve(video_ids.size());
  for (const int id : video_ids) labels.push_back(domains.at(id));
  Tensor logits = head.forward(grl(features_gap, grl_alpha), dropout_rng, training);
  return cross_entropy(logits, labels);
}

namespace {

std::map<int, std::vector<std::int64_t>> group_rows(const Tensor& features,
                                                    const std::vector<int>& group_ids) {
  if (features.rank() != 2) throw ConfigError("grouped losses expect (B, d) features");
  if (static_cast<std::int64_t>(group_ids.size()) != features.dim(0))
    throw ConfigError("one group id per feature row expected");
  std::map<int, std::vector<std::int64_t>> groups;
  for (std::size_t i = 0; i < group_ids.size(); ++i)
    groups[group_ids[i]].push_back(static_cast<std::int64_t>(i));
  return groups;
}

Tensor row(const Tensor& features, std::int64_t i) {
  return reshape(slice(features, 0, i, 1), {features.dim(1)});
}

Tensor rbf_kernel(const Tensor& a, const Tensor& b, double bandwidth) {
  Tensor diff = sub(a, b);
  Tensor d2 = sum_all(mul(diff, diff));
  return exp_elem(mul_scalar(d2, -1.0 / (2.0 * bandwidth * bandwidth)));
}

double median_pair_distance(const Tensor& features, const std::vector<std::int64_t>& rows) {
  std::vector<double> dists;
  const auto& v = features.values();
  const std::int64_t d = features.dim(1);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      double s = 0;
      for (std::int64_t k = 0; k < d; ++k) {
        const double diff = v[static_cast<std::size_t>(rows[i] * d + k)] -
                            v[static_cast<std::size_t>(rows[j] * d + k)];
        s += diff * diff;
      }
      dists.push_back(std::sqrt(s));
    }
  if (dists.empty()) return 1.0;
  const auto mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  const double med = dists[mid];
  return med > 0 ? med : 1.0;
}

/// Within-group kernel mean: unbiased (off-diagonal) when m ≥ 2, biased
/// (all pairs including self) when m == 1.
Tensor within_term(const Tensor& features, const std::vector<std::int64_t>& rows,
                   double bandwidth) {
  const auto m = static_cast<std::int64_t>(rows.size());
  if (m == 1) return rbf_kernel(row(features, rows[0]), row(features, rows[0]), bandwidth);
  std::vector<Tensor> parts;
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < m; ++j)
      if (i != j)
        parts.push_back(rbf_kernel(row(features, rows[static_cast<std::size_t>(i)]),
                                   row(features, rows[static_cast<std::size_t>(j)]), bandwidth));
  std::vector<double> w(parts.size(), 1.0 / static_cast<double>(m * (m - 1)));
  return weighted_sum(parts, w);
}

Tensor cross_term(const Tensor& features, const std::vector<std::int64_t>& a,
                  const std::vector<std::int64_t>& b, double bandwidth) {
  std::vector<Tensor> parts;
  for (const auto i : a)
    for (const auto j : b) parts.push_back(rbf_kernel(row(features, i), row(features, j), bandwidth));
  std::vector<double> w(parts.size(), 1.0 / static_cast<double>(a.size() * b.size()));
  return weighted_sum(parts, w);
}

Tensor group_mean(const Tensor& features, const std::vector<std::int64_t>& rows) {
  return mean_axis(index_select(features, 0, rows), 0);
}

/// Population covariance of the selected rows, (d, d).
Tensor group_cov(const Tensor& features, const std::vector<std::int64_t>& rows) {
  Tensor sel = index_select(features, 0, rows);
  Tensor centered = sub(sel, group_mean(features, rows));
  Tensor cov = matmul(permute(centered, {1, 0}), centered);
  return mul_scalar(cov, 1.0 / static_cast<double>(rows.size()));
}

}  // namespace

GroupedLoss mmd_loss(const Tensor& features, const std::vector<int>& group_ids) {
  const auto groups = group_rows(features, group_ids);
  if (groups.size() < 2) return {Tensor::scalar(0.0), true};
  std::vector<Tensor> pair_terms;
  for (auto a = groups.begin(); a != groups.end(); ++a)
    for (auto b = std::next(a); b != groups.end(); ++b) {
      std::vector<std::int64_t> all = a->second;
      all.insert(all.end(), b->second.begin(), b->second.end());
      const double bw = median_pair_distance(features, all);
      Tensor term = sub(add(within_term(features, a->second, bw),
                            within_term(features, b->second, bw)),
                        mul_scalar(cross_term(features, a->second, b->second, bw), 2.0));
      pair_terms.push_back(term);
    }
  std::vector<double> w(pair_terms.size(), 1.0 / static_cast<double>(pair_terms.size()));
  return {weighted_sum(pair_terms, w), false};
}

GroupedLoss coral_loss(const Tensor& features, const std::vector<int>& group_ids) {
  const auto groups = group_rows(features, group_ids);
  if (groups.size() < 2) return {Tensor::scalar(0.0), true};
  const double d = static_cast<double>(features.dim(1));
  std::vector<std::int64_t> all_rows(static_cast<std::size_t>(features.dim(0)));
  for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = static_cast<std::int64_t>(i);
  Tensor batch_cov = group_cov(features, all_rows);
  Tensor batch_mean = group_mean(features, all_rows);
  std::vector<Tensor> terms;
  for (const auto& [id, rows] : groups) {
    (void)id;
    Tensor dc = sub(group_cov(features, rows), batch_cov);
    Tensor dm = sub(group_mean(features, rows), batch_mean);
    terms.push_back(add(mul_scalar(sum_all(mul(dc, dc)), 1.0 / (4.0 * d * d)),
                        mul_scalar(sum_all(mul(dm, dm)), 1.0 / d)));
  }
  std::vector<double> w(terms.size(), 1.0 / static_cast<double>(terms.size()));
  return {weighted_sum(terms, w), false};
}

}  // namespace fryshort::model
