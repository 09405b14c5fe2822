#include "fryshort/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace fryshort::nn {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
  }
}

void AdamW::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    if (p.grad().empty()) continue;  // parameter untouched this iteration
    const double* g = p.grad().data();
    double* w = p.data();
    double* m = m_[pi].data();
    double* v = v_[pi].data();
    const bool decay = p.rank() >= 2;
    const double wd = decay ? cfg_.lr * cfg_.weight_decay : 0.0;
    const std::int64_t n = p.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) + wd * w[i];
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

AdamW::State AdamW::export_state() const { return State{step_, m_, v_}; }

void AdamW::import_state(const State& s) {
  if (s.m.size() != params_.size() || s.v.size() != params_.size())
    throw std::invalid_argument("optimizer state: parameter count mismatch");
  step_ = s.step;
  m_ = s.m;
  v_ = s.v;
}

}  // namespace fryshort::nn
