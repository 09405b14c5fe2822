#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fryshort/nn/tensor.hpp"

namespace fryshort::testing {

/// Compares reverse-mode gradients against central finite differences.
/// `scalar_fn` must rebuild the graph from the captured inputs on every call
/// (define-by-run); inputs are perturbed in place for the numeric side.
struct GradcheckResult {
  bool ok = true;
  double max_rel_err = 0.0;
  std::string detail;
};

inline GradcheckResult gradcheck(std::vector<fryshort::nn::Tensor> inputs,
                                 const std::function<fryshort::nn::Tensor()>& scalar_fn,
                                 double tol = 1e-6, double h = 1e-5) {
  using fryshort::nn::NoGradGuard;
  using fryshort::nn::Tensor;
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tensor loss = scalar_fn();
  loss.backward();

  GradcheckResult res;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor& in = inputs[t];
    std::vector<double> analytic(static_cast<std::size_t>(in.numel()), 0.0);
    if (!in.grad().empty()) analytic = in.grad();
    for (std::int64_t i = 0; i < in.numel(); ++i) {
      const double saved = in.data()[i];
      double fp, fm;
      {
        NoGradGuard ng;
        in.data()[i] = saved + h;
        fp = scalar_fn().item();
        in.data()[i] = saved - h;
        fm = scalar_fn().item();
      }
      in.data()[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[static_cast<std::size_t>(i)];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > res.max_rel_err) res.max_rel_err = rel;
      if (rel > tol && res.ok) {
        res.ok = false;
        res.detail = "input " + std::to_string(t) + " elem " + std::to_string(i) + ": analytic " +
                     std::to_string(a) + " vs numeric " + std::to_string(numeric);
      }
    }
  }
  return res;
}

}  // namespace fryshort::testing
