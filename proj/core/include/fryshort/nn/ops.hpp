#pragma once

#include <vector>

#include "fryshort/nn/tensor.hpp"

namespace fryshort::nn {

// Elementwise with numpy-style broadcasting (ranks padded on the left).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor sigmoid(const Tensor& a);
Tensor exp_elem(const Tensor& a);

// Reductions.
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mean_axis(const Tensor& a, int axis, bool keepdim = false);
Tensor max_axis(const Tensor& a, int axis, bool keepdim = false);

// Shape manipulation (all produce fresh storage).
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t len);
Tensor index_select(const Tensor& a, int axis, const std::vector<std::int64_t>& indices);
/// (B,N,C) -> (B,C,H,W) with N == H*W, row-major token order.
Tensor tokens_to_grid(const Tensor& a, std::int64_t h, std::int64_t w);
/// (B,C,H,W) -> (B,H*W,C).
Tensor grid_to_tokens(const Tensor& a);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // (M,K) x (K,N)
Tensor bmm(const Tensor& a, const Tensor& b);     // (B,M,K) x (B,K,N)
/// x: (..., in), w: (out, in), b: (out) or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// x: (B,Cin,H,W), w: (Cout, Cin/groups, kh, kw), b: (Cout) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
              int groups = 1);

/// Half-pixel bilinear interpolation; identity when sizes match.
Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w);

Tensor global_avg_pool(const Tensor& x);  // (B,C,H,W) -> (B,C)
Tensor global_max_pool(const Tensor& x);  // (B,C,H,W) -> (B,C)

// Normalization.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);
/// Training mode uses batch statistics and updates running buffers in place
/// (population variance convention). Eval mode normalizes by the running
/// buffers. Supports rank-2 (B,F) and rank-4 (B,C,H,W) inputs.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

/// Gradient reversal: forward identity, backward multiplies by -alpha.
Tensor grl(const Tensor& x, double alpha);
/// Identity forward with no gradient flow into x.
Tensor stop_gradient(const Tensor& x);

Tensor softmax_lastdim(const Tensor& x);

// Losses (mean reduction).
Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels);
Tensor huber_loss(const Tensor& pred, const Tensor& target, double delta = 1.0);
Tensor l1_loss(const Tensor& pred, const Tensor& target);
/// sum_i w_i * parts_i over scalar tensors.
Tensor weighted_sum(const std::vector<Tensor>& parts, const std::vector<double>& weights);

}  // namespace fryshort::nn
