#include "fryshort/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace fryshort::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// ---------------------------------------------------------------------------
// Broadcasting
// ---------------------------------------------------------------------------

Shape pad_shape(const Shape& s, std::size_t rank) {
  Shape out(rank, 1);
  std::copy(s.begin(), s.end(), out.begin() + static_cast<std::ptrdiff_t>(rank - s.size()));
  return out;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  const Shape pa = pad_shape(a, rank);
  const Shape pb = pad_shape(b, rank);
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    check(pa[i] == pb[i] || pa[i] == 1 || pb[i] == 1,
          "broadcast mismatch: " + shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(pa[i], pb[i]);
  }
  return out;
}

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i) + 1] * s[static_cast<std::size_t>(i) + 1];
  return st;
}

// Strides for reading a (padded) source shape as the broadcast output shape:
// zero stride over broadcast dimensions.
std::vector<std::int64_t> broadcast_strides(const Shape& src, const Shape& out) {
  const Shape p = pad_shape(src, out.size());
  auto st = contiguous_strides(p);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (p[i] == 1 && out[i] != 1) st[i] = 0;
  return st;
}

// Applies fn(out_idx, a_idx, b_idx) over the full broadcast index space.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, Fn&& fn) {
  const std::size_t rank = out.size();
  const std::int64_t total = shape_numel(out);
  if (total == 0) return;
  if (rank == 0) {
    fn(0, 0, 0);
    return;
  }
  const std::int64_t inner = out[rank - 1];
  const std::int64_t outer = total / inner;
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t oa = 0, ob = 0;
  for (std::int64_t o = 0; o < outer; ++o) {
    const std::int64_t ia = sa[rank - 1], ib = sb[rank - 1];
    const std::int64_t base = o * inner;
    for (std::int64_t i = 0; i < inner; ++i) fn(base + i, oa + i * ia, ob + i * ib);
    // odometer over the outer dims
    for (int d = static_cast<int>(rank) - 2; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      ++idx[du];
      oa += sa[du];
      ob += sb[du];
      if (idx[du] < out[du]) break;
      oa -= sa[du] * out[du];
      ob -= sb[du] * out[du];
      idx[du] = 0;
    }
  }
}

Tensor binary_op(const Tensor& a, const Tensor& b, double (*fwd)(double, double),
                 void (*bwd)(double, double, double, double&, double&)) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  Tensor out = make_op(out_shape, {a, b}, [a, b, out_shape, sa, sb, bwd](Node& self) {
    const bool na = a.requires_grad();
    const bool nb = b.requires_grad();
    if (na) a.node()->ensure_grad();
    if (nb) b.node()->ensure_grad();
    const double* av = a.data();
    const double* bv = b.data();
    double* ag = na ? a.node()->grad.data() : nullptr;
    double* bg = nb ? b.node()->grad.data() : nullptr;
    const double* g = self.grad.data();
    for_each_broadcast(out_shape, sa, sb, [&](std::int64_t oi, std::int64_t ia, std::int64_t ib) {
      double da = 0, db = 0;
      bwd(av[ia], bv[ib], g[oi], da, db);
      if (ag) ag[ia] += da;
      if (bg) bg[ib] += db;
    });
  });
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.data();
  for_each_broadcast(out_shape, sa, sb, [&](std::int64_t oi, std::int64_t ia, std::int64_t ib) {
    ov[oi] = fwd(av[ia], bv[ib]);
  });
  return out;
}

Tensor unary_op(const Tensor& a, double (*fwd)(double), double (*dfdx)(double, double)) {
  // dfdx receives (x, y) so implementations may reuse the forward value.
  Tensor out = make_op(a.shape(), {a}, [a, dfdx](Node& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    const double* x = a.data();
    const double* y = self.value.data();
    double* ag = a.node()->grad.data();
    const double* g = self.grad.data();
    const std::int64_t n = self.numel();
    for (std::int64_t i = 0; i < n; ++i) ag[i] += g[i] * dfdx(x[i], y[i]);
  });
  const double* x = a.data();
  double* y = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) y[i] = fwd(x[i]);
  return out;
}

int normalize_axis(int axis, int rank) {
  if (axis < 0) axis += rank;
  check(axis >= 0 && axis < rank, "axis out of range");
  return axis;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor neg(const Tensor& a) {
  return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = make_op(a.shape(), {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    double* ag = a.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < self.numel(); ++i) ag[i] += g[i];
  });
  const double* x = a.data();
  double* y = out.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) y[i] = x[i] + c;
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out = make_op(a.shape(), {a}, [a, c](Node& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    double* ag = a.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < self.numel(); ++i) ag[i] += c * g[i];
  });
  const double* x = a.data();
  double* y = out.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) y[i] = c * x[i];
  return out;
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        return cdf + x * pdf;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp_elem(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  Tensor out = make_op({1}, {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    const double g = self.grad[0];
    for (auto& v : a.node()->grad) v += g;
  });
  double s = 0.0;
  for (double v : a.values()) s += v;
  out.data()[0] = s;
  return out;
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  Tensor out = make_op({1}, {a}, [a, inv](Node& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    const double g = self.grad[0] * inv;
    for (auto& v : a.node()->grad) v += g;
  });
  double s = 0.0;
  for (double v : a.values()) s += v;
  out.data()[0] = s * inv;
  return out;
}

namespace {
// Decomposes a shape around `axis` into (outer, len, inner).
struct AxisSplit {
  std::int64_t outer, len, inner;
};
AxisSplit axis_split(const Shape& s, int axis) {
  AxisSplit r{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}
Shape reduced_shape(const Shape& s, int axis, bool keepdim) {
  Shape out = s;
  if (keepdim)
    out[static_cast<std::size_t>(axis)] = 1;
  else
    out.erase(out.begin() + axis);
  return out;
}
}  // namespace

Tensor mean_axis(const Tensor& a, int axis, bool keepdim) {
  axis = normalize_axis(axis, a.rank());
  const AxisSplit sp = axis_split(a.shape(), axis);
  const double inv = 1.0 / static_cast<double>(sp.len);
  Tensor out = make_op(reduced_shape(a.shape(), axis, keepdim), {a}, [a, sp, inv](Node& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    double* ag = a.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t o = 0; o < sp.outer; ++o)
      for (std::int64_t l = 0; l < sp.len; ++l) {
        const std::int64_t base = (o * sp.len + l) * sp.inner;
        const std::int64_t gbase = o * sp.inner;
        for (std::int64_t i = 0; i < sp.inner; ++i) ag[base + i] += g[gbase + i] * inv;
      }
  });
  const double* x = a.data();
  double* y = out.data();
  std::fill(y, y + out.numel(), 0.0);
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t l = 0; l < sp.len; ++l) {
      const std::int64_t base = (o * sp.len + l) * sp.inner;
      const std::int64_t obase = o * sp.inner;
      for (std::int64_t i = 0; i < sp.inner; ++i) y[obase + i] += x[base + i];
    }
  for (std::int64_t i = 0; i < out.numel(); ++i) y[i] *= inv;
  return out;
}

Tensor max_axis(const Tensor& a, int axis, bool keepdim) {
  axis = normalize_axis(axis, a.rank());
  const AxisSplit sp = axis_split(a.shape(), axis);
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(sp.outer * sp.inner));
  Tensor out = make_op(reduced_shape(a.shape(), axis, keepdim), {a}, [a, sp, argmax](Node& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    double* ag = a.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t o = 0; o < sp.outer; ++o)
      for (std::int64_t i = 0; i < sp.inner; ++i) {
        const std::int64_t flat = o * sp.inner + i;
        const std::int64_t l = (*argmax)[static_cast<std::size_t>(flat)];
        ag[(o * sp.len + l) * sp.inner + i] += g[flat];
      }
  });
  const double* x = a.data();
  double* y = out.data();
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t i = 0; i < sp.inner; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      std::int64_t best_l = 0;
      for (std::int64_t l = 0; l < sp.len; ++l) {
        const double v = x[(o * sp.len + l) * sp.inner + i];
        if (v > best) {
          best = v;
          best_l = l;
        }
      }
      y[o * sp.inner + i] = best;
      (*argmax)[static_cast<std::size_t>(o * sp.inner + i)] = best_l;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  // A single -1 dimension is inferred.
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      check(infer == -1, "reshape: multiple -1 dims");
      infer = static_cast<int>(i);
    } else
      known *= shape[i];
  }
  if (infer >= 0) shape[static_cast<std::size_t>(infer)] = a.numel() / known;
  check(shape_numel(shape) == a.numel(),
        "reshape: numel mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
  Tensor out = make_op(shape, {a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    double* ag = a.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < self.numel(); ++i) ag[i] += g[i];
  });
  std::memcpy(out.data(), a.data(), static_cast<std::size_t>(a.numel()) * sizeof(double));
  return out;
}

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const int rank = a.rank();
  check(static_cast<int>(perm.size()) == rank, "permute: rank mismatch");
  Shape out_shape(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i)
    out_shape[static_cast<std::size_t>(i)] = a.shape()[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  const auto in_strides = contiguous_strides(a.shape());
  // stride in the input for each output dimension
  std::vector<std::int64_t> gather(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i)
    gather[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];

  auto run = [out_shape, gather](const double* src, double* dst, bool accumulate) {
    const std::size_t rank = out_shape.size();
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t src_off = 0;
    const std::int64_t total = shape_numel(out_shape);
    const std::int64_t inner = out_shape[rank - 1];
    const std::int64_t istride = gather[rank - 1];
    for (std::int64_t base = 0; base < total; base += inner) {
      if (accumulate)
        for (std::int64_t i = 0; i < inner; ++i) dst[src_off + i * istride] += src[base + i];
      else
        for (std::int64_t i = 0; i < inner; ++i) dst[base + i] = src[src_off + i * istride];
      for (int d = static_cast<int>(rank) - 2; d >= 0; --d) {
        auto du = static_cast<std::size_t>(d);
        ++idx[du];
        src_off += gather[du];
        if (idx[du] < out_shape[du]) break;
        src_off -= gather[du] * out_shape[du];
        idx[du] = 0;
      }
    }
  };

  Tensor out = make_op(out_shape, {a}, [a, run](Node& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    run(self.grad.data(), a.node()->grad.data(), /*accumulate=*/true);
  });
  run(a.data(), out.data(), /*accumulate=*/false);
  return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  check(!xs.empty(), "concat: empty input");
  const int rank = xs[0].rank();
  axis = normalize_axis(axis, rank);
  Shape out_shape = xs[0].shape();
  std::int64_t axis_total = 0;
  for (const auto& x : xs) {
    check(x.rank() == rank, "concat: rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis)
        check(x.shape()[static_cast<std::size_t>(d)] == out_shape[static_cast<std::size_t>(d)],
              "concat: shape mismatch");
    axis_total += x.shape()[static_cast<std::size_t>(axis)];
  }
  out_shape[static_cast<std::size_t>(axis)] = axis_total;
  const AxisSplit osp = axis_split(out_shape, axis);

  Tensor out = make_op(out_shape, xs, [xs, osp, axis](Node& self) {
    const double* g = self.grad.data();
    std::int64_t offset = 0;
    for (const auto& x : xs) {
      const std::int64_t len = x.shape()[static_cast<std::size_t>(axis)];
      if (x.requires_grad()) {
        x.node()->ensure_grad();
        double* ag = x.node()->grad.data();
        for (std::int64_t o = 0; o < osp.outer; ++o) {
          const double* srow = g + (o * osp.len + offset) * osp.inner;
          double* drow = ag + o * len * osp.inner;
          for (std::int64_t i = 0; i < len * osp.inner; ++i) drow[i] += srow[i];
        }
      }
      offset += len;
    }
  });
  double* y = out.data();
  std::int64_t offset = 0;
  for (const auto& x : xs) {
    const std::int64_t len = x.shape()[static_cast<std::size_t>(axis)];
    const double* src = x.data();
    for (std::int64_t o = 0; o < osp.outer; ++o)
      std::memcpy(y + (o * osp.len + offset) * osp.inner, src + o * len * osp.inner,
                  static_cast<std::size_t>(len * osp.inner) * sizeof(double));
    offset += len;
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t len) {
  axis = normalize_axis(axis, a.rank());
  const AxisSplit sp = axis_split(a.shape(), axis);
  check(start >= 0 && start + len <= sp.len, "slice: out of range");
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tensor out = make_op(out_shape, {a}, [a, sp, start, len](Node& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    double* ag = a.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      double* drow = ag + (o * sp.len + start) * sp.inner;
      const double* srow = g + o * len * sp.inner;
      for (std::int64_t i = 0; i < len * sp.inner; ++i) drow[i] += srow[i];
    }
  });
  double* y = out.data();
  const double* x = a.data();
  for (std::int64_t o = 0; o < sp.outer; ++o)
    std::memcpy(y + o * len * sp.inner, x + (o * sp.len + start) * sp.inner,
                static_cast<std::size_t>(len * sp.inner) * sizeof(double));
  return out;
}

Tensor index_select(const Tensor& a, int axis, const std::vector<std::int64_t>& indices) {
  axis = normalize_axis(axis, a.rank());
  const AxisSplit sp = axis_split(a.shape(), axis);
  for (auto i : indices) check(i >= 0 && i < sp.len, "index_select: index out of range");
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = static_cast<std::int64_t>(indices.size());
  const std::int64_t olen = static_cast<std::int64_t>(indices.size());
  auto idx = std::make_shared<std::vector<std::int64_t>>(indices);
  Tensor out = make_op(out_shape, {a}, [a, sp, olen, idx](Node& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    double* ag = a.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t o = 0; o < sp.outer; ++o)
      for (std::int64_t j = 0; j < olen; ++j) {
        double* drow = ag + (o * sp.len + (*idx)[static_cast<std::size_t>(j)]) * sp.inner;
        const double* srow = g + (o * olen + j) * sp.inner;
        for (std::int64_t i = 0; i < sp.inner; ++i) drow[i] += srow[i];
      }
  });
  double* y = out.data();
  const double* x = a.data();
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t j = 0; j < olen; ++j)
      std::memcpy(y + (o * olen + j) * sp.inner,
                  x + (o * sp.len + indices[static_cast<std::size_t>(j)]) * sp.inner,
                  static_cast<std::size_t>(sp.inner) * sizeof(double));
  return out;
}

Tensor tokens_to_grid(const Tensor& a, std::int64_t h, std::int64_t w) {
  check(a.rank() == 3 && a.dim(1) == h * w, "tokens_to_grid: bad shape");
  return permute(reshape(a, {a.dim(0), h, w, a.dim(2)}), {0, 3, 1, 2});
}

Tensor grid_to_tokens(const Tensor& a) {
  check(a.rank() == 4, "grid_to_tokens: rank-4 input expected");
  return reshape(permute(a, {0, 2, 3, 1}), {a.dim(0), a.dim(2) * a.dim(3), a.dim(1)});
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), "matmul: bad shapes");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make_op({m, n}, {a, b}, [a, b, m, k, n](Node& self) {
    MapConst g(self.grad.data(), m, n);
    if (a.requires_grad()) {
      a.node()->ensure_grad();
      MapMat ag(a.node()->grad.data(), m, k);
      MapConst bv(b.data(), k, n);
      ag.noalias() += g * bv.transpose();
    }
    if (b.requires_grad()) {
      b.node()->ensure_grad();
      MapMat bg(b.node()->grad.data(), k, n);
      MapConst av(a.data(), m, k);
      bg.noalias() += av.transpose() * g;
    }
  });
  MapMat y(out.data(), m, n);
  MapConst av(a.data(), m, k), bv(b.data(), k, n);
  y.noalias() = av * bv;
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  check(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
        "bmm: bad shapes");
  const std::int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  Tensor out = make_op({bs, m, n}, {a, b}, [a, b, bs, m, k, n](Node& self) {
    for (std::int64_t s = 0; s < bs; ++s) {
      MapConst g(self.grad.data() + s * m * n, m, n);
      if (a.requires_grad()) {
        a.node()->ensure_grad();
        MapMat ag(a.node()->grad.data() + s * m * k, m, k);
        MapConst bv(b.data() + s * k * n, k, n);
        ag.noalias() += g * bv.transpose();
      }
      if (b.requires_grad()) {
        b.node()->ensure_grad();
        MapMat bg(b.node()->grad.data() + s * k * n, k, n);
        MapConst av(a.data() + s * m * k, m, k);
        bg.noalias() += av.transpose() * g;
      }
    }
  });
  for (std::int64_t s = 0; s < bs; ++s) {
    MapMat y(out.data() + s * m * n, m, n);
    MapConst av(a.data() + s * m * k, m, k), bv(b.data() + s * k * n, k, n);
    y.noalias() = av * bv;
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check(w.rank() == 2 && x.dim(-1) == w.dim(1), "linear: in_features mismatch");
  const std::int64_t in = w.dim(1), out_f = w.dim(0);
  const std::int64_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  std::vector<Tensor> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  Tensor out = make_op(out_shape, parents, [x, w, b, rows, in, out_f](Node& self) {
    MapConst g(self.grad.data(), rows, out_f);
    if (x.requires_grad()) {
      x.node()->ensure_grad();
      MapMat xg(x.node()->grad.data(), rows, in);
      MapConst wv(w.data(), out_f, in);
      xg.noalias() += g * wv;
    }
    if (w.requires_grad()) {
      w.node()->ensure_grad();
      MapMat wg(w.node()->grad.data(), out_f, in);
      MapConst xv(x.data(), rows, in);
      wg.noalias() += g.transpose() * xv;
    }
    if (b.defined() && b.requires_grad()) {
      b.node()->ensure_grad();
      Eigen::Map<Eigen::VectorXd> bg(b.node()->grad.data(), out_f);
      bg.noalias() += g.colwise().sum().transpose();
    }
  });
  MapMat y(out.data(), rows, out_f);
  MapConst xv(x.data(), rows, in), wv(w.data(), out_f, in);
  y.noalias() = xv * wv.transpose();
  if (b.defined()) y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), out_f);
  return out;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
  std::int64_t batch, cin, h, w, cout, kh, kw, oh, ow;
  int stride, pad, groups;
};

void im2col(const double* x, const ConvDims& d, std::int64_t c_begin, std::int64_t c_end,
            double* col) {
  // col layout: ((c_end-c_begin)*kh*kw, oh*ow)
  const std::int64_t ohw = d.oh * d.ow;
  std::int64_t row = 0;
  for (std::int64_t c = c_begin; c < c_end; ++c) {
    const double* xc = x + c * d.h * d.w;
    for (std::int64_t ky = 0; ky < d.kh; ++ky)
      for (std::int64_t kx = 0; kx < d.kw; ++kx, ++row) {
        double* crow = col + row * ohw;
        for (std::int64_t oy = 0; oy < d.oh; ++oy) {
          const std::int64_t iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) {
            std::fill(crow + oy * d.ow, crow + (oy + 1) * d.ow, 0.0);
            continue;
          }
          const double* xrow = xc + iy * d.w;
          for (std::int64_t ox = 0; ox < d.ow; ++ox) {
            const std::int64_t ix = ox * d.stride - d.pad + kx;
            crow[oy * d.ow + ox] = (ix >= 0 && ix < d.w) ? xrow[ix] : 0.0;
          }
        }
      }
  }
}

void col2im_accum(const double* col, const ConvDims& d, std::int64_t c_begin, std::int64_t c_end,
                  double* dx) {
  const std::int64_t ohw = d.oh * d.ow;
  std::int64_t row = 0;
  for (std::int64_t c = c_begin; c < c_end; ++c) {
    double* xc = dx + c * d.h * d.w;
    for (std::int64_t ky = 0; ky < d.kh; ++ky)
      for (std::int64_t kx = 0; kx < d.kw; ++kx, ++row) {
        const double* crow = col + row * ohw;
        for (std::int64_t oy = 0; oy < d.oh; ++oy) {
          const std::int64_t iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) continue;
          double* xrow = xc + iy * d.w;
          for (std::int64_t ox = 0; ox < d.ow; ++ox) {
            const std::int64_t ix = ox * d.stride - d.pad + kx;
            if (ix >= 0 && ix < d.w) xrow[ix] += crow[oy * d.ow + ox];
          }
        }
      }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad, int groups) {
  check(x.rank() == 4 && w.rank() == 4, "conv2d: rank-4 input and weight expected");
  ConvDims d;
  d.batch = x.dim(0);
  d.cin = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  d.groups = groups;
  check(d.cin % groups == 0 && d.cout % groups == 0 && w.dim(1) == d.cin / groups,
        "conv2d: channel/group mismatch");
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  check(d.oh > 0 && d.ow > 0, "conv2d: empty output");

  const std::int64_t cg_in = d.cin / groups;
  const std::int64_t cg_out = d.cout / groups;
  const std::int64_t krows = cg_in * d.kh * d.kw;
  const std::int64_t ohw = d.oh * d.ow;

  std::vector<Tensor> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  Tensor out = make_op({d.batch, d.cout, d.oh, d.ow}, parents,
                       [x, w, b, d, cg_in, cg_out, krows, ohw](Node& self) {
    std::vector<double> col(static_cast<std::size_t>(krows * ohw));
    std::vector<double> dcol(static_cast<std::size_t>(krows * ohw));
    const bool need_x = x.requires_grad();
    const bool need_w = w.requires_grad();
    if (need_x) x.node()->ensure_grad();
    if (need_w) w.node()->ensure_grad();
    if (b.defined() && b.requires_grad()) {
      b.node()->ensure_grad();
      double* bg = b.node()->grad.data();
      const double* g = self.grad.data();
      for (std::int64_t s = 0; s < d.batch; ++s)
        for (std::int64_t c = 0; c < d.cout; ++c) {
          const double* grow = g + (s * d.cout + c) * ohw;
          double acc = 0.0;
          for (std::int64_t i = 0; i < ohw; ++i) acc += grow[i];
          bg[c] += acc;
        }
    }
    for (std::int64_t s = 0; s < d.batch; ++s) {
      const double* xs = x.data() + s * d.cin * d.h * d.w;
      const double* gs = self.grad.data() + s * d.cout * ohw;
      for (int g = 0; g < d.groups; ++g) {
        if (need_w || need_x) im2col(xs, d, g * cg_in, (g + 1) * cg_in, col.data());
        MapConst gmap(gs + g * cg_out * ohw, cg_out, ohw);
        if (need_w) {
          MapMat wg(w.node()->grad.data() + g * cg_out * krows, cg_out, krows);
          MapConst cmap(col.data(), krows, ohw);
          wg.noalias() += gmap * cmap.transpose();
        }
        if (need_x) {
          MapConst wmap(w.data() + g * cg_out * krows, cg_out, krows);
          MapMat dcmap(dcol.data(), krows, ohw);
          dcmap.noalias() = wmap.transpose() * gmap;
          col2im_accum(dcol.data(), d, g * cg_in, (g + 1) * cg_in,
                       x.node()->grad.data() + s * d.cin * d.h * d.w);
        }
      }
    }
  });

  std::vector<double> col(static_cast<std::size_t>(krows * ohw));
  for (std::int64_t s = 0; s < d.batch; ++s) {
    const double* xs = x.data() + s * d.cin * d.h * d.w;
    double* ys = out.data() + s * d.cout * ohw;
    for (int g = 0; g < d.groups; ++g) {
      im2col(xs, d, g * cg_in, (g + 1) * cg_in, col.data());
      MapMat y(ys + g * cg_out * ohw, cg_out, ohw);
      MapConst wmap(w.data() + g * cg_out * krows, cg_out, krows);
      MapConst cmap(col.data(), krows, ohw);
      y.noalias() = wmap * cmap;
    }
    if (b.defined()) {
      const double* bv = b.data();
      for (std::int64_t c = 0; c < d.cout; ++c) {
        double* row = ys + c * ohw;
        for (std::int64_t i = 0; i < ohw; ++i) row[i] += bv[c];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resize / pooling
// ---------------------------------------------------------------------------

Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  check(x.rank() == 4, "bilinear_resize: rank-4 input expected");
  const std::int64_t bs = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  // Precompute 1-D interpolation taps (half-pixel convention).
  struct Tap {
    std::int64_t i0, i1;
    double w0, w1;
  };
  auto make_taps = [](std::int64_t in, std::int64_t out) {
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      if (src < 0) src = 0;
      if (src > static_cast<double>(in - 1)) src = static_cast<double>(in - 1);
      const auto i0 = static_cast<std::int64_t>(std::floor(src));
      const std::int64_t i1 = std::min(i0 + 1, in - 1);
      const double f = src - static_cast<double>(i0);
      taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - f, f};
    }
    return taps;
  };
  auto ty = std::make_shared<std::vector<Tap>>(make_taps(h, out_h));
  auto tx = std::make_shared<std::vector<Tap>>(make_taps(w, out_w));

  Tensor out = make_op({bs, c, out_h, out_w}, {x}, [x, bs, c, h, w, out_h, out_w, ty, tx](Node& self) {
    if (!x.requires_grad()) return;
    x.node()->ensure_grad();
    double* xg = x.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t p = 0; p < bs * c; ++p) {
      double* plane = xg + p * h * w;
      const double* gp = g + p * out_h * out_w;
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const Tap& a = (*ty)[static_cast<std::size_t>(oy)];
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const Tap& bt = (*tx)[static_cast<std::size_t>(ox)];
          const double gv = gp[oy * out_w + ox];
          plane[a.i0 * w + bt.i0] += a.w0 * bt.w0 * gv;
          plane[a.i0 * w + bt.i1] += a.w0 * bt.w1 * gv;
          plane[a.i1 * w + bt.i0] += a.w1 * bt.w0 * gv;
          plane[a.i1 * w + bt.i1] += a.w1 * bt.w1 * gv;
        }
      }
    }
  });
  const double* xv = x.data();
  double* y = out.data();
  for (std::int64_t p = 0; p < bs * c; ++p) {
    const double* plane = xv + p * h * w;
    double* yp = y + p * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const Tap& a = (*ty)[static_cast<std::size_t>(oy)];
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const Tap& bt = (*tx)[static_cast<std::size_t>(ox)];
        yp[oy * out_w + ox] = a.w0 * (bt.w0 * plane[a.i0 * w + bt.i0] + bt.w1 * plane[a.i0 * w + bt.i1]) +
                              a.w1 * (bt.w0 * plane[a.i1 * w + bt.i0] + bt.w1 * plane[a.i1 * w + bt.i1]);
      }
    }
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  check(x.rank() == 4, "global_avg_pool: rank-4 input expected");
  const std::int64_t bs = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(hw);
  Tensor out = make_op({bs, c}, {x}, [x, bs, c, hw, inv](Node& self) {
    if (!x.requires_grad()) return;
    x.node()->ensure_grad();
    double* xg = x.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t p = 0; p < bs * c; ++p) {
      const double gv = g[p] * inv;
      double* plane = xg + p * hw;
      for (std::int64_t i = 0; i < hw; ++i) plane[i] += gv;
    }
  });
  const double* xv = x.data();
  double* y = out.data();
  for (std::int64_t p = 0; p < bs * c; ++p) {
    const double* plane = xv + p * hw;
    double s = 0.0;
    for (std::int64_t i = 0; i < hw; ++i) s += plane[i];
    y[p] = s * inv;
  }
  return out;
}

Tensor global_max_pool(const Tensor& x) {
  check(x.rank() == 4, "global_max_pool: rank-4 input expected");
  const std::int64_t bs = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(bs * c));
  Tensor out = make_op({bs, c}, {x}, [x, bs, c, hw, argmax](Node& self) {
    if (!x.requires_grad()) return;
    x.node()->ensure_grad();
    double* xg = x.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t p = 0; p < bs * c; ++p)
      xg[p * hw + (*argmax)[static_cast<std::size_t>(p)]] += g[p];
  });
  const double* xv = x.data();
  double* y = out.data();
  for (std::int64_t p = 0; p < bs * c; ++p) {
    const double* plane = xv + p * hw;
    double best = plane[0];
    std::int64_t bi = 0;
    for (std::int64_t i = 1; i < hw; ++i)
      if (plane[i] > best) {
        best = plane[i];
        bi = i;
      }
    y[p] = best;
    (*argmax)[static_cast<std::size_t>(p)] = bi;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

namespace {

// Shared normalization backward for groups of `len` contiguous-strided
// elements: dx = (1/sigma) * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat)).
struct NormStats {
  std::vector<double> inv_sigma;  // one per normalization group
  std::vector<double> xhat;       // same layout as x
};

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::int64_t f = x.dim(-1);
  check(gamma.numel() == f && beta.numel() == f, "layer_norm: affine size mismatch");
  const std::int64_t rows = x.numel() / f;
  auto st = std::make_shared<NormStats>();
  st->inv_sigma.resize(static_cast<std::size_t>(rows));
  st->xhat.resize(static_cast<std::size_t>(x.numel()));

  Tensor out = make_op(x.shape(), {x, gamma, beta}, [x, gamma, beta, rows, f, st](Node& self) {
    const double* g = self.grad.data();
    const double* gv = gamma.data();
    if (gamma.requires_grad()) gamma.node()->ensure_grad();
    if (beta.requires_grad()) beta.node()->ensure_grad();
    if (x.requires_grad()) x.node()->ensure_grad();
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* grow = g + r * f;
      const double* xh = st->xhat.data() + r * f;
      if (gamma.requires_grad() || beta.requires_grad()) {
        double* gg = gamma.requires_grad() ? gamma.node()->grad.data() : nullptr;
        double* bg = beta.requires_grad() ? beta.node()->grad.data() : nullptr;
        for (std::int64_t i = 0; i < f; ++i) {
          if (gg) gg[i] += grow[i] * xh[i];
          if (bg) bg[i] += grow[i];
        }
      }
      if (x.requires_grad()) {
        double m1 = 0, m2 = 0;
        for (std::int64_t i = 0; i < f; ++i) {
          const double dxh = grow[i] * gv[i];
          m1 += dxh;
          m2 += dxh * xh[i];
        }
        m1 /= static_cast<double>(f);
        m2 /= static_cast<double>(f);
        double* xg = x.node()->grad.data() + r * f;
        const double is = st->inv_sigma[static_cast<std::size_t>(r)];
        for (std::int64_t i = 0; i < f; ++i)
          xg[i] += is * (grow[i] * gv[i] - m1 - xh[i] * m2);
      }
    }
  });
  const double* xv = x.data();
  const double* gv = gamma.data();
  const double* bv = beta.data();
  double* y = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xrow = xv + r * f;
    double mean = 0;
    for (std::int64_t i = 0; i < f; ++i) mean += xrow[i];
    mean /= static_cast<double>(f);
    double var = 0;
    for (std::int64_t i = 0; i < f; ++i) {
      const double d = xrow[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(f);
    const double is = 1.0 / std::sqrt(var + eps);
    st->inv_sigma[static_cast<std::size_t>(r)] = is;
    double* xh = st->xhat.data() + r * f;
    double* yrow = y + r * f;
    for (std::int64_t i = 0; i < f; ++i) {
      xh[i] = (xrow[i] - mean) * is;
      yrow[i] = gv[i] * xh[i] + bv[i];
    }
  }
  return out;
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps) {
  check(x.rank() == 4, "group_norm: rank-4 input expected");
  const std::int64_t bs = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  check(c % groups == 0, "group_norm: groups must divide channels");
  check(gamma.numel() == c && beta.numel() == c, "group_norm: affine size mismatch");
  const std::int64_t cg = c / groups;
  const std::int64_t glen = cg * hw;
  auto st = std::make_shared<NormStats>();
  st->inv_sigma.resize(static_cast<std::size_t>(bs * groups));
  st->xhat.resize(static_cast<std::size_t>(x.numel()));

  Tensor out = make_op(x.shape(), {x, gamma, beta},
                       [x, gamma, beta, bs, c, hw, groups, cg, glen, st](Node& self) {
    const double* g = self.grad.data();
    const double* gv = gamma.data();
    if (gamma.requires_grad()) gamma.node()->ensure_grad();
    if (beta.requires_grad()) beta.node()->ensure_grad();
    if (x.requires_grad()) x.node()->ensure_grad();
    double* gg = gamma.requires_grad() ? gamma.node()->grad.data() : nullptr;
    double* bg = beta.requires_grad() ? beta.node()->grad.data() : nullptr;
    for (std::int64_t b = 0; b < bs; ++b) {
      if (gg || bg) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const double* grow = g + (b * c + ch) * hw;
          const double* xh = st->xhat.data() + (b * c + ch) * hw;
          double sg = 0, sb = 0;
          for (std::int64_t i = 0; i < hw; ++i) {
            sg += grow[i] * xh[i];
            sb += grow[i];
          }
          if (gg) gg[ch] += sg;
          if (bg) bg[ch] += sb;
        }
      }
      if (!x.requires_grad()) continue;
      for (int grp = 0; grp < groups; ++grp) {
        const std::int64_t base = (b * c + grp * cg) * hw;
        const double* xh = st->xhat.data() + base;
        double m1 = 0, m2 = 0;
        for (std::int64_t j = 0; j < glen; ++j) {
          const std::int64_t ch = grp * cg + j / hw;
          const double dxh = g[base + j] * gv[ch];
          m1 += dxh;
          m2 += dxh * xh[j];
        }
        m1 /= static_cast<double>(glen);
        m2 /= static_cast<double>(glen);
        const double is = st->inv_sigma[static_cast<std::size_t>(b * groups + grp)];
        double* xg = x.node()->grad.data() + base;
        for (std::int64_t j = 0; j < glen; ++j) {
          const std::int64_t ch = grp * cg + j / hw;
          xg[j] += is * (g[base + j] * gv[ch] - m1 - xh[j] * m2);
        }
      }
    }
  });
  const double* xv = x.data();
  const double* gv = gamma.data();
  const double* bv = beta.data();
  double* y = out.data();
  for (std::int64_t b = 0; b < bs; ++b)
    for (int grp = 0; grp < groups; ++grp) {
      const std::int64_t base = (b * c + grp * cg) * hw;
      double mean = 0;
      for (std::int64_t j = 0; j < glen; ++j) mean += xv[base + j];
      mean /= static_cast<double>(glen);
      double var = 0;
      for (std::int64_t j = 0; j < glen; ++j) {
        const double dd = xv[base + j] - mean;
        var += dd * dd;
      }
      var /= static_cast<double>(glen);
      const double is = 1.0 / std::sqrt(var + eps);
      st->inv_sigma[static_cast<std::size_t>(b * groups + grp)] = is;
      for (std::int64_t j = 0; j < glen; ++j) {
        const std::int64_t ch = grp * cg + j / hw;
        const double xh = (xv[base + j] - mean) * is;
        st->xhat[static_cast<std::size_t>(base + j)] = xh;
        y[base + j] = gv[ch] * xh + bv[ch];
      }
    }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps) {
  check(x.rank() == 2 || x.rank() == 4, "batch_norm: rank-2 or rank-4 input expected");
  const std::int64_t c = x.dim(1);
  const std::int64_t bs = x.dim(0);
  const std::int64_t hw = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  const std::int64_t n = bs * hw;  // elements per channel
  check(gamma.numel() == c && running_mean.numel() == c, "batch_norm: size mismatch");

  // channel value at flattened position
  auto ch_of = [c, hw](std::int64_t i) { return (i / hw) % c; };

  std::vector<double> mean(static_cast<std::size_t>(c)), var(static_cast<std::size_t>(c));
  if (training) {
    std::fill(mean.begin(), mean.end(), 0.0);
    const double* xv = x.data();
    for (std::int64_t i = 0; i < x.numel(); ++i) mean[static_cast<std::size_t>(ch_of(i))] += xv[i];
    for (auto& m : mean) m /= static_cast<double>(n);
    std::fill(var.begin(), var.end(), 0.0);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      const double d = xv[i] - mean[static_cast<std::size_t>(ch_of(i))];
      var[static_cast<std::size_t>(ch_of(i))] += d * d;
    }
    for (auto& v : var) v /= static_cast<double>(n);
    for (std::int64_t ci = 0; ci < c; ++ci) {
      running_mean.data()[ci] = (1.0 - momentum) * running_mean.data()[ci] + momentum * mean[static_cast<std::size_t>(ci)];
      running_var.data()[ci] = (1.0 - momentum) * running_var.data()[ci] + momentum * var[static_cast<std::size_t>(ci)];
    }
  } else {
    std::copy(running_mean.data(), running_mean.data() + c, mean.begin());
    std::copy(running_var.data(), running_var.data() + c, var.begin());
  }

  auto st = std::make_shared<NormStats>();
  st->inv_sigma.resize(static_cast<std::size_t>(c));
  for (std::int64_t ci = 0; ci < c; ++ci)
    st->inv_sigma[static_cast<std::size_t>(ci)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(ci)] + eps);
  st->xhat.resize(static_cast<std::size_t>(x.numel()));

  Tensor out = make_op(x.shape(), {x, gamma, beta},
                       [x, gamma, beta, c, hw, n, st, training, ch_of](Node& self) {
    const double* g = self.grad.data();
    const double* gv = gamma.data();
    if (gamma.requires_grad()) gamma.node()->ensure_grad();
    if (beta.requires_grad()) beta.node()->ensure_grad();
    if (x.requires_grad()) x.node()->ensure_grad();
    double* gg = gamma.requires_grad() ? gamma.node()->grad.data() : nullptr;
    double* bg = beta.requires_grad() ? beta.node()->grad.data() : nullptr;
    if (gg || bg) {
      for (std::int64_t i = 0; i < self.numel(); ++i) {
        const std::int64_t ch = ch_of(i);
        if (gg) gg[ch] += g[i] * st->xhat[static_cast<std::size_t>(i)];
        if (bg) bg[ch] += g[i];
      }
    }
    if (!x.requires_grad()) return;
    double* xg = x.node()->grad.data();
    if (!training) {
      for (std::int64_t i = 0; i < self.numel(); ++i) {
        const std::int64_t ch = ch_of(i);
        xg[i] += g[i] * gv[ch] * st->inv_sigma[static_cast<std::size_t>(ch)];
      }
      return;
    }
    std::vector<double> m1(static_cast<std::size_t>(c), 0.0), m2(static_cast<std::size_t>(c), 0.0);
    for (std::int64_t i = 0; i < self.numel(); ++i) {
      const std::int64_t ch = ch_of(i);
      const double dxh = g[i] * gv[ch];
      m1[static_cast<std::size_t>(ch)] += dxh;
      m2[static_cast<std::size_t>(ch)] += dxh * st->xhat[static_cast<std::size_t>(i)];
    }
    for (std::int64_t ci = 0; ci < c; ++ci) {
      m1[static_cast<std::size_t>(ci)] /= static_cast<double>(n);
      m2[static_cast<std::size_t>(ci)] /= static_cast<double>(n);
    }
    for (std::int64_t i = 0; i < self.numel(); ++i) {
      const std::int64_t ch = ch_of(i);
      xg[i] += st->inv_sigma[static_cast<std::size_t>(ch)] *
               (g[i] * gv[ch] - m1[static_cast<std::size_t>(ch)] -
                st->xhat[static_cast<std::size_t>(i)] * m2[static_cast<std::size_t>(ch)]);
    }
  });
  const double* xv = x.data();
  const double* gv = gamma.data();
  const double* bv = beta.data();
  double* y = out.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const std::int64_t ch = ch_of(i);
    const double xh = (xv[i] - mean[static_cast<std::size_t>(ch)]) * st->inv_sigma[static_cast<std::size_t>(ch)];
    st->xhat[static_cast<std::size_t>(i)] = xh;
    y[i] = gv[ch] * xh + bv[ch];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dropout / gradient routing
// ---------------------------------------------------------------------------

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  check(p < 1.0, "dropout: p must be < 1");
  const double scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(static_cast<std::size_t>(x.numel()));
  for (auto& m : *mask) m = rng.uniform() < p ? 0.0 : scale;
  Tensor out = make_op(x.shape(), {x}, [x, mask](Node& self) {
    if (!x.requires_grad()) return;
    x.node()->ensure_grad();
    double* xg = x.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < self.numel(); ++i) xg[i] += g[i] * (*mask)[static_cast<std::size_t>(i)];
  });
  const double* xv = x.data();
  double* y = out.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = xv[i] * (*mask)[static_cast<std::size_t>(i)];
  return out;
}

Tensor grl(const Tensor& x, double alpha) {
  Tensor out = make_op(x.shape(), {x}, [x, alpha](Node& self) {
    if (!x.requires_grad()) return;
    x.node()->ensure_grad();
    double* xg = x.node()->grad.data();
    const double* g = self.grad.data();
    for (std::int64_t i = 0; i < self.numel(); ++i) xg[i] += -alpha * g[i];
  });
  std::memcpy(out.data(), x.data(), static_cast<std::size_t>(x.numel()) * sizeof(double));
  return out;
}

Tensor stop_gradient(const Tensor& x) { return x.detach(); }

// ---------------------------------------------------------------------------
// Softmax / losses
// ---------------------------------------------------------------------------

Tensor softmax_lastdim(const Tensor& x) {
  const std::int64_t f = x.dim(-1);
  const std::int64_t rows = x.numel() / f;
  Tensor out = make_op(x.shape(), {x}, [x, rows, f](Node& self) {
    if (!x.requires_grad()) return;
    x.node()->ensure_grad();
    double* xg = x.node()->grad.data();
    const double* g = self.grad.data();
    const double* y = self.value.data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* yr = y + r * f;
      const double* gr = g + r * f;
      double dot = 0;
      for (std::int64_t i = 0; i < f; ++i) dot += gr[i] * yr[i];
      double* xr = xg + r * f;
      for (std::int64_t i = 0; i < f; ++i) xr[i] += yr[i] * (gr[i] - dot);
    }
  });
  const double* xv = x.data();
  double* y = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * f;
    double* yr = y + r * f;
    double mx = xr[0];
    for (std::int64_t i = 1; i < f; ++i) mx = std::max(mx, xr[i]);
    double s = 0;
    for (std::int64_t i = 0; i < f; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      s += yr[i];
    }
    const double inv = 1.0 / s;
    for (std::int64_t i = 0; i < f; ++i) yr[i] *= inv;
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  check(logits.rank() == 2, "cross_entropy: (M,K) logits expected");
  const std::int64_t m = logits.dim(0), k = logits.dim(1);
  check(static_cast<std::int64_t>(labels.size()) == m, "cross_entropy: label count mismatch");
  for (auto l : labels) check(l >= 0 && l < k, "cross_entropy: label out of range");
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m * k));
  auto lab = std::make_shared<std::vector<std::int64_t>>(labels);
  Tensor out = make_op({1}, {logits}, [logits, m, k, probs, lab](Node& self) {
    if (!logits.requires_grad()) return;
    logits.node()->ensure_grad();
    double* lg = logits.node()->grad.data();
    const double g = self.grad[0] / static_cast<double>(m);
    for (std::int64_t r = 0; r < m; ++r) {
      const double* pr = probs->data() + r * k;
      double* gr = lg + r * k;
      const std::int64_t y = (*lab)[static_cast<std::size_t>(r)];
      for (std::int64_t i = 0; i < k; ++i) gr[i] += g * (pr[i] - (i == y ? 1.0 : 0.0));
    }
  });
  const double* xv = logits.data();
  double loss = 0;
  for (std::int64_t r = 0; r < m; ++r) {
    const double* xr = xv + r * k;
    double mx = xr[0];
    for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, xr[i]);
    double s = 0;
    double* pr = probs->data() + r * k;
    for (std::int64_t i = 0; i < k; ++i) {
      pr[i] = std::exp(xr[i] - mx);
      s += pr[i];
    }
    const double inv = 1.0 / s;
    for (std::int64_t i = 0; i < k; ++i) pr[i] *= inv;
    loss -= std::log(std::max(pr[labels[static_cast<std::size_t>(r)]], 1e-300));
  }
  out.data()[0] = loss / static_cast<double>(m);
  return out;
}

namespace {
Tensor pointwise_loss(const Tensor& pred, const Tensor& target, double (*f)(double, double),
                      double (*df)(double, double)) {
  check(pred.shape() == target.shape(), "loss: shape mismatch");
  const std::int64_t n = pred.numel();
  const double inv = 1.0 / static_cast<double>(n);
  Tensor out = make_op({1}, {pred, target}, [pred, target, n, inv, df](Node& self) {
    const double g = self.grad[0] * inv;
    const double* pv = pred.data();
    const double* tv = target.data();
    if (pred.requires_grad()) {
      pred.node()->ensure_grad();
      double* pg = pred.node()->grad.data();
      for (std::int64_t i = 0; i < n; ++i) pg[i] += g * df(pv[i], tv[i]);
    }
    if (target.requires_grad()) {
      target.node()->ensure_grad();
      double* tg = target.node()->grad.data();
      for (std::int64_t i = 0; i < n; ++i) tg[i] -= g * df(pv[i], tv[i]);
    }
  });
  const double* pv = pred.data();
  const double* tv = target.data();
  double s = 0;
  for (std::int64_t i = 0; i < n; ++i) s += f(pv[i], tv[i]);
  out.data()[0] = s * inv;
  return out;
}
}  // namespace

Tensor huber_loss(const Tensor& pred, const Tensor& target, double delta) {
  check(pred.shape() == target.shape(), "huber_loss: shape mismatch");
  const std::int64_t n = pred.numel();
  const double inv = 1.0 / static_cast<double>(n);
  Tensor out = make_op({1}, {pred, target}, [pred, target, n, inv, delta](Node& self) {
    const double g = self.grad[0] * inv;
    const double* pv = pred.data();
    const double* tv = target.data();
    auto dfn = [delta](double r) { return std::clamp(r, -delta, delta); };
    if (pred.requires_grad()) {
      pred.node()->ensure_grad();
      double* pg = pred.node()->grad.data();
      for (std::int64_t i = 0; i < n; ++i) pg[i] += g * dfn(pv[i] - tv[i]);
    }
    if (target.requires_grad()) {
      target.node()->ensure_grad();
      double* tg = target.node()->grad.data();
      for (std::int64_t i = 0; i < n; ++i) tg[i] -= g * dfn(pv[i] - tv[i]);
    }
  });
  const double* pv = pred.data();
  const double* tv = target.data();
  double s = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double r = std::abs(pv[i] - tv[i]);
    s += r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
  }
  out.data()[0] = s * inv;
  return out;
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  return pointwise_loss(
      pred, target, [](double p, double t) { return std::abs(p - t); },
      [](double p, double t) {
        const double r = p - t;
        return r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
      });
}

Tensor weighted_sum(const std::vector<Tensor>& parts, const std::vector<double>& weights) {
  check(parts.size() == weights.size(), "weighted_sum: size mismatch");
  for (const auto& p : parts) check(p.numel() == 1, "weighted_sum: scalar parts expected");
  auto w = std::make_shared<std::vector<double>>(weights);
  Tensor out = make_op({1}, parts, [parts, w](Node& self) {
    const double g = self.grad[0];
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!parts[i].requires_grad()) continue;
      parts[i].node()->ensure_grad();
      parts[i].node()->grad[0] += g * (*w)[i];
    }
  });
  double s = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) s += weights[i] * parts[i].item();
  out.data()[0] = s;
  return out;
}

}  // namespace fryshort::nn
