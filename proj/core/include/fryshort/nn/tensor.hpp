#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fryshort/util/rng.hpp"

namespace fryshort::nn {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;

/// One node of the reverse-mode tape. Holds the forward value and, during
/// backward, the accumulated gradient. The backward closure reads this
/// node's gradient and pushes contributions into its parents.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<Tensor> parents;
  std::function<void(Node&)> backward;
  std::string name;  // set for parameters

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

/// Whether newly created ops record the tape. Thread-local.
bool grad_enabled();

/// RAII guard that disables tape recording (inference / data paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

/// Value-semantics handle to a shared tape node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  Node* node() const { return node_.get(); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return node_->numel(); }
  /// dim(i) with python-style negative indexing.
  std::int64_t dim(int i) const;

  double* data() { return node_->value.data(); }
  const double* data() const { return node_->value.data(); }
  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  /// Scalar extraction; requires numel() == 1.
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& grad_mutable() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }
  double grad_norm() const;

  /// Copy of the value with no tape history.
  Tensor detach() const;

  /// Runs reverse-mode accumulation from this (scalar) tensor.
  void backward() const;

 private:
  std::shared_ptr<Node> node_;
};

/// Creates a result node wired to parents; the closure is only stored when
/// the tape is active and some parent requires grad.
Tensor make_op(Shape shape, std::vector<Tensor> parents, std::function<void(Node&)> backward_fn);

}  // namespace fryshort::nn
