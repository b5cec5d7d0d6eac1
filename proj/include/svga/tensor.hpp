#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "svga/error.hpp"

namespace svga {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily by the backward sweep
  bool requires_grad = false;
  bool is_leaf = true;
  bool backward_done = false;  // set on a root once swept
  std::string name;            // parameters and buffers only
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major 64-bit float array participating in a define-by-run
// reverse-mode tape. Copies are shallow (shared node); each forward pass
// builds a fresh graph over the persistent leaf parameters.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int ndim() const;
  int dim(int i) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Leaf-only mutation hook for initializers and the optimizer.
  std::span<double> mutable_values();
  double value_at(std::size_t flat) const;
  double scalar_value() const;

  bool requires_grad() const;
  void set_requires_grad(bool rg);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  const std::string& name() const;
  void set_name(std::string n);

  detail::TensorNode* node() const { return node_.get(); }
  std::shared_ptr<detail::TensorNode> node_ptr() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::TensorNode> n);

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode sweep from a scalar root. Accumulates dRoot/dNode into the
// grad buffer of every reachable node with requires_grad. Each root may be
// swept once; rebuilding the forward graph resets that.
void backward(const Tensor& loss);

// While a guard is alive, newly built ops do not extend the tape. Forward
// values are unchanged.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

}  // namespace svga
