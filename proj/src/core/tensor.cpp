#include "svga/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace svga {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->value.assign(n, 0.0);
  node->requires_grad = requires_grad && g_grad_enabled;
  return wrap(std::move(node));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node()->value.begin(), t.node()->value.end(), v);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad && g_grad_enabled;
  return wrap(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorNode> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::ndim() const { return static_cast<int>(node_->shape.size()); }
int Tensor::dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::values() const { return node_->value; }

std::span<double> Tensor::mutable_values() {
  if (!node_->is_leaf)
    throw StateError("mutable_values: only leaf tensors may be edited in place");
  return node_->value;
}

double Tensor::value_at(std::size_t flat) const { return node_->value.at(flat); }

double Tensor::scalar_value() const {
  if (numel() != 1)
    throw ShapeError("scalar_value: tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool rg) {
  if (!node_->is_leaf) throw StateError("set_requires_grad: not a leaf tensor");
  node_->requires_grad = rg;
}

bool Tensor::has_grad() const {
  return node_->grad.size() == node_->value.size() && !node_->value.empty();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad())
    throw StateError("grad: no gradient present on tensor" +
                     (node_->name.empty() ? std::string() : " '" + node_->name + "'"));
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

const std::string& Tensor::name() const { return node_->name; }
void Tensor::set_name(std::string n) { node_->name = std::move(n); }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw InvalidArgumentError("backward: undefined tensor");
  detail::TensorNode* root = loss.node();
  if (loss.numel() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(root->shape));
  if (!root->requires_grad)
    throw StateError("backward: loss is detached from every parameter");
  if (root->backward_done)
    throw StateError("backward: already called on this graph; rebuild the forward pass first");

  // Iterative post-order DFS over requires_grad ancestry.
  std::vector<detail::TensorNode*> topo;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  for (detail::TensorNode* n : topo) n->ensure_grad();
  root->grad[0] += 1.0;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  root->backward_done = true;
}

}  // namespace svga
