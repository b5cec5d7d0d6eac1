#include "svga/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>

namespace svga {
namespace {

using detail::TensorNode;

Tensor make_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& parents,
               std::function<void(TensorNode&)> backward_fn, const char* name) {
  if (shape_numel(shape) != value.size())
    throw ShapeError(std::string(name) + ": value length does not match shape");
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->name = name;
  bool track = false;
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p.node()->requires_grad) track = true;
  }
  if (track) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(node));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
}

void check_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2)
    throw ShapeError(std::string(op) + ": expected 2-d tensor, got " + shape_str(t.shape()));
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn_acc(double* C, const double* A, const double* B, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<std::size_t>(i) * k;
    double* c = C + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = a[l];
      if (av == 0.0) continue;
      const double* b = B + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt_acc(double* C, const double* A, const double* B, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<std::size_t>(i) * k;
    double* c = C + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* b = B + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += a[l] * b[l];
      c[j] += acc;
    }
  }
}

// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn_acc(double* C, const double* A, const double* B, int m, int k, int n) {
  for (int l = 0; l < k; ++l) {
    const double* a = A + static_cast<std::size_t>(l) * m;
    const double* b = B + static_cast<std::size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      const double av = a[i];
      if (av == 0.0) continue;
      double* c = C + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> v(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  return make_op(
      a.shape(), std::move(v), {a, b},
      [](TensorNode& n) {
        for (int p = 0; p < 2; ++p) {
          auto& par = *n.parents[p];
          if (!par.requires_grad) continue;
          for (std::size_t i = 0; i < n.grad.size(); ++i) par.grad[i] += n.grad[i];
        }
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> v(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  return make_op(
      a.shape(), std::move(v), {a, b},
      [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          if (pa.requires_grad) pa.grad[i] += n.grad[i];
          if (pb.requires_grad) pb.grad[i] -= n.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> v(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  return make_op(
      a.shape(), std::move(v), {a, b},
      [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          if (pa.requires_grad) pa.grad[i] += n.grad[i] * pb.value[i];
          if (pb.requires_grad) pb.grad[i] += n.grad[i] * pa.value[i];
        }
      },
      "mul");
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> v(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * c;
  return make_op(
      a.shape(), std::move(v), {a},
      [c](TensorNode& n) {
        auto& pa = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += c * n.grad[i];
      },
      "scale");
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  check_2d(x, "add_bias");
  if (bias.ndim() != 1 || bias.dim(0) != x.dim(1))
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match columns of " +
                     shape_str(x.shape()));
  const int m = x.dim(0), d = x.dim(1);
  std::vector<double> v(x.numel());
  auto xv = x.values(), bv = bias.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) v[static_cast<std::size_t>(i) * d + j] = xv[static_cast<std::size_t>(i) * d + j] + bv[j];
  return make_op(
      x.shape(), std::move(v), {x, bias},
      [m, d](TensorNode& n) {
        auto& px = *n.parents[0];
        auto& pb = *n.parents[1];
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < d; ++j) {
            const double g = n.grad[static_cast<std::size_t>(i) * d + j];
            if (px.requires_grad) px.grad[static_cast<std::size_t>(i) * d + j] += g;
            if (pb.requires_grad) pb.grad[j] += g;
          }
      },
      "add_bias");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner extents of " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> v(static_cast<std::size_t>(m) * n, 0.0);
  gemm_nn_acc(v.data(), a.values().data(), b.values().data(), m, k, n);
  return make_op(
      {m, n}, std::move(v), {a, b},
      [m, k, n](TensorNode& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        if (pa.requires_grad) gemm_nt_acc(pa.grad.data(), nd.grad.data(), pb.value.data(), m, n, k);
        if (pb.requires_grad) gemm_tn_acc(pb.grad.data(), pa.value.data(), nd.grad.data(), k, m, n);
      },
      "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul_nt");
  check_2d(b, "matmul_nt");
  if (a.dim(1) != b.dim(1))
    throw ShapeError("matmul_nt: column extents of " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> v(static_cast<std::size_t>(m) * n, 0.0);
  gemm_nt_acc(v.data(), a.values().data(), b.values().data(), m, k, n);
  return make_op(
      {m, n}, std::move(v), {a, b},
      [m, k, n](TensorNode& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        if (pa.requires_grad) gemm_nn_acc(pa.grad.data(), nd.grad.data(), pb.value.data(), m, n, k);
        if (pb.requires_grad) gemm_tn_acc(pb.grad.data(), nd.grad.data(), pa.value.data(), n, m, k);
      },
      "matmul_nt");
}

Tensor relu(const Tensor& x) {
  std::vector<double> v(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_op(
      x.shape(), std::move(v), {x},
      [](TensorNode& n) {
        auto& px = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          if (px.value[i] > 0.0) px.grad[i] += n.grad[i];
      },
      "relu");
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> v(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = stable_sigmoid(xv[i]);
  return make_op(
      x.shape(), std::move(v), {x},
      [](TensorNode& n) {
        auto& px = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          const double s = n.value[i];
          px.grad[i] += n.grad[i] * s * (1.0 - s);
        }
      },
      "sigmoid");
}

namespace {

// Rows of length `len` starting at `base` with unit stride; applied in place.
void softmax_span(std::vector<double>& v, std::size_t base, std::size_t len, std::size_t stride) {
  double mx = v[base];
  for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, v[base + i * stride]);
  double sum = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const double e = std::exp(v[base + i * stride] - mx);
    v[base + i * stride] = e;
    sum += e;
  }
  for (std::size_t i = 0; i < len; ++i) v[base + i * stride] /= sum;
}

void softmax_span_backward(const std::vector<double>& y, const std::vector<double>& gy,
                           std::vector<double>& gx, std::size_t base, std::size_t len,
                           std::size_t stride) {
  double dot = 0.0;
  for (std::size_t i = 0; i < len; ++i) dot += y[base + i * stride] * gy[base + i * stride];
  for (std::size_t i = 0; i < len; ++i)
    gx[base + i * stride] += y[base + i * stride] * (gy[base + i * stride] - dot);
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  if (x.ndim() < 1 || x.ndim() > 2)
    throw ShapeError("softmax: expected 1-d or 2-d tensor, got " + shape_str(x.shape()));
  if (axis < 0 || axis >= x.ndim())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape()));
  if (x.dim(axis) == 0) throw ShapeError("softmax: axis " + std::to_string(axis) + " is empty");
  std::vector<double> v(x.values().begin(), x.values().end());
  std::size_t n_spans, len, span_stride, elem_stride;
  if (x.ndim() == 1) {
    n_spans = 1;
    len = static_cast<std::size_t>(x.dim(0));
    span_stride = 0;
    elem_stride = 1;
  } else if (axis == 1) {
    n_spans = static_cast<std::size_t>(x.dim(0));
    len = static_cast<std::size_t>(x.dim(1));
    span_stride = len;
    elem_stride = 1;
  } else {
    n_spans = static_cast<std::size_t>(x.dim(1));
    len = static_cast<std::size_t>(x.dim(0));
    span_stride = 1;
    elem_stride = n_spans;
  }
  for (std::size_t s = 0; s < n_spans; ++s) softmax_span(v, s * span_stride, len, elem_stride);
  return make_op(
      x.shape(), std::move(v), {x},
      [n_spans, len, span_stride, elem_stride](TensorNode& n) {
        auto& px = *n.parents[0];
        for (std::size_t s = 0; s < n_spans; ++s)
          softmax_span_backward(n.value, n.grad, px.grad, s * span_stride, len, elem_stride);
      },
      "softmax");
}

Tensor masked_row_softmax(const Tensor& scores) {
  check_2d(scores, "masked_row_softmax");
  if (scores.dim(0) != scores.dim(1))
    throw ShapeError("masked_row_softmax: expected square matrix, got " + shape_str(scores.shape()));
  const int t = scores.dim(0);
  std::vector<double> v(static_cast<std::size_t>(t) * t, 0.0);
  auto sv = scores.values();
  for (int j = 0; j < t && t > 1; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * t;
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < t; ++k)
      if (k != j) mx = std::max(mx, sv[row + k]);
    double sum = 0.0;
    for (int k = 0; k < t; ++k) {
      if (k == j) continue;
      const double e = std::exp(sv[row + k] - mx);
      v[row + k] = e;
      sum += e;
    }
    for (int k = 0; k < t; ++k)
      if (k != j) v[row + k] /= sum;
  }
  return make_op(
      scores.shape(), std::move(v), {scores},
      [t](TensorNode& n) {
        auto& px = *n.parents[0];
        for (int j = 0; j < t && t > 1; ++j) {
          const std::size_t row = static_cast<std::size_t>(j) * t;
          double dot = 0.0;
          for (int k = 0; k < t; ++k)
            if (k != j) dot += n.value[row + k] * n.grad[row + k];
          for (int k = 0; k < t; ++k)
            if (k != j) px.grad[row + k] += n.value[row + k] * (n.grad[row + k] - dot);
        }
      },
      "masked_row_softmax");
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_op(
      {1}, {s}, {x},
      [](TensorNode& n) {
        auto& px = *n.parents[0];
        for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += n.grad[0];
      },
      "sum_all");
}

Tensor mean_all(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean_all: empty tensor");
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return make_op(
      {1}, {s * inv}, {x},
      [inv](TensorNode& n) {
        auto& px = *n.parents[0];
        for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += n.grad[0] * inv;
      },
      "mean_all");
}

Tensor col_max(const Tensor& x) {
  check_2d(x, "col_max");
  const int t = x.dim(0), d = x.dim(1);
  if (t == 0) throw ShapeError("col_max: no rows");
  std::vector<double> v(static_cast<std::size_t>(d));
  std::vector<int> arg(static_cast<std::size_t>(d), 0);
  auto xv = x.values();
  for (int j = 0; j < d; ++j) {
    double best = xv[j];
    int bi = 0;
    for (int i = 1; i < t; ++i) {
      const double c = xv[static_cast<std::size_t>(i) * d + j];
      if (c > best) {
        best = c;
        bi = i;
      }
    }
    v[static_cast<std::size_t>(j)] = best;
    arg[static_cast<std::size_t>(j)] = bi;
  }
  return make_op(
      {d}, std::move(v), {x},
      [d, arg = std::move(arg)](TensorNode& n) {
        auto& px = *n.parents[0];
        for (int j = 0; j < d; ++j)
          px.grad[static_cast<std::size_t>(arg[static_cast<std::size_t>(j)]) * d + j] += n.grad[static_cast<std::size_t>(j)];
      },
      "col_max");
}

Tensor col_mean(const Tensor& x) {
  check_2d(x, "col_mean");
  const int t = x.dim(0), d = x.dim(1);
  if (t == 0) throw ShapeError("col_mean: no rows");
  std::vector<double> v(static_cast<std::size_t>(d), 0.0);
  auto xv = x.values();
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] += xv[static_cast<std::size_t>(i) * d + j];
  const double inv = 1.0 / static_cast<double>(t);
  for (double& e : v) e *= inv;
  return make_op(
      {d}, std::move(v), {x},
      [t, d, inv](TensorNode& n) {
        auto& px = *n.parents[0];
        for (int i = 0; i < t; ++i)
          for (int j = 0; j < d; ++j)
            px.grad[static_cast<std::size_t>(i) * d + j] += n.grad[static_cast<std::size_t>(j)] * inv;
      },
      "col_mean");
}

Tensor mul_by_scalar_tensor(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1)
    throw ShapeError("mul_by_scalar_tensor: scale has shape " + shape_str(s.shape()));
  const double sv = s.value_at(0);
  std::vector<double> v(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[i] * sv;
  return make_op(
      x.shape(), std::move(v), {x, s},
      [](TensorNode& n) {
        auto& px = *n.parents[0];
        auto& ps = *n.parents[1];
        const double sval = ps.value[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          if (px.requires_grad) px.grad[i] += n.grad[i] * sval;
          if (ps.requires_grad) ps.grad[0] += n.grad[i] * px.value[i];
        }
      },
      "mul_by_scalar_tensor");
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  for (const auto& x : xs)
    if (x.ndim() != 3)
      throw ShapeError("concat_channels: expected 3-d tensors, got " + shape_str(x.shape()));
  const int h = xs[0].dim(1), w = xs[0].dim(2);
  int c_total = 0;
  for (const auto& x : xs) {
    if (x.dim(1) != h || x.dim(2) != w)
      throw ShapeError("concat_channels: spatial extents differ: " + shape_str(xs[0].shape()) +
                       " vs " + shape_str(x.shape()));
    c_total += x.dim(0);
  }
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(c_total) * h * w);
  for (const auto& x : xs) v.insert(v.end(), x.values().begin(), x.values().end());
  return make_op(
      {c_total, h, w}, std::move(v), xs,
      [](TensorNode& n) {
        std::size_t off = 0;
        for (auto& pp : n.parents) {
          auto& p = *pp;
          if (p.requires_grad)
            for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += n.grad[off + i];
          off += p.value.size();
        }
      },
      "concat_channels");
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  const std::size_t d = rows[0].numel();
  for (const auto& r : rows)
    if (r.numel() != d)
      throw ShapeError("stack_rows: element counts differ: " + std::to_string(d) + " vs " +
                       std::to_string(r.numel()));
  std::vector<double> v;
  v.reserve(rows.size() * d);
  for (const auto& r : rows) v.insert(v.end(), r.values().begin(), r.values().end());
  return make_op(
      {static_cast<int>(rows.size()), static_cast<int>(d)}, std::move(v), rows,
      [d](TensorNode& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
          auto& p = *n.parents[i];
          if (!p.requires_grad) continue;
          for (std::size_t j = 0; j < d; ++j) p.grad[j] += n.grad[i * d + j];
        }
      },
      "stack_rows");
}

Tensor select_rows(const Tensor& x, const std::vector<int>& idx) {
  check_2d(x, "select_rows");
  const int t = x.dim(0), d = x.dim(1);
  for (int i : idx)
    if (i < 0 || i >= t)
      throw InvalidArgumentError("select_rows: index " + std::to_string(i) + " outside [0, " +
                                 std::to_string(t) + ")");
  std::vector<double> v(idx.size() * static_cast<std::size_t>(d));
  auto xv = x.values();
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(xv.begin() + static_cast<std::size_t>(idx[r]) * d, d, v.begin() + r * d);
  return make_op(
      {static_cast<int>(idx.size()), d}, std::move(v), {x},
      [d, idx](TensorNode& n) {
        auto& px = *n.parents[0];
        for (std::size_t r = 0; r < idx.size(); ++r)
          for (int j = 0; j < d; ++j)
            px.grad[static_cast<std::size_t>(idx[r]) * d + j] += n.grad[r * d + j];
      },
      "select_rows");
}

Tensor select_flat(const Tensor& x, const std::vector<std::size_t>& idx) {
  for (std::size_t i : idx)
    if (i >= x.numel())
      throw InvalidArgumentError("select_flat: index " + std::to_string(i) + " outside [0, " +
                                 std::to_string(x.numel()) + ")");
  std::vector<double> v(idx.size());
  auto xv = x.values();
  for (std::size_t r = 0; r < idx.size(); ++r) v[r] = xv[idx[r]];
  return make_op(
      {static_cast<int>(idx.size())}, std::move(v), {x},
      [idx](TensorNode& n) {
        auto& px = *n.parents[0];
        for (std::size_t r = 0; r < idx.size(); ++r) px.grad[idx[r]] += n.grad[r];
      },
      "select_flat");
}

namespace {

struct ConvDims {
  int cin, h, w, cout, k, stride, pad, ho, wo;
};

void im2col(const double* x, const ConvDims& d, double* cols) {
  const int patch = d.cin * d.k * d.k;
  const int span = d.ho * d.wo;
  for (int c = 0; c < d.cin; ++c)
    for (int ky = 0; ky < d.k; ++ky)
      for (int kx = 0; kx < d.k; ++kx) {
        const int row = (c * d.k + ky) * d.k + kx;
        double* out = cols + static_cast<std::size_t>(row) * span;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            const bool in = iy >= 0 && iy < d.h && ix >= 0 && ix < d.w;
            out[oy * d.wo + ox] = in ? x[(static_cast<std::size_t>(c) * d.h + iy) * d.w + ix] : 0.0;
          }
        }
      }
  (void)patch;
}

void col2im_acc(const double* cols, const ConvDims& d, double* gx) {
  const int span = d.ho * d.wo;
  for (int c = 0; c < d.cin; ++c)
    for (int ky = 0; ky < d.k; ++ky)
      for (int kx = 0; kx < d.k; ++kx) {
        const int row = (c * d.k + ky) * d.k + kx;
        const double* in = cols + static_cast<std::size_t>(row) * span;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) continue;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix < 0 || ix >= d.w) continue;
            gx[(static_cast<std::size_t>(c) * d.h + iy) * d.w + ix] += in[oy * d.wo + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  if (x.ndim() != 3) throw ShapeError("conv2d: input must be [C x H x W], got " + shape_str(x.shape()));
  if (w.ndim() != 4 || w.dim(2) != w.dim(3))
    throw ShapeError("conv2d: weight must be [Co x Ci x k x k], got " + shape_str(w.shape()));
  if (w.dim(1) != x.dim(0))
    throw ShapeError("conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, got " +
                     std::to_string(x.dim(0)));
  if (b.ndim() != 1 || b.dim(0) != w.dim(0))
    throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " does not match " +
                     std::to_string(w.dim(0)) + " output channels");
  if (stride < 1 || pad < 0) throw InvalidArgumentError("conv2d: stride must be >= 1 and pad >= 0");
  ConvDims d;
  d.cin = x.dim(0);
  d.h = x.dim(1);
  d.w = x.dim(2);
  d.cout = w.dim(0);
  d.k = w.dim(2);
  d.stride = stride;
  d.pad = pad;
  d.ho = (d.h + 2 * pad - d.k) / stride + 1;
  d.wo = (d.w + 2 * pad - d.k) / stride + 1;
  if (d.h + 2 * pad - d.k < 0 || d.w + 2 * pad - d.k < 0 || d.ho <= 0 || d.wo <= 0)
    throw ShapeError("conv2d: output extent is not positive for input " + shape_str(x.shape()) +
                     " kernel " + std::to_string(d.k) + " stride " + std::to_string(stride) +
                     " pad " + std::to_string(pad));
  const int patch = d.cin * d.k * d.k;
  const int span = d.ho * d.wo;
  std::vector<double> cols(static_cast<std::size_t>(patch) * span);
  im2col(x.values().data(), d, cols.data());
  std::vector<double> v(static_cast<std::size_t>(d.cout) * span, 0.0);
  gemm_nn_acc(v.data(), w.values().data(), cols.data(), d.cout, patch, span);
  auto bv = b.values();
  for (int co = 0; co < d.cout; ++co)
    for (int s = 0; s < span; ++s) v[static_cast<std::size_t>(co) * span + s] += bv[co];
  return make_op(
      {d.cout, d.ho, d.wo}, std::move(v), {x, w, b},
      // The patch matrix is rebuilt here rather than kept alive with the node.
      [d, patch, span](TensorNode& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        auto& pb = *n.parents[2];
        if (pb.requires_grad)
          for (int co = 0; co < d.cout; ++co) {
            double acc = 0.0;
            for (int s = 0; s < span; ++s) acc += n.grad[static_cast<std::size_t>(co) * span + s];
            pb.grad[co] += acc;
          }
        if (pw.requires_grad) {
          std::vector<double> cols(static_cast<std::size_t>(patch) * span);
          im2col(px.value.data(), d, cols.data());
          gemm_nt_acc(pw.grad.data(), n.grad.data(), cols.data(), d.cout, span, patch);
        }
        if (px.requires_grad) {
          std::vector<double> gcols(static_cast<std::size_t>(patch) * span, 0.0);
          gemm_tn_acc(gcols.data(), pw.value.data(), n.grad.data(), patch, d.cout, span);
          col2im_acc(gcols.data(), d, px.grad.data());
        }
      },
      "conv2d");
}

Tensor upsample2x(const Tensor& x) {
  if (x.ndim() != 3) throw ShapeError("upsample2x: input must be [C x H x W], got " + shape_str(x.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<double> v(static_cast<std::size_t>(c) * 4 * h * w);
  auto xv = x.values();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < 2 * h; ++y)
      for (int z = 0; z < 2 * w; ++z)
        v[(static_cast<std::size_t>(ch) * 2 * h + y) * 2 * w + z] =
            xv[(static_cast<std::size_t>(ch) * h + y / 2) * w + z / 2];
  return make_op(
      {c, 2 * h, 2 * w}, std::move(v), {x},
      [c, h, w](TensorNode& n) {
        auto& px = *n.parents[0];
        for (int ch = 0; ch < c; ++ch)
          for (int y = 0; y < 2 * h; ++y)
            for (int z = 0; z < 2 * w; ++z)
              px.grad[(static_cast<std::size_t>(ch) * h + y / 2) * w + z / 2] +=
                  n.grad[(static_cast<std::size_t>(ch) * 2 * h + y) * 2 * w + z];
      },
      "upsample2x");
}

namespace {

void check_bn_args(const Tensor& x, const Tensor& gamma, const Tensor& beta, const char* op) {
  if (x.ndim() != 3) throw ShapeError(std::string(op) + ": input must be [C x H x W], got " + shape_str(x.shape()));
  if (gamma.ndim() != 1 || gamma.dim(0) != x.dim(0) || beta.ndim() != 1 || beta.dim(0) != x.dim(0))
    throw ShapeError(std::string(op) + ": affine parameters must be [" + std::to_string(x.dim(0)) + "]");
}

}  // namespace

Tensor batchnorm2d_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                         std::vector<double>* batch_mean, std::vector<double>* batch_var) {
  check_bn_args(x, gamma, beta, "batchnorm2d_train");
  const int c = x.dim(0);
  const int m = x.dim(1) * x.dim(2);
  if (m == 0) throw ShapeError("batchnorm2d_train: empty spatial extent");
  auto xv = x.values();
  std::vector<double> mean(static_cast<std::size_t>(c), 0.0), var(static_cast<std::size_t>(c), 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const double* row = xv.data() + static_cast<std::size_t>(ch) * m;
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += row[i];
    const double mu = s / m;
    double sq = 0.0;
    for (int i = 0; i < m; ++i) sq += (row[i] - mu) * (row[i] - mu);
    mean[static_cast<std::size_t>(ch)] = mu;
    var[static_cast<std::size_t>(ch)] = sq / m;
  }
  std::vector<double> v(x.numel());
  auto gv = gamma.values(), bv = beta.values();
  for (int ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] + eps);
    const double* row = xv.data() + static_cast<std::size_t>(ch) * m;
    double* out = v.data() + static_cast<std::size_t>(ch) * m;
    for (int i = 0; i < m; ++i)
      out[i] = gv[ch] * (row[i] - mean[static_cast<std::size_t>(ch)]) * inv + bv[ch];
  }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;
  return make_op(
      x.shape(), std::move(v), {x, gamma, beta},
      [c, m, eps, mean = std::move(mean), var = std::move(var)](TensorNode& n) {
        auto& px = *n.parents[0];
        auto& pgam = *n.parents[1];
        auto& pbet = *n.parents[2];
        for (int ch = 0; ch < c; ++ch) {
          const double inv = 1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] + eps);
          const double* xrow = px.value.data() + static_cast<std::size_t>(ch) * m;
          const double* grow = n.grad.data() + static_cast<std::size_t>(ch) * m;
          const double mu = mean[static_cast<std::size_t>(ch)];
          double gsum = 0.0, gxhat = 0.0;
          for (int i = 0; i < m; ++i) {
            gsum += grow[i];
            gxhat += grow[i] * (xrow[i] - mu) * inv;
          }
          if (pgam.requires_grad) pgam.grad[ch] += gxhat;
          if (pbet.requires_grad) pbet.grad[ch] += gsum;
          if (px.requires_grad) {
            const double g = pgam.value[ch];
            double* gx = px.grad.data() + static_cast<std::size_t>(ch) * m;
            for (int i = 0; i < m; ++i) {
              const double xhat = (xrow[i] - mu) * inv;
              gx[i] += g * inv * (grow[i] - gsum / m - xhat * gxhat / m);
            }
          }
        }
      },
      "batchnorm2d_train");
}

Tensor batchnorm2d_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        const std::vector<double>& mean, const std::vector<double>& var,
                        double eps) {
  check_bn_args(x, gamma, beta, "batchnorm2d_eval");
  const int c = x.dim(0);
  const int m = x.dim(1) * x.dim(2);
  if (mean.size() != static_cast<std::size_t>(c) || var.size() != static_cast<std::size_t>(c))
    throw ShapeError("batchnorm2d_eval: statistics must have " + std::to_string(c) + " entries");
  std::vector<double> v(x.numel());
  auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  for (int ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] + eps);
    const double* row = xv.data() + static_cast<std::size_t>(ch) * m;
    double* out = v.data() + static_cast<std::size_t>(ch) * m;
    for (int i = 0; i < m; ++i) out[i] = gv[ch] * (row[i] - mean[static_cast<std::size_t>(ch)]) * inv + bv[ch];
  }
  return make_op(
      x.shape(), std::move(v), {x, gamma, beta},
      [c, m, eps, mean, var](TensorNode& n) {
        auto& px = *n.parents[0];
        auto& pgam = *n.parents[1];
        auto& pbet = *n.parents[2];
        for (int ch = 0; ch < c; ++ch) {
          const double inv = 1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] + eps);
          const double* xrow = px.value.data() + static_cast<std::size_t>(ch) * m;
          const double* grow = n.grad.data() + static_cast<std::size_t>(ch) * m;
          for (int i = 0; i < m; ++i) {
            if (px.requires_grad) px.grad[static_cast<std::size_t>(ch) * m + i] += grow[i] * pgam.value[ch] * inv;
            if (pgam.requires_grad)
              pgam.grad[ch] += grow[i] * (xrow[i] - mean[static_cast<std::size_t>(ch)]) * inv;
            if (pbet.requires_grad) pbet.grad[ch] += grow[i];
          }
        }
      },
      "batchnorm2d_eval");
}

Tensor knn_dot_aggregate(const Tensor& g, const std::vector<std::vector<int>>& neighbors,
                         double eps, int* guard_hits, std::vector<std::vector<double>>* weights_out,
                         std::vector<char>* guarded_out) {
  check_2d(g, "knn_dot_aggregate");
  const int N = g.dim(0), d = g.dim(1);
  if (static_cast<int>(neighbors.size()) != N)
    throw ShapeError("knn_dot_aggregate: neighbor lists for " + std::to_string(neighbors.size()) +
                     " nodes, tensor has " + std::to_string(N));
  auto gv = g.values();
  std::vector<std::vector<double>> weights(neighbors.size());
  std::vector<char> guarded(neighbors.size(), 0);
  int hits = 0;
  std::vector<double> v(static_cast<std::size_t>(N) * d, 0.0);
  for (int i = 0; i < N; ++i) {
    const auto& nb = neighbors[static_cast<std::size_t>(i)];
    if (nb.empty())
      throw InvalidArgumentError("knn_dot_aggregate: node " + std::to_string(i) + " has no neighbors");
    auto& wrow = weights[static_cast<std::size_t>(i)];
    wrow.resize(nb.size());
    double denom = 0.0;
    for (std::size_t l = 0; l < nb.size(); ++l) {
      const int j = nb[l];
      if (j < 0 || j >= N)
        throw InvalidArgumentError("knn_dot_aggregate: neighbor index " + std::to_string(j) +
                                   " outside [0, " + std::to_string(N) + ")");
      double dot = 0.0;
      for (int c = 0; c < d; ++c)
        dot += gv[static_cast<std::size_t>(i) * d + c] * gv[static_cast<std::size_t>(j) * d + c];
      wrow[l] = dot;
      denom += dot;
    }
    if (std::abs(denom) < eps) {
      guarded[static_cast<std::size_t>(i)] = 1;
      ++hits;
      const double u = 1.0 / static_cast<double>(nb.size());
      for (auto& wv : wrow) wv = u;
    } else {
      for (auto& wv : wrow) wv /= denom;
    }
    for (std::size_t l = 0; l < nb.size(); ++l) {
      const int j = nb[l];
      for (int c = 0; c < d; ++c)
        v[static_cast<std::size_t>(i) * d + c] += wrow[l] * gv[static_cast<std::size_t>(j) * d + c];
    }
  }
  if (guard_hits) *guard_hits = hits;
  if (weights_out) *weights_out = weights;
  if (guarded_out) *guarded_out = guarded;
  return make_op(
      g.shape(), std::move(v), {g},
      [N, d, neighbors, eps, weights = std::move(weights),
       guarded = std::move(guarded)](TensorNode& n) {
        auto& pg = *n.parents[0];
        for (int i = 0; i < N; ++i) {
          const auto& nb = neighbors[static_cast<std::size_t>(i)];
          const auto& wrow = weights[static_cast<std::size_t>(i)];
          const double* gout = n.grad.data() + static_cast<std::size_t>(i) * d;
          // Linear-combination path.
          for (std::size_t l = 0; l < nb.size(); ++l) {
            double* gj = pg.grad.data() + static_cast<std::size_t>(nb[l]) * d;
            for (int c = 0; c < d; ++c) gj[c] += wrow[l] * gout[c];
          }
          if (guarded[static_cast<std::size_t>(i)]) continue;  // uniform weights carry no gradient
          // Weight path: w_l = dot_l / sum(dot), dot_l = g_i . g_{n_l}.
          std::vector<double> q(nb.size());
          double swq = 0.0;
          for (std::size_t l = 0; l < nb.size(); ++l) {
            const double* gj = pg.value.data() + static_cast<std::size_t>(nb[l]) * d;
            double acc = 0.0;
            for (int c = 0; c < d; ++c) acc += gout[c] * gj[c];
            q[l] = acc;
            swq += wrow[l] * acc;
          }
          double denom = 0.0;
          {
            const double* gi = pg.value.data() + static_cast<std::size_t>(i) * d;
            for (std::size_t l = 0; l < nb.size(); ++l) {
              const double* gj = pg.value.data() + static_cast<std::size_t>(nb[l]) * d;
              double dot = 0.0;
              for (int c = 0; c < d; ++c) dot += gi[c] * gj[c];
              denom += dot;
            }
          }
          const double* gi = pg.value.data() + static_cast<std::size_t>(i) * d;
          double* ggi = pg.grad.data() + static_cast<std::size_t>(i) * d;
          for (std::size_t l = 0; l < nb.size(); ++l) {
            const double gd = (q[l] - swq) / denom;
            const double* gj = pg.value.data() + static_cast<std::size_t>(nb[l]) * d;
            double* ggj = pg.grad.data() + static_cast<std::size_t>(nb[l]) * d;
            for (int c = 0; c < d; ++c) {
              ggi[c] += gd * gj[c];
              ggj[c] += gd * gi[c];
            }
          }
        }
      },
      "knn_dot_aggregate");
}

Tensor scatter_max_bev(const Tensor& feats, const std::vector<int>& cell_of_row, int grid_h,
                       int grid_w, int* dropped) {
  check_2d(feats, "scatter_max_bev");
  const int N = feats.dim(0), c = feats.dim(1);
  if (static_cast<int>(cell_of_row.size()) != N)
    throw ShapeError("scatter_max_bev: " + std::to_string(cell_of_row.size()) + " cells for " +
                     std::to_string(N) + " rows");
  if (grid_h <= 0 || grid_w <= 0)
    throw InvalidArgumentError("scatter_max_bev: grid extents must be positive");
  const int cells = grid_h * grid_w;
  std::vector<double> v(static_cast<std::size_t>(c) * cells, 0.0);
  std::vector<int> arg(static_cast<std::size_t>(c) * cells, -1);
  auto fv = feats.values();
  int n_dropped = 0;
  for (int i = 0; i < N; ++i) {
    const int cell = cell_of_row[static_cast<std::size_t>(i)];
    if (cell == -1) {
      ++n_dropped;
      continue;
    }
    if (cell < 0 || cell >= cells)
      throw InvalidArgumentError("scatter_max_bev: cell " + std::to_string(cell) + " outside [0, " +
                                 std::to_string(cells) + ")");
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t out = static_cast<std::size_t>(ch) * cells + cell;
      const double val = fv[static_cast<std::size_t>(i) * c + ch];
      if (arg[out] == -1 || val > v[out]) {
        v[out] = val;
        arg[out] = i;
      }
    }
  }
  if (dropped) *dropped = n_dropped;
  return make_op(
      {c, grid_h, grid_w}, std::move(v), {feats},
      [c, cells, arg = std::move(arg)](TensorNode& n) {
        auto& pf = *n.parents[0];
        for (int ch = 0; ch < c; ++ch)
          for (int cell = 0; cell < cells; ++cell) {
            const std::size_t out = static_cast<std::size_t>(ch) * cells + cell;
            if (arg[out] >= 0) pf.grad[static_cast<std::size_t>(arg[out]) * c + ch] += n.grad[out];
          }
      },
      "scatter_max_bev");
}

Tensor bce_with_logits_sum(const Tensor& logits, const std::vector<double>& targets) {
  if (targets.size() != logits.numel())
    throw ShapeError("bce_with_logits_sum: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.numel()) + " logits");
  auto zv = logits.values();
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double z = zv[i];
    loss += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return make_op(
      {1}, {loss}, {logits},
      [targets](TensorNode& n) {
        auto& pz = *n.parents[0];
        for (std::size_t i = 0; i < targets.size(); ++i)
          pz.grad[i] += n.grad[0] * (stable_sigmoid(pz.value[i]) - targets[i]);
      },
      "bce_with_logits_sum");
}

Tensor smooth_l1_sum(const Tensor& pred, const std::vector<double>& target) {
  if (target.size() != pred.numel())
    throw ShapeError("smooth_l1_sum: " + std::to_string(target.size()) + " targets for " +
                     std::to_string(pred.numel()) + " predictions");
  auto pv = pred.values();
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double a = std::abs(pv[i] - target[i]);
    loss += a < 1.0 ? 0.5 * a * a : a - 0.5;
  }
  return make_op(
      {1}, {loss}, {pred},
      [target](TensorNode& n) {
        auto& pp = *n.parents[0];
        for (std::size_t i = 0; i < target.size(); ++i)
          pp.grad[i] += n.grad[0] * std::clamp(pp.value[i] - target[i], -1.0, 1.0);
      },
      "smooth_l1_sum");
}

}  // namespace svga
