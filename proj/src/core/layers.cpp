#include "svga/layers.hpp"

#include <cmath>

namespace svga {

Tensor ParamRegistry::track(const std::string& name, Tensor t, std::vector<Tensor>& dst) {
  if (name.empty()) throw InvalidArgumentError("registry: empty tensor name");
  if (by_name_.count(name)) throw StateError("registry: duplicate tensor name '" + name + "'");
  t.set_name(name);
  by_name_.emplace(name, t);
  dst.push_back(t);
  return t;
}

Tensor ParamRegistry::add_param(const std::string& name, Tensor t) {
  t.set_requires_grad(true);
  return track(name, std::move(t), params_);
}

Tensor ParamRegistry::add_buffer(const std::string& name, Tensor t) {
  t.set_requires_grad(false);
  return track(name, std::move(t), buffers_);
}

std::vector<Tensor> ParamRegistry::saved_tensors() const {
  std::vector<Tensor> out = params_;
  out.insert(out.end(), buffers_.begin(), buffers_.end());
  return out;
}

std::size_t ParamRegistry::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

Tensor ParamRegistry::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw StateError("registry: no tensor named '" + name + "'");
  return it->second;
}

namespace {

// He initialization for layers feeding ReLU.
void fill_gaussian(Tensor& t, double sigma, Rng& rng) {
  for (double& v : t.mutable_values()) v = rng.gaussian(0.0, sigma);
}

}  // namespace

Linear::Linear(ParamRegistry& reg, const std::string& prefix, int in, int out, Rng& rng)
    : label(prefix), in_features(in), out_features(out) {
  if (in <= 0 || out <= 0)
    throw InvalidArgumentError(prefix + ": feature counts must be positive");
  Tensor w = Tensor::zeros({out, in});
  fill_gaussian(w, std::sqrt(2.0 / in), rng);
  weight = reg.add_param(prefix + ".weight", w);
  bias = reg.add_param(prefix + ".bias", Tensor::zeros({out}));
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(1) != in_features)
    throw ShapeError(label + ": expected [n x " + std::to_string(in_features) + "], got " +
                     shape_str(x.shape()));
  return add_bias(matmul_nt(x, weight), bias);
}

Mlp::Mlp(ParamRegistry& reg, const std::string& prefix, int in, const std::vector<int>& widths,
         bool relu_last, Rng& rng)
    : relu_last(relu_last) {
  if (widths.empty()) throw InvalidArgumentError(prefix + ": no layer widths");
  int cur = in;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    layers.emplace_back(reg, prefix + ".l" + std::to_string(i), cur, widths[i], rng);
    cur = widths[i];
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size() || relu_last) h = relu(h);
  }
  return h;
}

Conv2dLayer::Conv2dLayer(ParamRegistry& reg, const std::string& prefix, int in, int out, int k,
                         int stride, int pad, bool has_bias, Rng& rng)
    : in_channels(in), out_channels(out), kernel(k), stride(stride), pad(pad), has_bias(has_bias) {
  if (in <= 0 || out <= 0 || k <= 0)
    throw InvalidArgumentError(prefix + ": channel and kernel extents must be positive");
  Tensor w = Tensor::zeros({out, in, k, k});
  fill_gaussian(w, std::sqrt(2.0 / (static_cast<double>(in) * k * k)), rng);
  weight = reg.add_param(prefix + ".weight", w);
  if (has_bias)
    bias = reg.add_param(prefix + ".bias", Tensor::zeros({out}));
  else
    bias = Tensor::zeros({out});
}

Tensor Conv2dLayer::forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }

BatchNorm2d::BatchNorm2d(ParamRegistry& reg, const std::string& prefix, int channels) {
  if (channels <= 0) throw InvalidArgumentError(prefix + ": channel count must be positive");
  gamma = reg.add_param(prefix + ".gamma", Tensor::full({channels}, 1.0));
  beta = reg.add_param(prefix + ".beta", Tensor::zeros({channels}));
  running_mean = reg.add_buffer(prefix + ".running_mean", Tensor::zeros({channels}));
  running_var = reg.add_buffer(prefix + ".running_var", Tensor::full({channels}, 1.0));
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  if (!training) {
    std::vector<double> mu(running_mean.values().begin(), running_mean.values().end());
    std::vector<double> vr(running_var.values().begin(), running_var.values().end());
    return batchnorm2d_eval(x, gamma, beta, mu, vr, eps);
  }
  std::vector<double> bm, bv;
  Tensor y = batchnorm2d_train(x, gamma, beta, eps, &bm, &bv);
  const int m = x.dim(1) * x.dim(2);
  const double corr = m > 1 ? static_cast<double>(m) / (m - 1) : 1.0;
  auto rm = running_mean.mutable_values();
  auto rv = running_var.mutable_values();
  for (std::size_t c = 0; c < bm.size(); ++c) {
    rm[c] = (1.0 - momentum) * rm[c] + momentum * bm[c];
    rv[c] = (1.0 - momentum) * rv[c] + momentum * bv[c] * corr;
  }
  return y;
}

ConvBnRelu::ConvBnRelu(ParamRegistry& reg, const std::string& prefix, int in, int out, int k,
                       int stride, int pad, Rng& rng)
    : conv(reg, prefix + ".conv", in, out, k, stride, pad, /*has_bias=*/false, rng),
      bn(reg, prefix + ".bn", out) {}

Tensor ConvBnRelu::forward(const Tensor& x, bool training) {
  return relu(bn.forward(conv.forward(x), training));
}

}  // namespace svga
