#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "svga/ops.hpp"
#include "svga/rng.hpp"
#include "svga/tensor.hpp"

namespace svga {

// Named parameter store. Registration order is the serialization order and
// the order the optimizer walks. Names must be unique.
class ParamRegistry {
 public:
  Tensor add_param(const std::string& name, Tensor t);
  Tensor add_buffer(const std::string& name, Tensor t);

  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<Tensor>& buffers() const { return buffers_; }

  // Params followed by buffers; what a checkpoint holds.
  std::vector<Tensor> saved_tensors() const;

  std::size_t param_count() const;
  Tensor find(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

 private:
  Tensor track(const std::string& name, Tensor t, std::vector<Tensor>& dst);

  std::vector<Tensor> params_;
  std::vector<Tensor> buffers_;
  std::unordered_map<std::string, Tensor> by_name_;
};

struct Linear {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
  std::string label;
  int in_features = 0;
  int out_features = 0;

  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& prefix, int in, int out, Rng& rng);
  Tensor forward(const Tensor& x) const;  // [n x in] -> [n x out]
};

// Stack of Linear layers with ReLU between them; relu_last controls the
// activation after the final layer.
struct Mlp {
  std::vector<Linear> layers;
  bool relu_last = true;

  Mlp() = default;
  Mlp(ParamRegistry& reg, const std::string& prefix, int in, const std::vector<int>& widths,
      bool relu_last, Rng& rng);
  Tensor forward(const Tensor& x) const;
  int out_features() const { return layers.empty() ? 0 : layers.back().out_features; }
};

struct Conv2dLayer {
  Tensor weight;  // [out x in x k x k]
  Tensor bias;    // [out]; constant zero when has_bias is false
  int in_channels = 0, out_channels = 0, kernel = 0, stride = 1, pad = 0;
  bool has_bias = true;

  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry& reg, const std::string& prefix, int in, int out, int k, int stride,
              int pad, bool has_bias, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

class BatchNorm2d {
 public:
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm2d() = default;
  BatchNorm2d(ParamRegistry& reg, const std::string& prefix, int channels);
  Tensor forward(const Tensor& x, bool training);
};

struct ConvBnRelu {
  Conv2dLayer conv;  // bias-free; the normalization shift covers it
  BatchNorm2d bn;

  ConvBnRelu() = default;
  ConvBnRelu(ParamRegistry& reg, const std::string& prefix, int in, int out, int k, int stride,
             int pad, Rng& rng);
  Tensor forward(const Tensor& x, bool training);
};

}  // namespace svga
