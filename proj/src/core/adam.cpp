#include "svga/adam.hpp"

#include <cmath>

namespace svga {

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0.0) throw InvalidArgumentError("adam: learning rate must be positive");
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].requires_grad())
      throw InvalidArgumentError("adam: tensor '" + params_[i].name() + "' is not trainable");
    m_[i].assign(params_[i].numel(), 0.0);
    v_[i].assign(params_[i].numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    auto vals = p.mutable_values();
    const bool has = p.has_grad();
    auto g = has ? p.grad() : std::span<const double>();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const double gj = has ? g[j] : 0.0;
      if (!std::isfinite(gj))
        throw NumericError("adam: non-finite gradient in '" + p.name() + "'");
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * gj;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * gj * gj;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      vals[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace svga
