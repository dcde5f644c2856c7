#pragma once

#include <vector>

#include "rgbdface/nn/autograd.hpp"

namespace rgbdface::nn {

// SGD with classical momentum: v <- mu*v + g (+ wd*p); p <- p - lr*v.
class Sgd {
 public:
  Sgd(std::vector<Var> params, double lr, double momentum = 0.9, double weight_decay = 0.0)
      : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
    require<PreconditionError>(lr > 0.0, "learning rate must be positive, got ", lr);
    require<PreconditionError>(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1), got ", momentum);
    velocity_.reserve(params_.size());
    for (const Var& p : params_) velocity_.emplace_back(p.shape());
  }

  void zero_grad() {
    for (Var& p : params_) p.zero_grad();
  }

  void step() {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Var& p = params_[k];
      if (!p.has_grad()) continue;
      Tensor& w = p.mutable_value();
      const Tensor& g = p.grad();
      Tensor& v = velocity_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] + weight_decay_ * w[i];
        v[i] = momentum_ * v[i] + gi;
        w[i] -= lr_ * v[i];
      }
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const std::vector<Var>& params() const { return params_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> velocity_;
  double lr_;
  double momentum_;
  double weight_decay_;
};

}  // namespace rgbdface::nn
