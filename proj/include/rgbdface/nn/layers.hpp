#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rgbdface/nn/ops.hpp"

namespace rgbdface::nn {

enum class Mode { Train, Eval };

// Walks the named state of a model: trainable parameters and non-trainable
// buffers (batch-norm running statistics).
struct StateVisitor {
  std::function<void(const std::string&, Var&)> param;
  std::function<void(const std::string&, Tensor&)> buffer;
};

inline Tensor kaiming_normal(Shape shape, int fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

inline Tensor uniform_init(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

struct Conv2d {
  Var weight;
  Var bias;  // undefined when the conv feeds a batch norm
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(int cin, int cout, int kernel, int stride_, int pad_, bool with_bias, std::mt19937_64& rng)
      : weight(Var::parameter(kaiming_normal({cout, cin, kernel, kernel}, cin * kernel * kernel, rng))),
        stride(stride_),
        pad(pad_) {
    if (with_bias) bias = Var::parameter(Tensor({cout}));
  }

  Var operator()(const Var& x) const { return conv2d(x, weight, bias, stride, pad); }

  void visit(const StateVisitor& v, const std::string& prefix) {
    v.param(prefix + ".weight", weight);
    if (bias.defined()) v.param(prefix + ".bias", bias);
  }
};

namespace detail {
inline double& bn_momentum_override() {
  thread_local double m = -1.0;
  return m;
}
}  // namespace detail

// While alive, training-mode batch norms fold batch statistics into their
// running estimates with this momentum instead of the default 0.1.
class BatchNormMomentumScope {
 public:
  explicit BatchNormMomentumScope(double momentum) : prev_(detail::bn_momentum_override()) {
    require<PreconditionError>(momentum > 0.0 && momentum <= 1.0, "batch-norm momentum ", momentum,
                               " outside (0, 1]");
    detail::bn_momentum_override() = momentum;
  }
  ~BatchNormMomentumScope() { detail::bn_momentum_override() = prev_; }
  BatchNormMomentumScope(const BatchNormMomentumScope&) = delete;
  BatchNormMomentumScope& operator=(const BatchNormMomentumScope&) = delete;

 private:
  double prev_;
};

struct BatchNorm2d {
  static constexpr double kMomentum = 0.1;

  Var gamma;
  Var beta;
  Tensor running_mean;
  Tensor running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels)
      : gamma(Var::parameter(Tensor({channels}, 1.0))),
        beta(Var::parameter(Tensor({channels}))),
        running_mean({channels}),
        running_var({channels}, 1.0) {}

  Var train(const Var& x) {
    const double m = detail::bn_momentum_override();
    return batch_norm_train(x, gamma, beta, &running_mean, &running_var, m > 0.0 ? m : kMomentum);
  }
  Var eval(const Var& x) const { return batch_norm_eval(x, gamma, beta, running_mean, running_var); }

  void visit(const StateVisitor& v, const std::string& prefix) {
    v.param(prefix + ".gamma", gamma);
    v.param(prefix + ".beta", beta);
    v.buffer(prefix + ".running_mean", running_mean);
    v.buffer(prefix + ".running_var", running_var);
  }
};

struct Linear {
  Var weight;
  Var bias;

  Linear() = default;
  Linear(int in, int out, bool with_bias, std::mt19937_64& rng)
      : weight(Var::parameter(uniform_init({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng))) {
    if (with_bias) bias = Var::parameter(Tensor({out}));
  }

  Var operator()(const Var& x) const { return linear(x, weight, bias); }

  int in_features() const { return weight.dim(1); }
  int out_features() const { return weight.dim(0); }

  void visit(const StateVisitor& v, const std::string& prefix) {
    v.param(prefix + ".weight", weight);
    if (bias.defined()) v.param(prefix + ".bias", bias);
  }
};

// Bias-free conv followed by batch norm.
struct ConvBn {
  Conv2d conv;
  BatchNorm2d bn;

  ConvBn() = default;
  ConvBn(int cin, int cout, int kernel, int stride, int pad, std::mt19937_64& rng)
      : conv(cin, cout, kernel, stride, pad, false, rng), bn(cout) {}

  void visit(const StateVisitor& v, const std::string& prefix) {
    conv.visit(v, prefix + ".conv");
    bn.visit(v, prefix + ".bn");
  }
};

// Unique parameters of a model in visit order (shared storage listed once).
template <typename Model>
std::vector<Var> collect_parameters(Model& model) {
  std::vector<Var> out;
  StateVisitor v{[&](const std::string&, Var& p) {
                   for (const Var& q : out)
                     if (q.same_storage(p)) return;
                   out.push_back(p);
                 },
                 [](const std::string&, Tensor&) {}};
  model.visit(v);
  return out;
}

}  // namespace rgbdface::nn
