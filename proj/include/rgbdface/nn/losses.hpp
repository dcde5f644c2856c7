#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "rgbdface/nn/autograd.hpp"

namespace rgbdface::nn {

// mean |a - b| over every element. Subgradient 0 where a == b.
inline Var l1_mean(const Var& a, const Var& b, const char* what = "l1_mean") {
  require_same_shape(a.value(), b.value(), what);
  require<ShapeError>(a.value().size() > 0, what, ": empty input");
  const double M = static_cast<double>(a.value().size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += std::abs(a.value()[i] - b.value()[i]);
  return make_result(Tensor::scalar(s / M), {a, b}, [M](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    const double g = self.grad[0] / M;
    const bool ga = wants_grad(self, 0), gb = wants_grad(self, 1);
    Tensor* da = ga ? &grad_of(self, 0) : nullptr;
    Tensor* db = gb ? &grad_of(self, 1) : nullptr;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = av[i] - bv[i];
      const double sgn = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      if (da) (*da)[i] += g * sgn;
      if (db) (*db)[i] -= g * sgn;
    }
  });
}

// Mean softmax cross-entropy over the batch; logits (N, K), labels in [0, K).
inline Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  require<ShapeError>(logits.value().rank() == 2, "softmax_cross_entropy: logits must be (batch, classes), got ",
                      shape_str(logits.shape()));
  const int N = logits.dim(0), K = logits.dim(1);
  require<ShapeError>(static_cast<std::size_t>(N) == labels.size(), "softmax_cross_entropy: ", labels.size(),
                      " labels for batch of ", N);
  require<ShapeError>(N > 0 && K > 0, "softmax_cross_entropy: empty logits");
  Tensor prob({N, K});
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    require<PreconditionError>(labels[n] >= 0 && labels[n] < K, "label ", labels[n], " of sample ", n,
                               " out of range [0, ", K, ")");
    double mx = logits.value().at(n, 0);
    for (int k = 1; k < K; ++k) mx = std::max(mx, logits.value().at(n, k));
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(logits.value().at(n, k) - mx);
    for (int k = 0; k < K; ++k) prob.at(n, k) = std::exp(logits.value().at(n, k) - mx) / z;
    loss += (mx + std::log(z)) - logits.value().at(n, labels[n]);
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result(Tensor::scalar(loss / N), {logits}, [prob = std::move(prob), lab, N, K](Node& self) {
    Tensor& g = grad_of(self, 0);
    const double scale = self.grad[0] / N;
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k) g.at(n, k) += scale * (prob.at(n, k) - (k == lab[n] ? 1.0 : 0.0));
  });
}

}  // namespace rgbdface::nn
