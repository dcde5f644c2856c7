#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "rgbdface/nn/autograd.hpp"

namespace rgbdface::nn {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct ConvGeom {
  int n, cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  std::size_t k() const { return static_cast<std::size_t>(cin) * kh * kw; }
  std::size_t p() const { return static_cast<std::size_t>(n) * ho * wo; }
};

inline void im2col(const double* x, const ConvGeom& g, double* col) {
  const std::size_t P = g.p();
  const int hw_out = g.ho * g.wo;
  for (int c = 0; c < g.cin; ++c)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((static_cast<std::size_t>(c) * g.kh + ki) * g.kw + kj) * P;
        for (int n = 0; n < g.n; ++n) {
          const double* plane = x + (static_cast<std::size_t>(n) * g.cin + c) * g.h * g.w;
          double* dst = row + static_cast<std::size_t>(n) * hw_out;
          for (int oh = 0; oh < g.ho; ++oh) {
            const int ih = oh * g.stride - g.pad + ki;
            if (ih < 0 || ih >= g.h) {
              std::fill(dst + oh * g.wo, dst + (oh + 1) * g.wo, 0.0);
              continue;
            }
            for (int ow = 0; ow < g.wo; ++ow) {
              const int iw = ow * g.stride - g.pad + kj;
              dst[oh * g.wo + ow] = (iw >= 0 && iw < g.w) ? plane[ih * g.w + iw] : 0.0;
            }
          }
        }
      }
}

inline void col2im(const double* col, const ConvGeom& g, double* dx) {
  const std::size_t P = g.p();
  const int hw_out = g.ho * g.wo;
  for (int c = 0; c < g.cin; ++c)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((static_cast<std::size_t>(c) * g.kh + ki) * g.kw + kj) * P;
        for (int n = 0; n < g.n; ++n) {
          double* plane = dx + (static_cast<std::size_t>(n) * g.cin + c) * g.h * g.w;
          const double* src = row + static_cast<std::size_t>(n) * hw_out;
          for (int oh = 0; oh < g.ho; ++oh) {
            const int ih = oh * g.stride - g.pad + ki;
            if (ih < 0 || ih >= g.h) continue;
            for (int ow = 0; ow < g.wo; ++ow) {
              const int iw = ow * g.stride - g.pad + kj;
              if (iw >= 0 && iw < g.w) plane[ih * g.w + iw] += src[oh * g.wo + ow];
            }
          }
        }
      }
}

inline void require_rank(const Var& v, int rank, const char* what) {
  require<ShapeError>(v.value().rank() == rank, what, ": expected rank ", rank, ", got ", shape_str(v.shape()));
}

}  // namespace detail

// 2-D convolution, NCHW input, weight (cout, cin, kh, kw). `bias` may be undefined.
inline Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  detail::require_rank(x, 4, "conv2d input");
  detail::require_rank(weight, 4, "conv2d weight");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require<ShapeError>(xv.dim(1) == wv.dim(1), "conv2d: input has ", xv.dim(1), " channels, weight expects ",
                      wv.dim(1));
  detail::ConvGeom g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(3), stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
  require<ShapeError>(g.ho > 0 && g.wo > 0, "conv2d: empty output for input ", shape_str(xv.shape()));
  if (bias.defined())
    require<ShapeError>(bias.value().size() == static_cast<std::size_t>(g.cout), "conv2d: bias size mismatch");

  // One GEMM per sample so a sample's output never depends on its batch mates.
  detail::ConvGeom g1 = g;
  g1.n = 1;
  const std::size_t K = g.k();
  const int hw_out = g.ho * g.wo;
  const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
  std::vector<double> col(K * hw_out);
  Tensor out({g.n, g.cout, g.ho, g.wo});
  for (int n = 0; n < g.n; ++n) {
    detail::im2col(xv.data() + n * in_stride, g1, col.data());
    double* dst = out.data() + static_cast<std::size_t>(n) * g.cout * hw_out;
    detail::MatMap(dst, g.cout, hw_out).noalias() =
        detail::ConstMatMap(wv.data(), g.cout, K) * detail::ConstMatMap(col.data(), K, hw_out);
    if (bias.defined())
      for (int co = 0; co < g.cout; ++co) {
        const double b = bias.value()[co];
        for (int p = 0; p < hw_out; ++p) dst[static_cast<std::size_t>(co) * hw_out + p] += b;
      }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result(std::move(out), std::move(inputs), [g, has_bias](Node& self) {
    const std::size_t K = g.k(), P = g.p();
    const int hw_out = g.ho * g.wo;
    const Tensor& gout = self.grad;
    detail::RowMat G(g.cout, static_cast<Eigen::Index>(P));
    for (int n = 0; n < g.n; ++n)
      for (int co = 0; co < g.cout; ++co) {
        const double* src = gout.data() + (static_cast<std::size_t>(n) * g.cout + co) * hw_out;
        std::copy(src, src + hw_out, G.data() + static_cast<std::size_t>(co) * P + static_cast<std::size_t>(n) * hw_out);
      }
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& wv = self.inputs[1]->value;
    if (wants_grad(self, 1)) {
      std::vector<double> col(K * P);
      detail::im2col(xv.data(), g, col.data());
      detail::MatMap(grad_of(self, 1).data(), g.cout, K).noalias() += G * detail::ConstMatMap(col.data(), K, P).transpose();
    }
    if (has_bias && wants_grad(self, 2)) {
      Tensor& gb = grad_of(self, 2);
      for (int co = 0; co < g.cout; ++co) gb[co] += G.row(co).sum();
    }
    if (wants_grad(self, 0)) {
      detail::RowMat dcol = detail::ConstMatMap(wv.data(), g.cout, K).transpose() * G;
      detail::col2im(dcol.data(), g, grad_of(self, 0).data());
    }
  });
}

namespace detail {

// Batch normalization over (N, H, W) per channel. Training mode normalizes with
// batch statistics and, when `update_*` are given, folds them into the running
// estimates; eval mode normalizes with `stats_*`.
inline Var batch_norm_impl(const Var& x, const Var& gamma, const Var& beta, bool training, const Tensor* stats_mean,
                           const Tensor* stats_var, Tensor* update_mean, Tensor* update_var, double momentum,
                           double eps) {
  detail::require_rank(x, 4, "batch_norm input");
  const Tensor& xv = x.value();
  const int N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  require<ShapeError>(gamma.value().size() == static_cast<std::size_t>(C), "batch_norm: gamma size mismatch");
  const double M = static_cast<double>(N) * HW;

  std::vector<double> mean(C), inv_std(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = xv.data() + (static_cast<std::size_t>(n) * C + c) * HW;
        for (int i = 0; i < HW; ++i) s += p[i];
      }
      const double mu = s / M;
      double v = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = xv.data() + (static_cast<std::size_t>(n) * C + c) * HW;
        for (int i = 0; i < HW; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      const double var = v / M;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      if (update_mean && update_var) {
        const double unbiased = M > 1 ? v / (M - 1) : var;
        (*update_mean)[c] = (1 - momentum) * (*update_mean)[c] + momentum * mu;
        (*update_var)[c] = (1 - momentum) * (*update_var)[c] + momentum * unbiased;
      }
    }
  } else {
    require<PreconditionError>(stats_mean && stats_var, "batch_norm: eval mode needs running statistics");
    for (int c = 0; c < C; ++c) {
      mean[c] = (*stats_mean)[c];
      inv_std[c] = 1.0 / std::sqrt((*stats_var)[c] + eps);
    }
  }

  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * HW;
      const double g = gamma.value()[c], b = beta.value()[c];
      for (int i = 0; i < HW; ++i) {
        const double h = (xv[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = h;
        out[base + i] = g * h + b;
      }
    }

  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), N, C, HW, M, training](Node& self) {
                       const Tensor& gy = self.grad;
                       const Tensor& gam = self.inputs[1]->value;
                       std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
                       for (int n = 0; n < N; ++n)
                         for (int c = 0; c < C; ++c) {
                           const std::size_t base = (static_cast<std::size_t>(n) * C + c) * HW;
                           for (int i = 0; i < HW; ++i) {
                             sum_dy[c] += gy[base + i];
                             sum_dy_xhat[c] += gy[base + i] * xhat[base + i];
                           }
                         }
                       if (wants_grad(self, 1)) {
                         Tensor& gg = grad_of(self, 1);
                         for (int c = 0; c < C; ++c) gg[c] += sum_dy_xhat[c];
                       }
                       if (wants_grad(self, 2)) {
                         Tensor& gb = grad_of(self, 2);
                         for (int c = 0; c < C; ++c) gb[c] += sum_dy[c];
                       }
                       if (!wants_grad(self, 0)) return;
                       Tensor& gx = grad_of(self, 0);
                       for (int n = 0; n < N; ++n)
                         for (int c = 0; c < C; ++c) {
                           const std::size_t base = (static_cast<std::size_t>(n) * C + c) * HW;
                           const double k = gam[c] * inv_std[c];
                           for (int i = 0; i < HW; ++i) {
                             if (training)
                               gx[base + i] += k * (gy[base + i] - sum_dy[c] / M - xhat[base + i] * sum_dy_xhat[c] / M);
                             else
                               gx[base + i] += k * gy[base + i];
                           }
                         }
                     });
}

}  // namespace detail

inline Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, Tensor* running_mean = nullptr,
                            Tensor* running_var = nullptr, double momentum = 0.1, double eps = 1e-5) {
  return detail::batch_norm_impl(x, gamma, beta, true, nullptr, nullptr, running_mean, running_var, momentum, eps);
}

inline Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta, const Tensor& running_mean,
                           const Tensor& running_var, double eps = 1e-5) {
  return detail::batch_norm_impl(x, gamma, beta, false, &running_mean, &running_var, nullptr, nullptr, 0.0, eps);
}

inline Var relu(const Var& x) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_result(std::move(out), {x}, [](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    Tensor& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > 0.0) gx[i] += self.grad[i];
  });
}

inline Var sigmoid(const Var& x) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  Tensor saved = out;
  return make_result(std::move(out), {x}, [y = std::move(saved)](Node& self) {
    Tensor& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += self.grad[i] * y[i] * (1.0 - y[i]);
  });
}

inline Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (wants_grad(self, k)) {
        Tensor& g = grad_of(self, k);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
  });
}

// Max pooling with implicit -inf padding.
inline Var max_pool2d(const Var& x, int kernel, int stride, int pad) {
  detail::require_rank(x, 4, "max_pool2d input");
  const Tensor& xv = x.value();
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int Ho = (H + 2 * pad - kernel) / stride + 1, Wo = (W + 2 * pad - kernel) / stride + 1;
  Tensor out({N, C, Ho, Wo});
  std::vector<std::size_t> argmax(out.size());
  for (int nc = 0; nc < N * C; ++nc) {
    const std::size_t in_base = static_cast<std::size_t>(nc) * H * W;
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = in_base;
        for (int ki = 0; ki < kernel; ++ki) {
          const int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const int iw = ow * stride - pad + kj;
            if (iw < 0 || iw >= W) continue;
            const std::size_t idx = in_base + static_cast<std::size_t>(ih) * W + iw;
            if (xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(nc) * Ho + oh) * Wo + ow;
        out[o] = best;
        argmax[o] = best_idx;
      }
  }
  return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    Tensor& gx = grad_of(self, 0);
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[o];
  });
}

inline Var upsample_nearest2x(const Var& x) {
  detail::require_rank(x, 4, "upsample input");
  const Tensor& xv = x.value();
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  Tensor out({N, C, 2 * H, 2 * W});
  for (int nc = 0; nc < N * C; ++nc)
    for (int h = 0; h < 2 * H; ++h)
      for (int w = 0; w < 2 * W; ++w)
        out[(static_cast<std::size_t>(nc) * 2 * H + h) * 2 * W + w] =
            xv[(static_cast<std::size_t>(nc) * H + h / 2) * W + w / 2];
  return make_result(std::move(out), {x}, [N, C, H, W](Node& self) {
    Tensor& gx = grad_of(self, 0);
    for (int nc = 0; nc < N * C; ++nc)
      for (int h = 0; h < 2 * H; ++h)
        for (int w = 0; w < 2 * W; ++w)
          gx[(static_cast<std::size_t>(nc) * H + h / 2) * W + w / 2] +=
              self.grad[(static_cast<std::size_t>(nc) * 2 * H + h) * 2 * W + w];
  });
}

// (N, C, H, W) -> (N, C)
inline Var global_avg_pool(const Var& x) {
  detail::require_rank(x, 4, "global_avg_pool input");
  const Tensor& xv = x.value();
  const int N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  Tensor out({N, C});
  for (int nc = 0; nc < N * C; ++nc) {
    double s = 0.0;
    for (int i = 0; i < HW; ++i) s += xv[static_cast<std::size_t>(nc) * HW + i];
    out[nc] = s / HW;
  }
  return make_result(std::move(out), {x}, [N, C, HW](Node& self) {
    Tensor& gx = grad_of(self, 0);
    for (int nc = 0; nc < N * C; ++nc)
      for (int i = 0; i < HW; ++i) gx[static_cast<std::size_t>(nc) * HW + i] += self.grad[nc] / HW;
  });
}

// y = x W^T + b, x (N, in), W (out, in), b (out) or undefined.
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  detail::require_rank(x, 2, "linear input");
  detail::require_rank(weight, 2, "linear weight");
  const int N = x.dim(0), in = x.dim(1), outd = weight.dim(0);
  require<ShapeError>(weight.dim(1) == in, "linear: input dim ", in, " does not match weight ",
                      shape_str(weight.shape()));
  Tensor out({N, outd});
  const detail::ConstMatMap W(weight.value().data(), outd, in);
  for (int n = 0; n < N; ++n)  // row by row, batch-invariant
    Eigen::Map<Eigen::VectorXd>(out.data() + static_cast<std::size_t>(n) * outd, outd).noalias() =
        W * Eigen::Map<const Eigen::VectorXd>(x.value().data() + static_cast<std::size_t>(n) * in, in);
  if (bias.defined()) {
    require<ShapeError>(bias.value().size() == static_cast<std::size_t>(outd), "linear: bias size mismatch");
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < outd; ++o) out.at(n, o) += bias.value()[o];
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result(std::move(out), std::move(inputs), [N, in, outd, has_bias](Node& self) {
    detail::ConstMatMap G(self.grad.data(), N, outd);
    if (wants_grad(self, 0))
      detail::MatMap(grad_of(self, 0).data(), N, in).noalias() +=
          G * detail::ConstMatMap(self.inputs[1]->value.data(), outd, in);
    if (wants_grad(self, 1))
      detail::MatMap(grad_of(self, 1).data(), outd, in).noalias() +=
          G.transpose() * detail::ConstMatMap(self.inputs[0]->value.data(), N, in);
    if (has_bias && wants_grad(self, 2)) {
      Tensor& gb = grad_of(self, 2);
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < outd; ++o) gb[o] += G(n, o);
    }
  });
}

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

// (N, C, H, W) -> (N, C*H*W); channel-major then row-major, i.e. memory order.
inline Var flatten(const Var& x) {
  require<ShapeError>(x.value().rank() >= 2, "flatten needs rank >= 2");
  const int N = x.dim(0);
  const int rest = N ? static_cast<int>(x.value().size() / N) : 0;
  return reshape(x, {N, rest});
}

// Concatenation along dim 1 of tensors that agree on every other dim.
inline Var concat_dim1(const std::vector<Var>& parts) {
  require<ShapeError>(!parts.empty(), "concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  const int N = s0[0];
  std::vector<std::size_t> inner(parts.size());
  Shape out_shape = s0;
  out_shape[1] = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Shape& s = parts[k].shape();
    require<ShapeError>(s.size() == s0.size() && s[0] == N, "concat: incompatible shapes ", shape_str(s0), " and ",
                        shape_str(s));
    for (std::size_t d = 2; d < s.size(); ++d)
      require<ShapeError>(s[d] == s0[d], "concat: incompatible shapes ", shape_str(s0), " and ", shape_str(s));
    inner[k] = N ? parts[k].value().size() / N : 0;
    out_shape[1] += s[1];
  }
  Tensor out(out_shape);
  const std::size_t row = N ? out.size() / N : 0;
  for (int n = 0; n < N; ++n) {
    std::size_t off = static_cast<std::size_t>(n) * row;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const double* src = parts[k].value().data() + n * inner[k];
      std::copy(src, src + inner[k], out.data() + off);
      off += inner[k];
    }
  }
  return make_result(std::move(out), parts, [inner, N, row](Node& self) {
    for (int n = 0; n < N; ++n) {
      std::size_t off = static_cast<std::size_t>(n) * row;
      for (std::size_t k = 0; k < inner.size(); ++k) {
        if (wants_grad(self, k)) {
          double* dst = grad_of(self, k).data() + n * inner[k];
          for (std::size_t i = 0; i < inner[k]; ++i) dst[i] += self.grad[off + i];
        }
        off += inner[k];
      }
    }
  });
}

// Σ coeffs[i] * terms[i] over scalars. Coefficients are constants.
inline Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& coeffs) {
  require<ShapeError>(terms.size() == coeffs.size(), "weighted_sum: term/coefficient count mismatch");
  double v = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require<ShapeError>(terms[i].value().size() == 1, "weighted_sum: terms must be scalars");
    v += coeffs[i] * terms[i].item();
  }
  return make_result(Tensor::scalar(v), terms, [coeffs](Node& self) {
    for (std::size_t i = 0; i < coeffs.size(); ++i)
      if (wants_grad(self, i)) grad_of(self, i)[0] += coeffs[i] * self.grad[0];
  });
}

}  // namespace rgbdface::nn
