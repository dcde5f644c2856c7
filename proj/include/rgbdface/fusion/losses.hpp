#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rgbdface/fusion/model.hpp"
#include "rgbdface/nn/losses.hpp"
#include "rgbdface/nn/ops.hpp"

namespace rgbdface::fusion {

// Cross-modal identity consistency: mean |H_r(X_r) - H_d(X_d)|.
inline Var cic_loss(const Var& rgb_shared, const Var& depth_shared) {
  return nn::l1_mean(rgb_shared, depth_shared, "cic_loss");
}

// Cross-modal feature exclusion: (1/b) sum_i (0.5 * cos(u_i, v_i) + 0.5).
// In [0, 1]; 1 for parallel pairs, 0.5 orthogonal, 0 anti-parallel. A zero row
// has no direction, so it is rejected rather than regularized.
inline Var cfe_loss(const Var& rgb_specific, const Var& depth_specific) {
  require_same_shape(rgb_specific.value(), depth_specific.value(), "cfe_loss");
  require<ShapeError>(rgb_specific.value().rank() == 2 && rgb_specific.dim(0) > 0,
                      "cfe_loss: expected (batch, dim) inputs, got ", nn::shape_str(rgb_specific.shape()));
  const nn::Tensor& u = rgb_specific.value();
  const nn::Tensor& v = depth_specific.value();
  const int B = u.dim(0), D = u.dim(1);
  std::vector<double> nu(B), nv(B), cosv(B);
  double loss = 0.0;
  for (int i = 0; i < B; ++i) {
    double uu = 0, vv = 0, uv = 0;
    for (int d = 0; d < D; ++d) {
      uu += u.at(i, d) * u.at(i, d);
      vv += v.at(i, d) * v.at(i, d);
      uv += u.at(i, d) * v.at(i, d);
    }
    require<PreconditionError>(uu > 0.0, "cfe_loss: rgb_specific row of sample ", i, " has zero norm");
    require<PreconditionError>(vv > 0.0, "cfe_loss: depth_specific row of sample ", i, " has zero norm");
    nu[i] = std::sqrt(uu);
    nv[i] = std::sqrt(vv);
    cosv[i] = uv / (nu[i] * nv[i]);
    loss += 0.5 * cosv[i] + 0.5;
  }
  return nn::make_result(nn::Tensor::scalar(loss / B), {rgb_specific, depth_specific},
                         [nu, nv, cosv, B, D](nn::Node& self) {
                           const nn::Tensor& u = self.inputs[0]->value;
                           const nn::Tensor& v = self.inputs[1]->value;
                           const double g = self.grad[0] * 0.5 / B;
                           for (int i = 0; i < B; ++i) {
                             const double inv = 1.0 / (nu[i] * nv[i]);
                             if (nn::wants_grad(self, 0)) {
                               nn::Tensor& gu = nn::grad_of(self, 0);
                               for (int d = 0; d < D; ++d)
                                 gu.at(i, d) += g * (v.at(i, d) * inv - cosv[i] * u.at(i, d) / (nu[i] * nu[i]));
                             }
                             if (nn::wants_grad(self, 1)) {
                               nn::Tensor& gv = nn::grad_of(self, 1);
                               for (int d = 0; d < D; ++d)
                                 gv.at(i, d) += g * (u.at(i, d) * inv - cosv[i] * v.at(i, d) / (nv[i] * nv[i]));
                             }
                           }
                         });
}

// Additive angular margin softmax cross-entropy (batch mean).
// Logits are s * cos(theta_j) with cos(theta_y + m) for the target class, using
// the easy-margin rule (no margin when cos(theta_y) <= 0).
inline Var arc_margin_loss(const Var& embedding, const Var& class_weight, std::span<const int> labels,
                           const ArcParams& params) {
  params.validate();
  require<ShapeError>(embedding.value().rank() == 2 && class_weight.value().rank() == 2 &&
                          embedding.dim(1) == class_weight.dim(1),
                      "arc_margin_loss: embedding ", nn::shape_str(embedding.shape()), " vs class weight ",
                      nn::shape_str(class_weight.shape()));
  const int N = embedding.dim(0), K = class_weight.dim(0), D = embedding.dim(1);
  require<ShapeError>(N > 0 && static_cast<std::size_t>(N) == labels.size(), "arc_margin_loss: ", labels.size(),
                      " labels for batch of ", N);
  for (int n = 0; n < N; ++n)
    require<PreconditionError>(labels[n] >= 0 && labels[n] < K, "label ", labels[n], " of sample ", n,
                               " out of range [0, ", K, ")");

  constexpr double kNormFloor = 1e-12;
  const nn::Tensor& z = embedding.value();
  const nn::Tensor& w = class_weight.value();
  std::vector<double> zn(N), wn(K);
  nn::Tensor zh({N, D}), wh({K, D});
  for (int n = 0; n < N; ++n) {
    double s = 0;
    for (int d = 0; d < D; ++d) s += z.at(n, d) * z.at(n, d);
    zn[n] = std::max(std::sqrt(s), kNormFloor);
    for (int d = 0; d < D; ++d) zh.at(n, d) = z.at(n, d) / zn[n];
  }
  for (int k = 0; k < K; ++k) {
    double s = 0;
    for (int d = 0; d < D; ++d) s += w.at(k, d) * w.at(k, d);
    wn[k] = std::max(std::sqrt(s), kNormFloor);
    for (int d = 0; d < D; ++d) wh.at(k, d) = w.at(k, d) / wn[k];
  }
  nn::Tensor cosm({N, K});
  nn::detail::MatMap(cosm.data(), N, K).noalias() =
      nn::detail::ConstMatMap(zh.data(), N, D) * nn::detail::ConstMatMap(wh.data(), K, D).transpose();

  const double cm = std::cos(params.margin), sm = std::sin(params.margin), s = params.scale;
  nn::Tensor prob({N, K});
  std::vector<double> dphi(N, 1.0);
  std::vector<int> lab(labels.begin(), labels.end());
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    std::vector<double> logit(K);
    for (int k = 0; k < K; ++k) logit[k] = s * std::clamp(cosm.at(n, k), -1.0, 1.0);
    const double c = std::clamp(cosm.at(n, lab[n]), -1.0, 1.0);
    if (params.margin > 0.0 && c > 0.0) {
      const double sn = std::sqrt(std::max(1.0 - c * c, 0.0));
      logit[lab[n]] = s * (c * cm - sn * sm);
      dphi[n] = cm + sm * c / std::max(sn, 1e-8);
    }
    const double mx = *std::max_element(logit.begin(), logit.end());
    double zsum = 0.0;
    for (int k = 0; k < K; ++k) zsum += std::exp(logit[k] - mx);
    for (int k = 0; k < K; ++k) prob.at(n, k) = std::exp(logit[k] - mx) / zsum;
    loss += mx + std::log(zsum) - logit[lab[n]];
  }

  return nn::make_result(
      nn::Tensor::scalar(loss / N), {embedding, class_weight},
      [zh = std::move(zh), wh = std::move(wh), zn, wn, prob = std::move(prob), dphi, lab, s, N, K, D](nn::Node& self) {
        // d loss / d cos
        nn::Tensor gc({N, K});
        for (int n = 0; n < N; ++n)
          for (int k = 0; k < K; ++k) {
            double g = s * (prob.at(n, k) - (k == lab[n] ? 1.0 : 0.0)) / N;
            if (k == lab[n]) g *= dphi[n];
            gc.at(n, k) = g * self.grad[0];
          }
        if (nn::wants_grad(self, 0)) {
          nn::Tensor gzh({N, D});
          nn::detail::MatMap(gzh.data(), N, D).noalias() =
              nn::detail::ConstMatMap(gc.data(), N, K) * nn::detail::ConstMatMap(wh.data(), K, D);
          nn::Tensor& gz = nn::grad_of(self, 0);
          for (int n = 0; n < N; ++n) {
            double dot = 0;
            for (int d = 0; d < D; ++d) dot += zh.at(n, d) * gzh.at(n, d);
            for (int d = 0; d < D; ++d) gz.at(n, d) += (gzh.at(n, d) - zh.at(n, d) * dot) / zn[n];
          }
        }
        if (nn::wants_grad(self, 1)) {
          nn::Tensor gwh({K, D});
          nn::detail::MatMap(gwh.data(), K, D).noalias() =
              nn::detail::ConstMatMap(gc.data(), N, K).transpose() * nn::detail::ConstMatMap(zh.data(), N, D);
          nn::Tensor& gw = nn::grad_of(self, 1);
          for (int k = 0; k < K; ++k) {
            double dot = 0;
            for (int d = 0; d < D; ++d) dot += wh.at(k, d) * gwh.at(k, d);
            for (int d = 0; d < D; ++d) gw.at(k, d) += (gwh.at(k, d) - wh.at(k, d) * dot) / wn[k];
          }
        }
      });
}

// Identity loss over both modalities: 1/2 (arc_r(cat(sp_r, sh_r)) + arc_d(cat(sp_d, sh_d))).
inline Var arc_identity_loss(const SeparatedEmbeddings& e, std::span<const int> labels,
                             const ArcClassifier& rgb_classifier, const ArcClassifier& depth_classifier) {
  require<PreconditionError>(rgb_classifier.params.scale == depth_classifier.params.scale &&
                                 rgb_classifier.params.margin == depth_classifier.params.margin,
                             "arc_identity_loss: classifiers disagree on (s, m_arc)");
  Var lr = arc_margin_loss(nn::concat_dim1({e.rgb_specific, e.rgb_shared}), rgb_classifier.weight, labels,
                           rgb_classifier.params);
  Var ld = arc_margin_loss(nn::concat_dim1({e.depth_specific, e.depth_shared}), depth_classifier.weight, labels,
                           depth_classifier.params);
  return nn::weighted_sum({lr, ld}, {0.5, 0.5});
}

// L = l_cic + l_cfe + lambda * l_dis.
inline double mcfl_total_loss(double l_cic, double l_cfe, double l_dis, double lambda) {
  for (double v : {l_cic, l_cfe, l_dis, lambda})
    require<PreconditionError>(std::isfinite(v), "mcfl_total_loss: non-finite input ", v);
  require<PreconditionError>(lambda >= 0.0, "mcfl_total_loss: lambda must be >= 0, got ", lambda);
  return l_cic + l_cfe + lambda * l_dis;
}

// Differentiable total; undefined terms (disabled losses) are skipped.
inline Var mcfl_total_loss(const Var& l_cic, const Var& l_cfe, const Var& l_dis, double lambda) {
  mcfl_total_loss(l_cic.defined() ? l_cic.item() : 0.0, l_cfe.defined() ? l_cfe.item() : 0.0, l_dis.item(), lambda);
  std::vector<Var> terms;
  std::vector<double> coeffs;
  if (l_cic.defined()) terms.push_back(l_cic), coeffs.push_back(1.0);
  if (l_cfe.defined()) terms.push_back(l_cfe), coeffs.push_back(1.0);
  terms.push_back(l_dis), coeffs.push_back(lambda);
  return nn::weighted_sum(terms, coeffs);
}

}  // namespace rgbdface::fusion
