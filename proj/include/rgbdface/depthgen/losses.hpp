#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "rgbdface/nn/losses.hpp"
#include "rgbdface/nn/ops.hpp"

namespace rgbdface::depthgen {

using nn::Var;

// Pixel similarity: mean |Y' - Y| over all pixels and the batch.
inline Var ps_loss(const Var& generated, const Var& ground_truth) {
  return nn::l1_mean(generated, ground_truth, "ps_loss");
}

// Multi-level feature similarity: (1/n) sum_l mean |F_c^l(Y') - F_e^l(Y)|.
// Gradients reach the shared trunk through both lists.
inline Var mfs_loss(const std::vector<Var>& feats_generated, const std::vector<Var>& feats_ground_truth) {
  require<ShapeError>(!feats_generated.empty(), "mfs_loss: no feature levels");
  require<ShapeError>(feats_generated.size() == feats_ground_truth.size(), "mfs_loss: ", feats_generated.size(),
                      " generated levels vs ", feats_ground_truth.size(), " ground-truth levels");
  std::vector<Var> terms;
  for (std::size_t l = 0; l < feats_generated.size(); ++l)
    terms.push_back(nn::l1_mean(feats_generated[l], feats_ground_truth[l], "mfs_loss level"));
  return nn::weighted_sum(terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size())));
}

// Identity loss on the generated depth: mean softmax cross-entropy.
inline Var ffdg_identity_loss(const Var& logits, std::span<const int> labels) {
  return nn::softmax_cross_entropy(logits, labels);
}

struct LossWeights {
  double lambda1 = 1.0 / 3.0;
  double lambda2 = 1.0 / 3.0;
};

// Proportional weights from the current (detached) loss values:
// lambda1 = l_ps / S, lambda2 = l_mfs / S with S = l_ps + l_mfs + l_dis.
// Falls back to (1/3, 1/3) when S is numerically zero.
inline LossWeights dynamic_weights(double l_ps, double l_mfs, double l_dis) {
  for (double v : {l_ps, l_mfs, l_dis})
    require<PreconditionError>(std::isfinite(v) && v >= 0.0, "dynamic_weights: loss value ", v,
                               " is negative or non-finite");
  const double denom = l_ps + l_mfs + l_dis;
  if (denom < 1e-12) return {};
  return {l_ps / denom, l_mfs / denom};
}

struct FfdgLossBreakdown {
  double l_ps = 0.0;
  double l_mfs = 0.0;
  double l_dis = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double l_total = 0.0;
};

inline FfdgLossBreakdown ffdg_total_loss(double l_ps, double l_mfs, double l_dis) {
  const LossWeights w = dynamic_weights(l_ps, l_mfs, l_dis);
  return {l_ps, l_mfs, l_dis, w.lambda1, w.lambda2, w.lambda1 * l_ps + w.lambda2 * l_mfs + l_dis};
}

// Differentiable total: lambdas enter as constants, so
// d total = lambda1 d l_ps + lambda2 d l_mfs + d l_dis.
inline std::pair<Var, FfdgLossBreakdown> ffdg_total_loss(const Var& l_ps, const Var& l_mfs, const Var& l_dis) {
  FfdgLossBreakdown b = ffdg_total_loss(l_ps.item(), l_mfs.item(), l_dis.item());
  Var total = nn::weighted_sum({l_ps, l_mfs, l_dis}, {b.lambda1, b.lambda2, 1.0});
  b.l_total = total.item();
  return {total, b};
}

}  // namespace rgbdface::depthgen
