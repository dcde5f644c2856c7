#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "rgbdface/nn/resnet.hpp"
#include "rgbdface/profile.hpp"

namespace rgbdface::depthgen {

using nn::Mode;
using nn::Var;

class BackboneState;

// Feature-extraction network F_e: the shared trunk without a classifier.
class FeatureBranch {
 public:
  explicit FeatureBranch(std::shared_ptr<nn::ResNetTrunk> trunk) : trunk_(std::move(trunk)) {}
  const nn::ResNetTrunk& trunk() const { return *trunk_; }
  std::vector<Var> taps(const Var& x, int levels, Mode mode) { return trunk_->taps(x, mode, levels); }

 private:
  std::shared_ptr<nn::ResNetTrunk> trunk_;
};

// Classification network F_c: the shared trunk plus the identity head.
class ClassificationBranch {
 public:
  ClassificationBranch(std::shared_ptr<nn::ResNetTrunk> trunk, nn::Linear* head)
      : trunk_(std::move(trunk)), head_(head) {}
  const nn::ResNetTrunk& trunk() const { return *trunk_; }
  std::vector<Var> taps(const Var& x, int levels, Mode mode) { return trunk_->taps(x, mode, levels); }

  struct Output {
    std::vector<Var> taps;  // all five levels
    Var logits;
  };
  Output forward(const Var& x, Mode mode) {
    Output out;
    out.taps = trunk_->taps(x, mode);
    out.logits = (*head_)(nn::global_avg_pool(out.taps.back()));
    return out;
  }

 private:
  std::shared_ptr<nn::ResNetTrunk> trunk_;
  nn::Linear* head_;
};

// Single-channel ResNet-18 whose convolutional trunk is one object referenced
// by both F_c and F_e, so the two can never disagree.
class BackboneState {
 public:
  BackboneState(const Geometry& geom, int identity_count, std::uint64_t seed) : identity_count_(identity_count) {
    require<PreconditionError>(identity_count >= 1, "identity_count must be >= 1, got ", identity_count);
    std::mt19937_64 rng(seed);
    trunk_ = std::make_shared<nn::ResNetTrunk>(1, geom.backbone_widths, rng);
    head_ = nn::Linear(geom.backbone_widths[3], identity_count, true, rng);
  }

  BackboneState(BackboneState&&) = default;
  BackboneState& operator=(BackboneState&&) = default;
  BackboneState(const BackboneState&) = delete;
  BackboneState& operator=(const BackboneState&) = delete;

  ClassificationBranch classification_branch() { return ClassificationBranch(trunk_, &head_); }
  FeatureBranch feature_branch() { return FeatureBranch(trunk_); }

  const nn::ResNetTrunk& trunk() const { return *trunk_; }
  const nn::Linear& head() const { return head_; }
  int identity_count() const { return identity_count_; }

  void visit(const nn::StateVisitor& v) {
    trunk_->visit(v, "backbone.trunk");
    head_.visit(v, "backbone.head");
  }

 private:
  int identity_count_;
  std::shared_ptr<nn::ResNetTrunk> trunk_;
  nn::Linear head_;
};

// Activations of the first n levels (stem, stage 1, stage 2[, stage 3]).
inline std::vector<Var> shallow_features(const Var& depth, FeatureBranch branch, int n, Mode mode) {
  require<PreconditionError>(n >= 1 && n <= 4, "shallow feature level count ", n, " outside [1, 4]");
  return branch.taps(depth, n, mode);
}

inline std::vector<Var> shallow_features(const Var& depth, ClassificationBranch branch, int n, Mode mode) {
  require<PreconditionError>(n >= 1 && n <= 4, "shallow feature level count ", n, " outside [1, 4]");
  return branch.taps(depth, n, mode);
}

}  // namespace rgbdface::depthgen
