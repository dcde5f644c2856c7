#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <type_traits>

#include "rgbdface/nn/resnet.hpp"
#include "rgbdface/profile.hpp"

namespace rgbdface::fusion {

using nn::Mode;
using nn::Var;

// Two independent ResNet-18 trunks: F_r on RGB (3 channels), F_d on depth (1 channel).
class TwoStreamState {
 public:
  TwoStreamState(const Geometry& geom, std::uint64_t seed) : geom_(geom) {
    std::mt19937_64 rng(seed);
    rgb_ = std::make_unique<nn::ResNetTrunk>(3, geom.backbone_widths, rng);
    depth_ = std::make_unique<nn::ResNetTrunk>(1, geom.backbone_widths, rng);
  }

  nn::ResNetTrunk& rgb_branch() { return *rgb_; }
  nn::ResNetTrunk& depth_branch() { return *depth_; }
  const nn::ResNetTrunk& rgb_branch() const { return *rgb_; }
  const nn::ResNetTrunk& depth_branch() const { return *depth_; }
  const Geometry& geometry() const { return geom_; }

  void visit(const nn::StateVisitor& v) {
    rgb_->visit(v, "streams.rgb");
    depth_->visit(v, "streams.depth");
  }

 private:
  Geometry geom_;
  std::unique_ptr<nn::ResNetTrunk> rgb_;
  std::unique_ptr<nn::ResNetTrunk> depth_;
};

// Four affine maps from the flattened trunk output (C*h'*w') to 512-d
// subspaces: P_r (RGB-specific), H_r (RGB-shared), H_d (depth-shared),
// P_d (depth-specific).
struct SeparationHeads {
  nn::Linear rgb_specific;
  nn::Linear rgb_shared;
  nn::Linear depth_shared;
  nn::Linear depth_specific;

  SeparationHeads(int in_dim, int out_dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    rgb_specific = nn::Linear(in_dim, out_dim, true, rng);
    rgb_shared = nn::Linear(in_dim, out_dim, true, rng);
    depth_shared = nn::Linear(in_dim, out_dim, true, rng);
    depth_specific = nn::Linear(in_dim, out_dim, true, rng);
  }

  int in_dim() const { return rgb_specific.in_features(); }
  int out_dim() const { return rgb_specific.out_features(); }

  void visit(const nn::StateVisitor& v) {
    rgb_specific.visit(v, "heads.rgb_specific");
    rgb_shared.visit(v, "heads.rgb_shared");
    depth_shared.visit(v, "heads.depth_shared");
    depth_specific.visit(v, "heads.depth_specific");
  }
};

struct ArcParams {
  double scale = 30.0;   // s
  double margin = 0.5;   // m_arc, radians

  void validate() const {
    require<PreconditionError>(scale > 0.0 && std::isfinite(scale), "arc scale must be positive, got ", scale);
    require<PreconditionError>(margin >= 0.0 && margin < std::numbers::pi / 2, "arc margin ", margin,
                               " outside [0, pi/2)");
  }
};

// Class-weight matrix (identity_count, 2 * embedding_dim) for one modality.
struct ArcClassifier {
  Var weight;
  ArcParams params;

  ArcClassifier() = default;
  ArcClassifier(int identity_count, int in_dim, ArcParams p, std::mt19937_64& rng) : params(p) {
    p.validate();
    require<PreconditionError>(identity_count >= 1, "identity_count must be >= 1");
    const double bound = std::sqrt(6.0 / (identity_count + in_dim));
    weight = Var::parameter(nn::uniform_init({identity_count, in_dim}, bound, rng));
  }

  int identity_count() const { return weight.dim(0); }

  void visit(const nn::StateVisitor& v, const std::string& prefix) { v.param(prefix + ".weight", weight); }
};

struct SeparatedEmbeddings {
  Var rgb_specific;    // X_r^sp
  Var rgb_shared;      // X_r^sh
  Var depth_shared;    // X_d^sh
  Var depth_specific;  // X_d^sp

  int batch() const { return rgb_specific.dim(0); }
};

// Whole stage-2 network.
struct FusionModel {
  TwoStreamState streams;
  SeparationHeads heads;
  ArcClassifier rgb_classifier;
  ArcClassifier depth_classifier;

  FusionModel(const Geometry& geom, int identity_count, ArcParams arc, std::uint64_t seed)
      : streams(geom, seed), heads(geom.flat_dim(), geom.embedding_dim, seed + 1) {
    std::mt19937_64 rng(seed + 2);
    rgb_classifier = ArcClassifier(identity_count, 2 * geom.embedding_dim, arc, rng);
    depth_classifier = ArcClassifier(identity_count, 2 * geom.embedding_dim, arc, rng);
  }

  int identity_count() const { return rgb_classifier.identity_count(); }

  void visit(const nn::StateVisitor& v) {
    streams.visit(v);
    heads.visit(v);
    rgb_classifier.visit(v, "classifier.rgb");
    depth_classifier.visit(v, "classifier.depth");
  }
};

namespace detail {

template <typename Streams, typename Heads>
SeparatedEmbeddings run_separation(Streams& streams, Heads& heads, const Var& rgb, const Var& depth, Mode mode) {
  const Geometry& g = streams.geometry();
  require<ShapeError>(rgb.value().rank() == 4 && rgb.dim(1) == 3 && rgb.dim(2) == g.input_size &&
                          rgb.dim(3) == g.input_size,
                      "extract_and_separate: RGB batch ", nn::shape_str(rgb.shape()), " does not match profile input ",
                      g.input_size, "x", g.input_size);
  require<ShapeError>(depth.value().rank() == 4 && depth.dim(0) == rgb.dim(0) && depth.dim(1) == 1 &&
                          depth.dim(2) == g.input_size && depth.dim(3) == g.input_size,
                      "extract_and_separate: depth batch ", nn::shape_str(depth.shape()), " does not pair with RGB ",
                      nn::shape_str(rgb.shape()));
  auto features = [mode](auto& trunk, const Var& x) {
    if constexpr (std::is_const_v<std::remove_reference_t<decltype(trunk)>>)
      return trunk.features(x);
    else
      return trunk.features(x, mode);
  };
  Var xr = nn::flatten(features(streams.rgb_branch(), rgb));
  Var xd = nn::flatten(features(streams.depth_branch(), depth));
  require<ShapeError>(xr.dim(1) == heads.in_dim(), "flattened dim ", xr.dim(1), " != head input dim ",
                      heads.in_dim());
  return {heads.rgb_specific(xr), heads.rgb_shared(xr), heads.depth_shared(xd), heads.depth_specific(xd)};
}

}  // namespace detail

// X_i = Flatten(F_i(x_i)) in channel-major, row-major order, then the four
// projections. `mode` selects batch or running batch-norm statistics.
inline SeparatedEmbeddings extract_and_separate(const Var& rgb, const Var& depth, TwoStreamState& streams,
                                                const SeparationHeads& heads, Mode mode) {
  return detail::run_separation(streams, heads, rgb, depth, mode);
}

inline SeparatedEmbeddings extract_and_separate(const Var& rgb, const Var& depth, const TwoStreamState& streams,
                                                const SeparationHeads& heads) {
  return detail::run_separation(streams, heads, rgb, depth, Mode::Eval);
}

// Test-time descriptor: [rgb_specific, rgb_shared, depth_shared, depth_specific]
// per sample, shape (N, 4 * 512).
inline nn::Tensor test_embedding(const SeparatedEmbeddings& e) {
  const Var* parts[] = {&e.rgb_specific, &e.rgb_shared, &e.depth_shared, &e.depth_specific};
  const char* names[] = {"rgb_specific", "rgb_shared", "depth_shared", "depth_specific"};
  for (int k = 0; k < 4; ++k) {
    require<PreconditionError>(parts[k]->defined(), "test_embedding: missing ", names[k], " part");
    require<ShapeError>(parts[k]->value().rank() == 2 && parts[k]->shape() == parts[0]->shape(),
                        "test_embedding: part ", names[k], " has shape ", nn::shape_str(parts[k]->shape()));
  }
  const int N = parts[0]->dim(0), D = parts[0]->dim(1);
  nn::Tensor out({N, 4 * D});
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < 4; ++k)
      for (int d = 0; d < D; ++d) out.at(n, k * D + d) = parts[k]->value().at(n, d);
  return out;
}

}  // namespace rgbdface::fusion
