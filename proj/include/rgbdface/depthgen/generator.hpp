#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>

#include "rgbdface/nn/resnet.hpp"
#include "rgbdface/profile.hpp"

namespace rgbdface::depthgen {

using nn::Mode;
using nn::Var;

namespace detail {

struct DoubleConv {
  nn::ConvBn a;
  nn::ConvBn b;

  DoubleConv() = default;
  DoubleConv(int cin, int cout, std::mt19937_64& rng) : a(cin, cout, 3, 1, 1, rng), b(cout, cout, 3, 1, 1, rng) {}

  template <typename Self>
  static Var run(Self& self, const Var& x, Mode mode) {
    return nn::relu(nn::apply_conv_bn(self.b, nn::relu(nn::apply_conv_bn(self.a, x, mode)), mode));
  }

  void visit(const nn::StateVisitor& v, const std::string& prefix) {
    a.visit(v, prefix + ".a");
    b.visit(v, prefix + ".b");
  }
};

}  // namespace detail

// UNet-style encoder-decoder: five encoder levels (width doubling, 2x2 max-pool
// between them), nearest upsampling + 3x3 conv on the way up, skip
// concatenation, and a 1x1 head squashed by a sigmoid into [0, 1].
class GeneratorState {
 public:
  static constexpr int kLevels = 5;

  GeneratorState(const Geometry& geom, std::uint64_t seed)
      : base_(geom.generator_base), input_size_(geom.input_size) {
    std::mt19937_64 rng(seed);
    int cin = 3;
    for (int l = 0; l < kLevels; ++l) {
      encoders_[l] = detail::DoubleConv(cin, width(l), rng);
      cin = width(l);
    }
    for (int l = kLevels - 2; l >= 0; --l) {
      ups_[l] = nn::ConvBn(width(l + 1), width(l), 3, 1, 1, rng);
      decoders_[l] = detail::DoubleConv(2 * width(l), width(l), rng);
    }
    head_ = nn::Conv2d(width(0), 1, 1, 1, 0, true, rng);
  }

  Var forward(const Var& rgb, Mode mode) { return run(*this, rgb, mode); }
  Var forward(const Var& rgb) const { return run(*this, rgb, Mode::Eval); }

  int base_width() const { return base_; }
  // Square input resolution of the profile this generator was built for.
  int input_size() const { return input_size_; }

  void visit(const nn::StateVisitor& v) {
    for (int l = 0; l < kLevels; ++l) encoders_[l].visit(v, "generator.enc" + std::to_string(l));
    for (int l = 0; l < kLevels - 1; ++l) {
      ups_[l].visit(v, "generator.up" + std::to_string(l));
      decoders_[l].visit(v, "generator.dec" + std::to_string(l));
    }
    head_.visit(v, "generator.head");
  }

 private:
  int width(int level) const { return base_ << level; }

  template <typename Self>
  static Var run(Self& self, const Var& x, Mode mode) {
    require<ShapeError>(x.value().rank() == 4 && x.dim(1) == 3, "generator expects (N, 3, H, W) input, got ",
                        nn::shape_str(x.shape()));
    require<ShapeError>(x.dim(0) >= 1, "generator needs a non-empty batch");
    require<ShapeError>(x.dim(2) % 32 == 0 && x.dim(3) % 32 == 0, "generator input ", x.dim(2), "x", x.dim(3),
                        " is not divisible by 32");
    std::array<Var, kLevels> skips;
    Var y = x;
    for (int l = 0; l < kLevels; ++l) {
      if (l > 0) y = nn::max_pool2d(y, 2, 2, 0);
      y = detail::DoubleConv::run(self.encoders_[l], y, mode);
      skips[l] = y;
    }
    for (int l = kLevels - 2; l >= 0; --l) {
      y = nn::relu(nn::apply_conv_bn(self.ups_[l], nn::upsample_nearest2x(y), mode));
      y = detail::DoubleConv::run(self.decoders_[l], nn::concat_dim1({y, skips[l]}), mode);
    }
    return nn::sigmoid(self.head_(y));
  }

  int base_;
  int input_size_;
  std::array<detail::DoubleConv, kLevels> encoders_;
  std::array<nn::ConvBn, kLevels - 1> ups_;
  std::array<detail::DoubleConv, kLevels - 1> decoders_;
  nn::Conv2d head_;
};

// Y' = F_g(X): one depth map per RGB input, same spatial size, values in [0, 1].
inline Var generate_depth(const Var& rgb, GeneratorState& gen, Mode mode) { return gen.forward(rgb, mode); }
inline Var generate_depth(const Var& rgb, const GeneratorState& gen) { return gen.forward(rgb); }

}  // namespace rgbdface::depthgen
