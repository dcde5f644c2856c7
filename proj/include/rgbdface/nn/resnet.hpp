#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rgbdface/nn/layers.hpp"

namespace rgbdface::nn {

inline Var apply_bn(BatchNorm2d& bn, const Var& x, Mode mode) {
  return mode == Mode::Train ? bn.train(x) : bn.eval(x);
}
inline Var apply_bn(const BatchNorm2d& bn, const Var& x, Mode mode) {
  require<PreconditionError>(mode == Mode::Eval, "training-mode forward on a const model");
  return bn.eval(x);
}

template <typename ConvBnT>
Var apply_conv_bn(ConvBnT& cb, const Var& x, Mode mode) {
  return apply_bn(cb.bn, cb.conv(x), mode);
}

// Two 3x3 conv-BN layers with an identity or 1x1 projection shortcut.
struct BasicBlock {
  ConvBn conv1;
  ConvBn conv2;
  std::optional<ConvBn> downsample;

  BasicBlock() = default;
  BasicBlock(int cin, int cout, int stride, std::mt19937_64& rng)
      : conv1(cin, cout, 3, stride, 1, rng), conv2(cout, cout, 3, 1, 1, rng) {
    if (stride != 1 || cin != cout) downsample.emplace(cin, cout, 1, stride, 0, rng);
  }

  template <typename Self>
  static Var run(Self& self, const Var& x, Mode mode) {
    Var y = relu(apply_conv_bn(self.conv1, x, mode));
    y = apply_conv_bn(self.conv2, y, mode);
    Var shortcut = self.downsample ? apply_conv_bn(*self.downsample, x, mode) : x;
    return relu(add(y, shortcut));
  }

  void visit(const StateVisitor& v, const std::string& prefix) {
    conv1.visit(v, prefix + ".conv1");
    conv2.visit(v, prefix + ".conv2");
    if (downsample) downsample->visit(v, prefix + ".downsample");
  }
};

// ResNet-18 convolutional trunk: 7x7/2 stem, 3x3/2 max-pool, four stages of
// two basic blocks (strides 1, 2, 2, 2). Output stride 32.
//
// Tap levels: 1 = stem activation (stride 2), 2..5 = after stages 1..4.
class ResNetTrunk {
 public:
  static constexpr int kMaxLevel = 5;

  ResNetTrunk(int in_channels, std::array<int, 4> widths, std::mt19937_64& rng)
      : in_channels_(in_channels), widths_(widths), stem_(in_channels, widths[0], 7, 2, 3, rng) {
    int cin = widths[0];
    for (int s = 0; s < 4; ++s) {
      const int stride = s == 0 ? 1 : 2;
      stages_[s][0] = BasicBlock(cin, widths[s], stride, rng);
      stages_[s][1] = BasicBlock(widths[s], widths[s], 1, rng);
      cin = widths[s];
    }
  }

  std::vector<Var> taps(const Var& x, Mode mode, int levels = kMaxLevel) { return run(*this, x, mode, levels); }
  std::vector<Var> taps(const Var& x, int levels = kMaxLevel) const { return run(*this, x, Mode::Eval, levels); }

  Var features(const Var& x, Mode mode) { return taps(x, mode).back(); }
  Var features(const Var& x) const { return taps(x).back(); }

  int in_channels() const { return in_channels_; }
  int out_channels() const { return widths_[3]; }
  const std::array<int, 4>& widths() const { return widths_; }

  void visit(const StateVisitor& v, const std::string& prefix) {
    stem_.visit(v, prefix + ".stem");
    for (int s = 0; s < 4; ++s)
      for (int b = 0; b < 2; ++b)
        stages_[s][b].visit(v, prefix + ".stage" + std::to_string(s + 1) + "." + std::to_string(b));
  }

 private:
  template <typename Self>
  static std::vector<Var> run(Self& self, const Var& x, Mode mode, int levels) {
    require<PreconditionError>(levels >= 1 && levels <= kMaxLevel, "tap level count ", levels, " outside [1, ",
                               kMaxLevel, "]");
    require<ShapeError>(x.value().rank() == 4 && x.dim(1) == self.in_channels_, "backbone expects (N, ",
                        self.in_channels_, ", H, W) input, got ", shape_str(x.shape()));
    std::vector<Var> out;
    Var y = relu(apply_conv_bn(self.stem_, x, mode));
    out.push_back(y);
    if (levels == 1) return out;
    y = max_pool2d(y, 3, 2, 1);
    for (int s = 0; s < 4 && static_cast<int>(out.size()) < levels; ++s) {
      y = BasicBlock::run(self.stages_[s][0], y, mode);
      y = BasicBlock::run(self.stages_[s][1], y, mode);
      out.push_back(y);
    }
    return out;
  }

  int in_channels_;
  std::array<int, 4> widths_;
  ConvBn stem_;
  std::array<std::array<BasicBlock, 2>, 4> stages_;
};

}  // namespace rgbdface::nn
