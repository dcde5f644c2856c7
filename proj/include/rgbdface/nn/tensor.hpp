#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rgbdface/error.hpp"

namespace rgbdface::nn {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Dense row-major double tensor. Images are NCHW, matrices (rows, cols).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    for (int d : shape_) require<ShapeError>(d >= 0, "negative tensor dim in ", shape_str(shape_));
  }
  Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    require<ShapeError>(data_.size() == shape_numel(shape_), "tensor data size ", data_.size(),
                        " does not match shape ", shape_str(shape_));
  }

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  double item() const {
    require<ShapeError>(data_.size() == 1, "item() on tensor of shape ", shape_str(shape_));
    return data_[0];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    require<ShapeError>(shape_numel(shape) == data_.size(), "cannot reshape ", shape_str(shape_), " to ",
                        shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  // Copy of samples [begin, end) along the leading dimension.
  Tensor slice_batch(int begin, int end) const {
    require<ShapeError>(rank() >= 1 && begin >= 0 && begin <= end && end <= shape_[0], "bad batch slice [",
                        begin, ", ", end, ") of ", shape_str(shape_));
    Shape s = shape_;
    s[0] = end - begin;
    const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
    return Tensor(std::move(s), std::vector<double>(data_.begin() + begin * stride, data_.begin() + end * stride));
  }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Shape shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  require<ShapeError>(a.shape() == b.shape(), what, ": shape mismatch ", shape_str(a.shape()), " vs ",
                      shape_str(b.shape()));
}

// Stacks equally shaped tensors along a new leading dimension.
inline Tensor stack(std::span<const Tensor* const> items) {
  require<ShapeError>(!items.empty(), "stack of zero tensors");
  Shape s = items[0]->shape();
  std::vector<double> out;
  out.reserve(items.size() * items[0]->size());
  for (const Tensor* t : items) {
    require_same_shape(*items[0], *t, "stack");
    out.insert(out.end(), t->values().begin(), t->values().end());
  }
  s.insert(s.begin(), static_cast<int>(items.size()));
  return Tensor(std::move(s), std::move(out));
}

}  // namespace rgbdface::nn
