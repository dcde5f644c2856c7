#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rgbdface/error.hpp"
#include "rgbdface/nn/tensor.hpp"

namespace rgbdface::dataio {

// Probe-variation categories: neutral, expression, occlusion, pose, time-lapse.
enum class Subset { NU, FE, OC, PS, TM };
enum class Session { S1, S2 };

inline constexpr std::array<Subset, 5> kAllSubsets{Subset::NU, Subset::FE, Subset::OC, Subset::PS, Subset::TM};

inline std::string_view to_string(Subset s) {
  switch (s) {
    case Subset::NU: return "NU";
    case Subset::FE: return "FE";
    case Subset::OC: return "OC";
    case Subset::PS: return "PS";
    case Subset::TM: return "TM";
  }
  return "?";
}

inline std::string_view to_string(Session s) { return s == Session::S1 ? "S1" : "S2"; }

inline std::optional<Subset> parse_subset(std::string_view s) {
  for (Subset t : kAllSubsets)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

inline std::optional<Session> parse_session(std::string_view s) {
  if (s == "S1") return Session::S1;
  if (s == "S2") return Session::S2;
  return std::nullopt;
}

inline constexpr int kSpatialQuantum = 32;

namespace detail {

inline void check_unit_range(const nn::Tensor& t, const char* what) {
  for (double v : t.values())
    require<PreconditionError>(std::isfinite(v) && v >= 0.0 && v <= 1.0, what, " pixel ", v, " outside [0, 1]");
}

}  // namespace detail

// 3-channel image, (3, H, W), values in [0, 1].
class RgbImage {
 public:
  RgbImage() = default;
  explicit RgbImage(nn::Tensor pixels) : pixels_(std::move(pixels)) {
    require<ShapeError>(pixels_.rank() == 3 && pixels_.dim(0) == 3, "RgbImage must be (3, H, W), got ",
                        nn::shape_str(pixels_.shape()));
    require<ShapeError>(height() % kSpatialQuantum == 0 && width() % kSpatialQuantum == 0,
                        "RgbImage dims must be divisible by 32, got ", height(), "x", width());
    detail::check_unit_range(pixels_, "RgbImage");
  }
  const nn::Tensor& pixels() const { return pixels_; }
  int height() const { return pixels_.dim(1); }
  int width() const { return pixels_.dim(2); }

 private:
  nn::Tensor pixels_;
};

// Single-channel depth, (1, H, W), values in [0, 1]; 0 is background/far.
class DepthMap {
 public:
  DepthMap() = default;
  explicit DepthMap(nn::Tensor pixels) : pixels_(std::move(pixels)) {
    require<ShapeError>(pixels_.rank() == 3 && pixels_.dim(0) == 1, "DepthMap must be (1, H, W), got ",
                        nn::shape_str(pixels_.shape()));
    detail::check_unit_range(pixels_, "DepthMap");
  }
  const nn::Tensor& pixels() const { return pixels_; }
  int height() const { return pixels_.dim(1); }
  int width() const { return pixels_.dim(2); }

 private:
  nn::Tensor pixels_;
};

struct RgbdSample {
  RgbImage rgb;
  DepthMap depth;
  int identity = 0;
  Subset subset = Subset::NU;
  Session session = Session::S1;
};

// Immutable after construction; samples kept in deterministic order.
struct Dataset {
  std::vector<RgbdSample> samples;
  int identity_count = 0;
  std::uint64_t manifest_digest = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  int height() const { return samples.empty() ? 0 : samples.front().rgb.height(); }
  int width() const { return samples.empty() ? 0 : samples.front().rgb.width(); }
};

inline std::vector<int> labels_of(const Dataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(ds.samples[i].identity);
  return out;
}

// Stacks the RGB images / depth maps of the given samples into NCHW batches.
inline nn::Tensor rgb_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<const nn::Tensor*> items;
  for (std::size_t i : indices) items.push_back(&ds.samples[i].rgb.pixels());
  return nn::stack(items);
}

inline nn::Tensor depth_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<const nn::Tensor*> items;
  for (std::size_t i : indices) items.push_back(&ds.samples[i].depth.pixels());
  return nn::stack(items);
}

inline std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

}  // namespace rgbdface::dataio
