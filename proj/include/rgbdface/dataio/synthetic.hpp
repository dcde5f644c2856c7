#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "rgbdface/checksum.hpp"
#include "rgbdface/dataio/types.hpp"

namespace rgbdface::dataio {

struct Resolution {
  int height = 64;
  int width = 64;
};

// Per-subset perturbation magnitudes. `cycle` lists the subset tags assigned
// round-robin to each identity's samples.
struct VariationSpec {
  double expression = 0.25;    // relative bump-amplitude jitter (FE)
  double occlusion = 0.35;     // occluder side as a fraction of the image (OC)
  double pose = 0.5;           // 1.0 = +-30 degrees in-plane rotation plus shift (PS)
  double time = 0.3;           // global parameter drift (TM, session S2)
  double illumination = 0.25;  // light-direction jitter on every non-NU sample
  double noise = 0.01;         // per-pixel RGB noise std
  std::vector<Subset> cycle{kAllSubsets.begin(), kAllSubsets.end()};
};

inline constexpr std::int64_t kMaxSeed = 0xFFFFFFFFLL;

namespace detail {

struct Bump {
  double cx, cy, sx, sy, amp;
};

struct FaceParams {
  double head_a, head_b, head_cy, dome;
  std::vector<Bump> bumps;
  std::array<double, 3> albedo;
  std::array<double, 3> light;  // unnormalized (x, y, z)
  std::array<double, 3> drift;  // TM: center shift (x, y) and amplitude scale
};

struct Pose {
  double angle = 0.0, tx = 0.0, ty = 0.0;
};

struct Occluder {
  bool active = false;
  double u0 = 0, v0 = 0, u1 = 0, v1 = 0;
};

inline std::mt19937_64 make_rng(std::int64_t seed, std::uint32_t a, std::uint32_t b) {
  const auto s = static_cast<std::uint64_t>(seed);
  std::seed_seq seq{static_cast<std::uint32_t>(s & 0xFFFFFFFFu), static_cast<std::uint32_t>(s >> 32), a, b,
                    0x5eedu};
  return std::mt19937_64(seq);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline FaceParams identity_params(std::int64_t seed, int identity) {
  auto rng = make_rng(seed, static_cast<std::uint32_t>(identity), 0xFFFFFFFFu);
  FaceParams p;
  p.head_a = uniform(rng, 0.55, 0.75);
  p.head_b = uniform(rng, 0.72, 0.92);
  p.head_cy = uniform(rng, -0.06, 0.06);
  p.dome = uniform(rng, 0.45, 0.85);
  const int n_bumps = 2 + static_cast<int>(rng() % 3);
  for (int k = 0; k < n_bumps; ++k)
    p.bumps.push_back({uniform(rng, -0.4, 0.4), uniform(rng, -0.5, 0.5), uniform(rng, 0.08, 0.3),
                       uniform(rng, 0.08, 0.3), uniform(rng, -0.3, 0.45)});
  for (double& c : p.albedo) c = uniform(rng, 0.35, 0.95);
  p.light = {uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), 1.0};
  const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  p.drift = {0.15 * std::cos(ang), 0.15 * std::sin(ang), uniform(rng, -0.4, 0.4)};
  return p;
}

inline double height_at(const FaceParams& p, double u, double v, bool& inside) {
  const double du = u / p.head_a, dv = (v - p.head_cy) / p.head_b;
  const double r2 = du * du + dv * dv;
  inside = r2 < 1.0;
  if (!inside) return 0.0;
  double h = p.dome * std::sqrt(1.0 - r2);
  for (const Bump& b : p.bumps) {
    const double x = (u - b.cx) / b.sx, y = (v - b.cy) / b.sy;
    h += b.amp * std::exp(-0.5 * (x * x + y * y));
  }
  return h;
}

inline void render(const FaceParams& p, const Pose& pose, const Occluder& occ, const Resolution& res, double noise,
                   std::mt19937_64& rng, nn::Tensor& rgb, nn::Tensor& depth) {
  const int H = res.height, W = res.width;
  rgb = nn::Tensor({3, H, W});
  depth = nn::Tensor({1, H, W});
  const double ca = std::cos(pose.angle), sa = std::sin(pose.angle);
  const double ln = std::sqrt(p.light[0] * p.light[0] + p.light[1] * p.light[1] + p.light[2] * p.light[2]);
  const std::array<double, 3> l{p.light[0] / ln, p.light[1] / ln, p.light[2] / ln};
  const std::array<double, 3> background{0.12, 0.12, 0.14};
  const double step = 1.0 / std::max(H, W);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const double u0 = (2.0 * (j + 0.5) / W) - 1.0;
      const double v0 = (2.0 * (i + 0.5) / H) - 1.0;
      // Inverse pose: sample the canonical face at the un-rotated location.
      const double u = ca * (u0 - pose.tx) + sa * (v0 - pose.ty);
      const double v = -sa * (u0 - pose.tx) + ca * (v0 - pose.ty);
      bool inside = false;
      const double h = height_at(p, u, v, inside);
      std::array<double, 3> color = background;
      double d = 0.0;
      if (inside) {
        bool tmp = false;
        const double hx = (height_at(p, u + step, v, tmp) - height_at(p, u - step, v, tmp)) / (2 * step);
        const double hy = (height_at(p, u, v + step, tmp) - height_at(p, u, v - step, tmp)) / (2 * step);
        const double nn_len = std::sqrt(hx * hx + hy * hy + 1.0);
        const double lambert = std::max(0.0, (-hx * l[0] - hy * l[1] + l[2]) / nn_len);
        const double shade = 0.2 + 0.8 * lambert;
        for (int c = 0; c < 3; ++c) color[c] = p.albedo[c] * shade;
        d = std::clamp(0.25 + 0.55 * h, 0.0, 1.0);
      }
      if (occ.active && u0 >= occ.u0 && u0 <= occ.u1 && v0 >= occ.v0 && v0 <= occ.v1) {
        color = {0.35, 0.28, 0.22};
        d = 0.9;
      }
      for (int c = 0; c < 3; ++c) {
        const double n = noise > 0.0 ? noise * gauss(rng) : 0.0;
        rgb[(static_cast<std::size_t>(c) * H + i) * W + j] = std::clamp(color[c] + n, 0.0, 1.0);
      }
      depth[static_cast<std::size_t>(i) * W + j] = d;
    }
}

}  // namespace detail

inline std::uint64_t synthesis_digest(int num_identities, int samples_per_identity, const VariationSpec& spec,
                                      const Resolution& res, std::int64_t seed) {
  std::ostringstream oss;
  oss.precision(17);
  oss << "synth:v1:ids=" << num_identities << ":per=" << samples_per_identity << ":res=" << res.height << "x"
      << res.width << ":seed=" << seed << ":fe=" << spec.expression << ":oc=" << spec.occlusion
      << ":ps=" << spec.pose << ":tm=" << spec.time << ":il=" << spec.illumination << ":nz=" << spec.noise
      << ":cycle=";
  for (Subset s : spec.cycle) oss << to_string(s);
  Fnv1a h;
  h.update(oss.str());
  return h.digest();
}

// Procedural paired RGB-D corpus. Each identity is a smooth height field (a
// head dome plus 2-4 anisotropic Gaussian bumps); depth is the height field and
// RGB is its Lambertian shading under an identity-specific light and albedo.
// Every sample draws from its own (seed, identity, index) sub-seed, so output
// does not depend on generation order.
inline Dataset generate_synthetic_dataset(int num_identities, int samples_per_identity, const VariationSpec& spec,
                                          const Resolution& res, std::int64_t seed) {
  require<PreconditionError>(num_identities >= 1, "num_identities must be >= 1, got ", num_identities);
  require<PreconditionError>(samples_per_identity >= 1, "samples_per_identity must be >= 1, got ",
                             samples_per_identity);
  require<PreconditionError>(res.height > 0 && res.width > 0 && res.height % kSpatialQuantum == 0 &&
                                 res.width % kSpatialQuantum == 0,
                             "resolution ", res.height, "x", res.width, " is not divisible by 32");
  require<PreconditionError>(seed >= 0 && seed <= kMaxSeed, "seed ", seed, " outside [0, ", kMaxSeed, "]");
  require<PreconditionError>(!spec.cycle.empty(), "variation cycle must list at least one subset");

  Dataset ds;
  ds.identity_count = num_identities;
  ds.manifest_digest = synthesis_digest(num_identities, samples_per_identity, spec, res, seed);
  ds.samples.reserve(static_cast<std::size_t>(num_identities) * samples_per_identity);

  for (int id = 0; id < num_identities; ++id) {
    const detail::FaceParams base = detail::identity_params(seed, id);
    for (int k = 0; k < samples_per_identity; ++k) {
      auto rng = detail::make_rng(seed, static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(k));
      const Subset subset = spec.cycle[static_cast<std::size_t>(k) % spec.cycle.size()];
      detail::FaceParams p = base;
      detail::Pose pose;
      detail::Occluder occ;
      if (subset != Subset::NU) {
        p.light[0] += spec.illumination * detail::uniform(rng, -1.0, 1.0);
        p.light[1] += spec.illumination * detail::uniform(rng, -1.0, 1.0);
      }
      switch (subset) {
        case Subset::NU:
          break;
        case Subset::FE: {
          std::normal_distribution<double> g(0.0, 1.0);
          for (auto& b : p.bumps) b.amp *= std::clamp(1.0 + spec.expression * g(rng), 0.0, 2.0);
          break;
        }
        case Subset::OC: {
          const double side_u = spec.occlusion * detail::uniform(rng, 1.0, 2.0);
          const double side_v = spec.occlusion * detail::uniform(rng, 1.0, 2.0);
          const double cu = detail::uniform(rng, -0.5, 0.5), cv = detail::uniform(rng, -0.3, 0.6);
          occ = {true, cu - side_u / 2, cv - side_v / 2, cu + side_u / 2, cv + side_v / 2};
          break;
        }
        case Subset::PS:
          pose.angle = spec.pose * detail::uniform(rng, -1.0, 1.0) * std::numbers::pi / 6.0;
          pose.tx = spec.pose * detail::uniform(rng, -0.1, 0.1);
          pose.ty = spec.pose * detail::uniform(rng, -0.1, 0.1);
          break;
        case Subset::TM:
          for (auto& b : p.bumps) {
            b.cx += spec.time * p.drift[0];
            b.cy += spec.time * p.drift[1];
            b.amp *= 1.0 + spec.time * p.drift[2];
          }
          for (double& c : p.albedo) c = std::clamp(c * (1.0 - 0.3 * spec.time), 0.0, 1.0);
          p.dome *= 1.0 - 0.2 * spec.time;
          break;
      }
      nn::Tensor rgb, depth;
      detail::render(p, pose, occ, res, spec.noise, rng, rgb, depth);
      ds.samples.push_back({RgbImage(std::move(rgb)), DepthMap(std::move(depth)), id, subset,
                            subset == Subset::TM ? Session::S2 : Session::S1});
    }
  }
  return ds;
}

}  // namespace rgbdface::dataio
