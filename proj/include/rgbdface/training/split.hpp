#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "rgbdface/dataio/types.hpp"
#include "rgbdface/training/config.hpp"

namespace rgbdface::training {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Last ceil(fraction * identity_count) identities (by label) go to validation.
inline Split identity_holdout(const dataio::Dataset& ds, double fraction) {
  require<PreconditionError>(ds.identity_count >= 2, "identity holdout needs >= 2 identities, got ",
                             ds.identity_count);
  const int k = std::max(1, static_cast<int>(std::ceil(fraction * ds.identity_count - 1e-9)));
  require<PreconditionError>(k < ds.identity_count, "holdout of ", k, " identities leaves none for training");
  const int first_val = ds.identity_count - k;
  Split s;
  for (std::size_t i = 0; i < ds.size(); ++i)
    (ds.samples[i].identity >= first_val ? s.val : s.train).push_back(i);
  return s;
}

// Per identity, the last ceil(fraction * n) samples (by index) go to validation.
inline Split sample_holdout(const dataio::Dataset& ds, double fraction) {
  std::vector<std::vector<std::size_t>> by_id(static_cast<std::size_t>(ds.identity_count));
  for (std::size_t i = 0; i < ds.size(); ++i) by_id[ds.samples[i].identity].push_back(i);
  Split s;
  for (int id = 0; id < ds.identity_count; ++id) {
    const auto& m = by_id[id];
    require<PreconditionError>(m.size() >= 2, "identity ", id, " has ", m.size(),
                               " samples; sample holdout needs >= 2");
    const std::size_t k = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(m.size()) - 1e-9)), 1, m.size() - 1);
    s.train.insert(s.train.end(), m.begin(), m.end() - static_cast<std::ptrdiff_t>(k));
    s.val.insert(s.val.end(), m.end() - static_cast<std::ptrdiff_t>(k), m.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

// Sample order for one epoch, a pure function of (seed, stage, epoch).
inline std::vector<std::size_t> epoch_order(std::vector<std::size_t> indices, std::uint64_t seed, Stage stage,
                                            int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xFFFFFFFFu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(indices.begin(), indices.end(), rng);
  return indices;
}

inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(batch_size))
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + batch_size)));
  return out;
}

// Derived sub-seeds so model parts and shuffling draw from distinct streams.
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xFFFFFFFFu), static_cast<std::uint32_t>(seed >> 32), tag};
  std::mt19937_64 rng(seq);
  return rng();
}

}  // namespace rgbdface::training
