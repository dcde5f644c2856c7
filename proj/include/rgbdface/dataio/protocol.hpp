#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <vector>

#include "rgbdface/dataio/types.hpp"

namespace rgbdface::dataio {

struct EvalProtocol {
  std::vector<std::size_t> gallery_indices;  // one per identity, ascending identity
  std::vector<std::size_t> probe_indices;    // ascending sample index
  std::map<std::size_t, Subset> subset_of;   // probe index -> subset tag

  std::vector<Subset> probe_subsets() const {
    std::vector<Subset> out;
    out.reserve(probe_indices.size());
    for (std::size_t i : probe_indices) out.push_back(subset_of.at(i));
    return out;
  }
};

struct GalleryRule {
  Subset preferred_subset = Subset::NU;
  Session preferred_session = Session::S1;
  // Permit identities with a single sample (gallery only, no probes).
  bool allow_gallery_only = false;
};

// Gallery: per identity the first (preferred subset, preferred session) sample,
// else the identity's lowest-index sample. Everything else is a probe. When
// `indices` is given only those samples take part.
inline EvalProtocol build_protocol(const Dataset& ds, const GalleryRule& rule = {},
                                   std::optional<std::vector<std::size_t>> indices = std::nullopt) {
  const std::vector<std::size_t> idx = indices ? *indices : all_indices(ds);
  std::vector<std::vector<std::size_t>> by_id(static_cast<std::size_t>(ds.identity_count));
  for (std::size_t i : idx) {
    require<ProtocolError>(i < ds.size(), "sample index ", i, " out of range");
    const int id = ds.samples[i].identity;
    require<ProtocolError>(id >= 0 && id < ds.identity_count, "sample ", i, " has identity ", id,
                           " outside declared range [0, ", ds.identity_count, ")");
    by_id[id].push_back(i);
  }

  EvalProtocol p;
  for (int id = 0; id < ds.identity_count; ++id) {
    auto& members = by_id[id];
    if (members.empty()) {
      // With an explicit subset, identities absent from it are simply not enrolled.
      require<ProtocolError>(indices.has_value(), "identity ", id, " has no samples");
      continue;
    }
    std::sort(members.begin(), members.end());
    require<ProtocolError>(rule.allow_gallery_only || members.size() >= 2, "identity ", id,
                           " has a single sample; no probe would remain");
    std::size_t chosen = members.front();
    for (std::size_t i : members)
      if (ds.samples[i].subset == rule.preferred_subset && ds.samples[i].session == rule.preferred_session) {
        chosen = i;
        break;
      }
    p.gallery_indices.push_back(chosen);
    for (std::size_t i : members)
      if (i != chosen) p.probe_indices.push_back(i);
  }
  std::sort(p.probe_indices.begin(), p.probe_indices.end());
  for (std::size_t i : p.probe_indices) p.subset_of[i] = ds.samples[i].subset;
  return p;
}

}  // namespace rgbdface::dataio
