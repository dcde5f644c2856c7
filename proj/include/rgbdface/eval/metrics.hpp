#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rgbdface/dataio/types.hpp"
#include "rgbdface/nn/ops.hpp"

namespace rgbdface::eval {

using dataio::Subset;

// Mean absolute difference on a 0..scale pixel scale.
inline double mae(const nn::Tensor& generated, const nn::Tensor& ground_truth, double scale = 255.0) {
  nn::require_same_shape(generated, ground_truth, "mae");
  require<ShapeError>(generated.size() > 0, "mae of empty maps");
  double s = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) s += std::abs(generated[i] - ground_truth[i]);
  return scale * s / static_cast<double>(generated.size());
}

// (num_probe, num_gallery) cosine similarities, rows in probe order.
struct SimilarityMatrix {
  nn::Tensor values;

  int probes() const { return values.dim(0); }
  int gallery() const { return values.dim(1); }
  double at(int i, int j) const { return values.at(i, j); }
};

// Embeddings are (count, dim) row matrices.
inline SimilarityMatrix similarity_matrix(const nn::Tensor& probe, const nn::Tensor& gallery) {
  require<ShapeError>(probe.rank() == 2 && gallery.rank() == 2 && probe.dim(1) == gallery.dim(1),
                      "similarity_matrix: probe ", nn::shape_str(probe.shape()), " vs gallery ",
                      nn::shape_str(gallery.shape()));
  auto normalized = [](const nn::Tensor& e, const char* what) {
    nn::Tensor out = e;
    const int D = e.dim(1);
    for (int i = 0; i < e.dim(0); ++i) {
      double s = 0.0;
      for (int d = 0; d < D; ++d) s += e.at(i, d) * e.at(i, d);
      require<PreconditionError>(s > 0.0 && std::isfinite(s), "similarity_matrix: ", what, " ", i,
                                 " has zero or non-finite norm");
      const double inv = 1.0 / std::sqrt(s);
      for (int d = 0; d < D; ++d) out.at(i, d) *= inv;
    }
    return out;
  };
  const nn::Tensor p = normalized(probe, "probe");
  const nn::Tensor g = normalized(gallery, "gallery");
  SimilarityMatrix m{nn::Tensor({probe.dim(0), gallery.dim(0)})};
  if (probe.dim(0) > 0 && gallery.dim(0) > 0)
    nn::detail::MatMap(m.values.data(), probe.dim(0), gallery.dim(0)).noalias() =
        nn::detail::ConstMatMap(p.data(), probe.dim(0), p.dim(1)) *
        nn::detail::ConstMatMap(g.data(), gallery.dim(0), g.dim(1)).transpose();
  for (double& v : m.values.values()) v = std::clamp(v, -1.0, 1.0);
  return m;
}

struct GroupScore {
  int n_correct = 0;
  int n_total = 0;
  double accuracy() const { return n_total ? 100.0 * n_correct / n_total : 0.0; }
};

struct RankReport {
  GroupScore overall;
  std::map<Subset, GroupScore> per_subset;  // only subsets that have probes
  std::vector<int> predicted_gallery;       // argmax column per probe

  double overall_accuracy() const { return overall.accuracy(); }
  // Unweighted mean over subsets that have probes.
  double subset_mean_accuracy() const {
    if (per_subset.empty()) return 0.0;
    double s = 0.0;
    for (const auto& [_, g] : per_subset) s += g.accuracy();
    return s / static_cast<double>(per_subset.size());
  }
};

// Probe i is correct iff gallery_labels[argmax_j S(i, j)] == probe_labels[i];
// ties go to the lowest gallery index.
inline RankReport rank1_report(const SimilarityMatrix& m, std::span<const int> probe_labels,
                               std::span<const int> gallery_labels, std::span<const Subset> probe_subsets) {
  require<ShapeError>(m.values.rank() == 2, "rank1_report: similarity matrix must be 2-D");
  require<ShapeError>(static_cast<std::size_t>(m.probes()) == probe_labels.size() &&
                          probe_labels.size() == probe_subsets.size(),
                      "rank1_report: ", m.probes(), " matrix rows vs ", probe_labels.size(), " probe labels and ",
                      probe_subsets.size(), " subset tags");
  require<ShapeError>(static_cast<std::size_t>(m.gallery()) == gallery_labels.size(), "rank1_report: ",
                      m.gallery(), " matrix columns vs ", gallery_labels.size(), " gallery labels");
  require<ShapeError>(m.gallery() > 0 || m.probes() == 0, "rank1_report: empty gallery");
  std::set<int> seen;
  for (std::size_t j = 0; j < gallery_labels.size(); ++j)
    require<ProtocolError>(seen.insert(gallery_labels[j]).second, "rank1_report: duplicate gallery label ",
                           gallery_labels[j], " at gallery index ", j);

  RankReport r;
  r.predicted_gallery.resize(probe_labels.size());
  for (int i = 0; i < m.probes(); ++i) {
    int best = 0;
    for (int j = 1; j < m.gallery(); ++j)
      if (m.at(i, j) > m.at(i, best)) best = j;
    r.predicted_gallery[i] = best;
    const bool ok = gallery_labels[best] == probe_labels[i];
    GroupScore& g = r.per_subset[probe_subsets[i]];
    ++g.n_total;
    ++r.overall.n_total;
    if (ok) ++g.n_correct, ++r.overall.n_correct;
  }
  return r;
}

namespace detail {
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}
}  // namespace detail

// key=value lines; subsets without probes read `n/a`.
inline std::string format_report(const RankReport& r) {
  std::ostringstream out;
  out << "overall=" << detail::fmt(r.overall_accuracy()) << '\n';
  out << "avg.pooled=" << detail::fmt(r.overall_accuracy()) << '\n';
  out << "avg.subset_mean=" << detail::fmt(r.subset_mean_accuracy()) << '\n';
  out << "n_correct=" << r.overall.n_correct << '\n' << "n_total=" << r.overall.n_total << '\n';
  for (Subset s : dataio::kAllSubsets) {
    auto it = r.per_subset.find(s);
    const std::string tag(dataio::to_string(s));
    if (it == r.per_subset.end()) {
      out << "subset." << tag << "=n/a\n";
      continue;
    }
    out << "subset." << tag << '=' << detail::fmt(it->second.accuracy()) << '\n';
    out << "subset." << tag << ".n_correct=" << it->second.n_correct << '\n';
    out << "subset." << tag << ".n_total=" << it->second.n_total << '\n';
  }
  return out.str();
}

// Two-row table in NU, FE, OC, PS, TM, AVG column order; AVG is the subset mean.
inline std::string format_table(const RankReport& r) {
  std::ostringstream out;
  out << "NU,FE,OC,PS,TM,AVG\n";
  for (Subset s : dataio::kAllSubsets) {
    auto it = r.per_subset.find(s);
    out << (it == r.per_subset.end() ? std::string("n/a") : detail::fmt(it->second.accuracy())) << ',';
  }
  out << detail::fmt(r.subset_mean_accuracy()) << '\n';
  return out.str();
}

}  // namespace rgbdface::eval
