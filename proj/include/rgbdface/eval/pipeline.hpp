#pragma once

#include <algorithm>
#include <vector>

#include "rgbdface/dataio/protocol.hpp"
#include "rgbdface/eval/metrics.hpp"
#include "rgbdface/fusion/model.hpp"

namespace rgbdface::eval {

// Test-time 2048-d descriptors (eval-mode batch norm) for the given samples,
// one row per index.
inline nn::Tensor embed_samples(const fusion::FusionModel& model, const dataio::Dataset& ds,
                                const std::vector<std::size_t>& indices, int chunk = 16) {
  nn::NoGradGuard guard;
  const int D = 4 * model.heads.out_dim();
  nn::Tensor out({static_cast<int>(indices.size()), D});
  for (std::size_t b = 0; b < indices.size(); b += static_cast<std::size_t>(chunk)) {
    const std::vector<std::size_t> part(indices.begin() + static_cast<std::ptrdiff_t>(b),
                                        indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), b + chunk)));
    const nn::Var rgb(dataio::rgb_batch(ds, part));
    const nn::Var depth(dataio::depth_batch(ds, part));
    const fusion::SeparatedEmbeddings e = fusion::extract_and_separate(rgb, depth, model.streams, model.heads);
    const nn::Tensor t = fusion::test_embedding(e);
    std::copy(t.values().begin(), t.values().end(), out.data() + b * static_cast<std::size_t>(D));
  }
  return out;
}

inline nn::Tensor gather_rows(const nn::Tensor& m, const std::vector<std::size_t>& rows) {
  nn::Tensor out({static_cast<int>(rows.size()), m.dim(1)});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(m.data() + rows[r] * m.dim(1), m.data() + (rows[r] + 1) * m.dim(1), out.data() + r * m.dim(1));
  return out;
}

struct ProtocolResult {
  RankReport report;
  nn::Tensor gallery_embeddings;
  nn::Tensor probe_embeddings;
};

// Embeds gallery and probes, matches by cosine similarity, scores rank-1.
inline ProtocolResult evaluate_protocol(const fusion::FusionModel& model, const dataio::Dataset& ds,
                                        const dataio::EvalProtocol& protocol) {
  require<ProtocolError>(!protocol.gallery_indices.empty(), "evaluation protocol has an empty gallery");
  require<ProtocolError>(!protocol.probe_indices.empty(), "evaluation protocol has no probes");
  ProtocolResult r;
  r.gallery_embeddings = embed_samples(model, ds, protocol.gallery_indices);
  r.probe_embeddings = embed_samples(model, ds, protocol.probe_indices);
  const SimilarityMatrix sim = similarity_matrix(r.probe_embeddings, r.gallery_embeddings);
  const std::vector<int> pl = dataio::labels_of(ds, protocol.probe_indices);
  const std::vector<int> gl = dataio::labels_of(ds, protocol.gallery_indices);
  const std::vector<Subset> subsets = protocol.probe_subsets();
  r.report = rank1_report(sim, pl, gl, subsets);
  return r;
}

}  // namespace rgbdface::eval
