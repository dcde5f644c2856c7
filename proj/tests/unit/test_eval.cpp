#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "rgbdface/dataio/synthetic.hpp"
#include "rgbdface/eval/metrics.hpp"
#include "rgbdface/eval/pipeline.hpp"
#include "support/oracles.hpp"

using namespace rgbdface;
using namespace rgbdface::eval;
using dataio::Subset;
using nn::Tensor;

namespace {

std::vector<Subset> tags(std::size_t n) {
  std::vector<Subset> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(dataio::kAllSubsets[i % 5]);
  return out;
}

// Per-row exhaustive scan: first column holding the row maximum.
int scan_argmax(const std::vector<double>& row) {
  const double mx = *std::max_element(row.begin(), row.end());
  for (std::size_t j = 0; j < row.size(); ++j)
    if (row[j] == mx) return static_cast<int>(j);
  return -1;
}

}  // namespace

TEST(Mae, Examples) {
  std::mt19937_64 rng(37);
  const Tensor a = oracle::random_tensor({1, 1, 8, 8}, rng, 0.0, 0.9);
  const Tensor b = oracle::random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
  EXPECT_EQ(mae(a, a), 0.0);
  Tensor shifted = a;
  for (double& v : shifted.values()) v += 5.0 / 255.0;
  EXPECT_NEAR(mae(shifted, a), 5.0, 1e-10);
  double s = 0.0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) s += std::fabs(a.at(0, 0, i, j) - b.at(0, 0, i, j)) * 255.0;
  EXPECT_NEAR(mae(a, b), s / 64.0, 1e-10);
  EXPECT_THROW(mae(a, Tensor({1, 1, 8, 9})), ShapeError);
}

TEST(Mae, ConstantShiftIsLinear) {
  std::mt19937_64 rng(38);
  for (double c : {0.01, 0.05, 0.1}) {
    const Tensor a = oracle::random_tensor({2, 1, 8, 8}, rng, 0.0, 0.85);
    Tensor b = a;
    for (double& v : b.values()) v += c;
    EXPECT_NEAR(mae(b, a), c * 255.0, 1e-9);
  }
}

TEST(Similarity, Examples) {
  std::mt19937_64 rng(41);
  const Tensor p = oracle::random_tensor({3, 16}, rng);
  const Tensor g = oracle::random_tensor({2, 16}, rng);
  const SimilarityMatrix m = similarity_matrix(p, g);
  ASSERT_EQ(m.probes(), 3);
  ASSERT_EQ(m.gallery(), 2);
  const auto pr = oracle::rows(p), gr = oracle::rows(g);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(m.at(i, j), oracle::cosine(pr[i], gr[j]), 1e-6);

  const SimilarityMatrix self = similarity_matrix(g, g);
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(self.at(j, j), 1.0, 1e-15);

  Tensor gal({2, 4}), probe({1, 4});
  gal.at(0, 0) = 1.0, gal.at(1, 1) = 3.0;
  probe.at(0, 2) = 2.0, probe.at(0, 3) = -1.0;
  const SimilarityMatrix orth = similarity_matrix(probe, gal);
  EXPECT_EQ(orth.at(0, 0), 0.0);
  EXPECT_EQ(orth.at(0, 1), 0.0);
}

TEST(Similarity, RangeAndErrors) {
  std::mt19937_64 rng(42);
  const SimilarityMatrix m = similarity_matrix(oracle::random_tensor({20, 5}, rng), oracle::random_tensor({7, 5}, rng));
  for (double v : m.values.values()) ASSERT_TRUE(std::isfinite(v) && v >= -1.0 && v <= 1.0);

  Tensor p({3, 4}, 1.0);
  for (int d = 0; d < 4; ++d) p.at(1, d) = 0.0;
  try {
    similarity_matrix(p, Tensor({2, 4}, 1.0));
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("probe 1"), std::string::npos) << e.what();
  }
  Tensor g({2, 4}, 1.0);
  for (int d = 0; d < 4; ++d) g.at(1, d) = 0.0;
  try {
    similarity_matrix(Tensor({2, 4}, 1.0), g);
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("gallery 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(similarity_matrix(Tensor({2, 4}, 1.0), Tensor({2, 5}, 1.0)), ShapeError);
}

TEST(Rank1, IdenticalProbesScorePerfectly) {
  std::mt19937_64 rng(44);
  const Tensor g = oracle::random_tensor({5, 12}, rng);
  Tensor p({10, 12});
  std::vector<int> pl;
  for (int i = 0; i < 10; ++i) {
    for (int d = 0; d < 12; ++d) p.at(i, d) = g.at(i % 5, d);
    pl.push_back(i % 5);
  }
  const std::vector<int> gl{0, 1, 2, 3, 4};
  const auto sub = tags(10);
  const RankReport r = rank1_report(similarity_matrix(p, g), pl, gl, sub);
  EXPECT_EQ(r.overall_accuracy(), 100.0);
  EXPECT_EQ(r.per_subset.size(), 5u);
  for (const auto& [s, score] : r.per_subset) EXPECT_EQ(score.accuracy(), 100.0) << dataio::to_string(s);
}

TEST(Rank1, HandBuiltMatrix) {
  const SimilarityMatrix m{Tensor({2, 2}, std::vector<double>{0.9, 0.1, 0.8, 0.2})};
  const std::vector<int> pl{0, 1}, gl{0, 1};
  const std::vector<Subset> sub{Subset::NU, Subset::FE};
  const RankReport r = rank1_report(m, pl, gl, sub);
  EXPECT_EQ(r.overall.n_correct, 1);
  EXPECT_EQ(r.overall.n_total, 2);
  EXPECT_EQ(r.overall_accuracy(), 50.0);
  EXPECT_EQ(r.per_subset.at(Subset::NU).accuracy(), 100.0);
  EXPECT_EQ(r.per_subset.at(Subset::FE).accuracy(), 0.0);
  EXPECT_EQ(r.subset_mean_accuracy(), 50.0);
}

TEST(Rank1, TiesGoToLowestGalleryIndex) {
  const SimilarityMatrix m{Tensor({1, 3}, std::vector<double>{0.2, 0.7, 0.7})};
  const std::vector<int> pl{9}, gl{4, 9, 2};
  const std::vector<Subset> sub{Subset::OC};
  const RankReport r = rank1_report(m, pl, gl, sub);
  EXPECT_EQ(r.predicted_gallery[0], 1);
  EXPECT_EQ(r.overall.n_correct, 1);
}

TEST(Rank1, MatchesExhaustiveScan) {
  std::mt19937_64 rng(43);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int t = 0; t < 30; ++t) {
    const Tensor vals = oracle::random_tensor({6, 3}, rng);
    std::vector<int> gl{0, 1, 2};
    std::shuffle(gl.begin(), gl.end(), rng);
    std::vector<int> pl(6);
    for (int& l : pl) l = lab(rng);
    const auto sub = tags(6);
    const RankReport r = rank1_report(SimilarityMatrix{vals}, pl, gl, sub);
    int correct = 0;
    std::map<Subset, std::pair<int, int>> groups;
    const auto rows = oracle::rows(vals);
    for (int i = 0; i < 6; ++i) {
      const int j = scan_argmax(rows[i]);
      EXPECT_EQ(r.predicted_gallery[i], j);
      const bool ok = gl[j] == pl[i];
      correct += ok;
      groups[sub[i]].first += ok;
      groups[sub[i]].second += 1;
    }
    EXPECT_EQ(r.overall.n_correct, correct);
    EXPECT_NEAR(r.overall_accuracy(), 100.0 * correct / 6.0, 1e-12);
    for (const auto& [s, c] : groups) {
      EXPECT_EQ(r.per_subset.at(s).n_correct, c.first);
      EXPECT_EQ(r.per_subset.at(s).n_total, c.second);
    }
  }
}

TEST(Rank1, InvariancesAndConsistency) {
  std::mt19937_64 rng(45);
  std::uniform_real_distribution<double> pos(0.01, 50.0);
  for (int t = 0; t < 20; ++t) {
    const Tensor g = oracle::random_tensor({4, 8}, rng);
    Tensor p = oracle::random_tensor({9, 8}, rng);
    std::vector<int> pl(9);
    for (int i = 0; i < 9; ++i) pl[i] = i % 4;
    const std::vector<int> gl{0, 1, 2, 3};
    const auto sub = tags(9);
    const RankReport base = rank1_report(similarity_matrix(p, g), pl, gl, sub);

    Tensor scaled = p;
    for (int i = 0; i < 9; ++i) {
      const double a = pos(rng);
      for (int d = 0; d < 8; ++d) scaled.at(i, d) *= a;
    }
    const RankReport rs = rank1_report(similarity_matrix(scaled, g), pl, gl, sub);
    EXPECT_EQ(rs.predicted_gallery, base.predicted_gallery);
    EXPECT_EQ(format_report(rs), format_report(base));

    std::vector<int> perm{0, 1, 2, 3};
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor gp({4, 8});
    std::vector<int> glp(4);
    for (int j = 0; j < 4; ++j) {
      glp[j] = gl[perm[j]];
      for (int d = 0; d < 8; ++d) gp.at(j, d) = g.at(perm[j], d);
    }
    const RankReport rp = rank1_report(similarity_matrix(p, gp), pl, glp, sub);
    EXPECT_EQ(rp.overall.n_correct, base.overall.n_correct);
    for (const auto& [s, score] : base.per_subset) EXPECT_EQ(rp.per_subset.at(s).n_correct, score.n_correct);

    int sum_correct = 0, sum_total = 0;
    for (const auto& [s, score] : base.per_subset) {
      sum_correct += score.n_correct, sum_total += score.n_total;
      EXPECT_GE(score.accuracy(), 0.0);
      EXPECT_LE(score.accuracy(), 100.0);
    }
    EXPECT_EQ(sum_total, 9);
    EXPECT_EQ(sum_correct, base.overall.n_correct);
    EXPECT_DOUBLE_EQ(base.overall_accuracy(), 100.0 * sum_correct / sum_total);
  }
}

TEST(Rank1, Errors) {
  const SimilarityMatrix m{Tensor({1, 2}, std::vector<double>{0.1, 0.2})};
  const std::vector<int> pl{0}, dup{1, 1}, gl{0, 1}, short_gl{0};
  const std::vector<Subset> sub{Subset::NU};
  EXPECT_THROW(rank1_report(m, pl, dup, sub), ProtocolError);
  EXPECT_THROW(rank1_report(m, pl, short_gl, sub), ShapeError);
  const std::vector<int> two{0, 1};
  EXPECT_THROW(rank1_report(m, two, gl, sub), ShapeError);
}

TEST(Report, Format) {
  const SimilarityMatrix m{Tensor({3, 2}, std::vector<double>{0.9, 0.1, 0.8, 0.2, 0.1, 0.3})};
  const std::vector<int> pl{0, 1, 1}, gl{0, 1};
  const std::vector<Subset> sub{Subset::NU, Subset::NU, Subset::TM};
  const RankReport r = rank1_report(m, pl, gl, sub);
  EXPECT_EQ(format_report(r),
            "overall=66.6667\n"
            "avg.pooled=66.6667\n"
            "avg.subset_mean=75.0000\n"
            "n_correct=2\n"
            "n_total=3\n"
            "subset.NU=50.0000\n"
            "subset.NU.n_correct=1\n"
            "subset.NU.n_total=2\n"
            "subset.FE=n/a\n"
            "subset.OC=n/a\n"
            "subset.PS=n/a\n"
            "subset.TM=100.0000\n"
            "subset.TM.n_correct=1\n"
            "subset.TM.n_total=1\n");
  EXPECT_EQ(format_table(r), "NU,FE,OC,PS,TM,AVG\n50.0000,n/a,n/a,n/a,100.0000,75.0000\n");
}

TEST(Pipeline, EmbeddingsFeedTheReport) {
  const dataio::Dataset ds = dataio::generate_synthetic_dataset(2, 3, {}, {64, 64}, 46);
  const fusion::FusionModel model(geometry_for(Profile::Desk), 2, {}, 47);
  const dataio::EvalProtocol protocol = dataio::build_protocol(ds);
  const ProtocolResult res = evaluate_protocol(model, ds, protocol);
  ASSERT_EQ(res.gallery_embeddings.shape(), (nn::Shape{2, 2048}));
  ASSERT_EQ(res.probe_embeddings.shape(), (nn::Shape{4, 2048}));

  const Tensor all = embed_samples(model, ds, dataio::all_indices(ds), 4);
  EXPECT_TRUE(gather_rows(all, protocol.gallery_indices) == res.gallery_embeddings);
  EXPECT_TRUE(gather_rows(all, protocol.probe_indices) == res.probe_embeddings);

  const auto pl = dataio::labels_of(ds, protocol.probe_indices);
  const auto gl = dataio::labels_of(ds, protocol.gallery_indices);
  const auto sub = protocol.probe_subsets();
  const RankReport again =
      rank1_report(similarity_matrix(res.probe_embeddings, res.gallery_embeddings), pl, gl, sub);
  EXPECT_EQ(format_report(again), format_report(res.report));
  EXPECT_EQ(res.report.overall.n_total, 4);
}
