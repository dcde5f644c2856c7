#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "rgbdface/dataio/manifest.hpp"
#include "rgbdface/dataio/protocol.hpp"
#include "rgbdface/dataio/synthetic.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace rgbdface;
using namespace rgbdface::dataio;
using testing_support::TempDir;

namespace {

const Resolution k64{64, 64};

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string load_error_message(const std::filesystem::path& p) {
  try {
    load_dataset(p);
  } catch (const LoadError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Synthetic, SingleSample) {
  const Dataset ds = generate_synthetic_dataset(1, 1, {}, k64, 7);
  EXPECT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.identity_count, 1);
  EXPECT_EQ(ds.height(), 64);
  EXPECT_EQ(ds.width(), 64);
}

TEST(Synthetic, DeterministicBytes) {
  const Dataset a = generate_synthetic_dataset(5, 4, {}, k64, 3);
  const Dataset b = generate_synthetic_dataset(5, 4, {}, k64, 3);
  ASSERT_EQ(a.size(), 20u);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a.manifest_digest, b.manifest_digest);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a.samples[i].rgb.pixels() == b.samples[i].rgb.pixels());
    EXPECT_TRUE(a.samples[i].depth.pixels() == b.samples[i].depth.pixels());
    EXPECT_EQ(a.samples[i].subset, b.samples[i].subset);
  }
  const Dataset c = generate_synthetic_dataset(5, 4, {}, k64, 4);
  EXPECT_FALSE(a.samples[0].depth.pixels() == c.samples[0].depth.pixels());
}

TEST(Synthetic, RangesTagsAndSessions) {
  const Dataset ds = generate_synthetic_dataset(2, 7, {}, k64, 11);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const RgbdSample& s = ds.samples[i];
    EXPECT_EQ(s.identity, static_cast<int>(i / 7));
    EXPECT_EQ(s.subset, kAllSubsets[(i % 7) % 5]);
    EXPECT_EQ(s.session, s.subset == Subset::TM ? Session::S2 : Session::S1);
    for (double v : s.rgb.pixels().values()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    for (double v : s.depth.pixels().values()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

// Same-identity depth pairs are closer than cross-identity pairs, by
// exhaustive comparison of all pairs.
TEST(Synthetic, SameIdentityDepthCoherence) {
  for (std::int64_t seed : {1, 2, 3, 5, 8, 13, 21, 34, 55, 89}) {
    const Dataset ds = generate_synthetic_dataset(3, 2, {}, k64, seed);
    double same = 0.0, cross = 0.0;
    int n_same = 0, n_cross = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t j = i + 1; j < ds.size(); ++j) {
        const double d = oracle::mean_abs_diff(ds.samples[i].depth.pixels(), ds.samples[j].depth.pixels());
        if (ds.samples[i].identity == ds.samples[j].identity)
          same += d, ++n_same;
        else
          cross += d, ++n_cross;
      }
    ASSERT_EQ(n_same + n_cross, 15);
    EXPECT_LT(same / n_same, cross / n_cross) << "seed " << seed;
  }
}

TEST(Synthetic, PreconditionErrors) {
  EXPECT_THROW(generate_synthetic_dataset(1, 1, {}, {60, 64}, 1), PreconditionError);
  EXPECT_THROW(generate_synthetic_dataset(0, 1, {}, k64, 1), PreconditionError);
  EXPECT_THROW(generate_synthetic_dataset(1, 0, {}, k64, 1), PreconditionError);
  EXPECT_THROW(generate_synthetic_dataset(1, 1, {}, k64, -1), PreconditionError);
  EXPECT_THROW(generate_synthetic_dataset(1, 1, {}, k64, kMaxSeed + 1), PreconditionError);
  EXPECT_NO_THROW(generate_synthetic_dataset(1, 1, {}, k64, kMaxSeed));
}

TEST(Types, ImageInvariants) {
  EXPECT_THROW(RgbImage(nn::Tensor({3, 33, 64})), ShapeError);
  EXPECT_THROW(RgbImage(nn::Tensor({1, 32, 32})), ShapeError);
  EXPECT_THROW(RgbImage(nn::Tensor({3, 32, 32}, 1.5)), PreconditionError);
  EXPECT_THROW(DepthMap(nn::Tensor({1, 32, 32}, -0.1)), PreconditionError);
  EXPECT_THROW(DepthMap(nn::Tensor({1, 32, 32}, std::nan(""))), PreconditionError);
}

TEST(Manifest, RoundTripWithinQuantization) {
  TempDir dir("roundtrip");
  const Dataset ds = generate_synthetic_dataset(2, 2, {}, k64, 5);
  write_dataset(ds, dir.path());
  const Dataset back = load_dataset(dir.path());
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.identity_count, 2);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.samples[i].identity, ds.samples[i].identity);
    EXPECT_EQ(back.samples[i].subset, ds.samples[i].subset);
    EXPECT_EQ(back.samples[i].session, ds.samples[i].session);
    const auto& a = ds.samples[i].rgb.pixels();
    const auto& b = back.samples[i].rgb.pixels();
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_LE(std::fabs(a[k] - b[k]), 0.5 / 255.0 + 1e-12);
    const auto& da = ds.samples[i].depth.pixels();
    const auto& db = back.samples[i].depth.pixels();
    for (std::size_t k = 0; k < da.size(); ++k) ASSERT_LE(std::fabs(da[k] - db[k]), 0.5 / 255.0 + 1e-12);
  }
}

TEST(Manifest, SixteenBitDepthIsFiner) {
  TempDir dir("depth16");
  const Dataset ds = generate_synthetic_dataset(1, 2, {}, k64, 9);
  write_dataset(ds, dir.path(), 16);
  const Dataset back = load_dataset(dir.path() / "manifest.csv");
  const auto& da = ds.samples[1].depth.pixels();
  const auto& db = back.samples[1].depth.pixels();
  for (std::size_t k = 0; k < da.size(); ++k) ASSERT_LE(std::fabs(da[k] - db[k]), 0.5 / 65535.0 + 1e-12);
}

TEST(Manifest, EmptyManifest) {
  TempDir dir("empty");
  write_file(dir / "manifest.csv", "rgb,depth,identity,subset,session\n");
  const Dataset ds = load_dataset(dir / "manifest.csv");
  EXPECT_TRUE(ds.empty());
  EXPECT_EQ(ds.identity_count, 0);
}

TEST(Manifest, MismatchedDimsNameTheRow) {
  TempDir dir("dims");
  std::filesystem::create_directories(dir / "x");
  write_rgb_png((dir / "x/a.png").string(), nn::Tensor({3, 64, 64}, 0.5));
  write_depth_png((dir / "x/b.png").string(), nn::Tensor({1, 64, 64}, 0.5));
  write_depth_png((dir / "x/c.png").string(), nn::Tensor({1, 32, 32}, 0.5));
  write_file(dir / "manifest.csv",
             "rgb,depth,identity,subset,session\nx/a.png,x/b.png,0,NU,S1\nx/a.png,x/c.png,0,FE,S1\n");
  const std::string msg = load_error_message(dir / "manifest.csv");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(Manifest, MalformedRowsAreReported) {
  TempDir dir("bad");
  std::filesystem::create_directories(dir / "x");
  write_rgb_png((dir / "x/a.png").string(), nn::Tensor({3, 32, 32}, 0.5));
  write_depth_png((dir / "x/b.png").string(), nn::Tensor({1, 32, 32}, 0.5));
  const std::string header = "rgb,depth,identity,subset,session\n";
  const std::vector<std::pair<std::string, std::string>> cases{
      {"x/a.png,x/b.png,0,XX,S1\n", "XX"},
      {"x/a.png,x/b.png,0,NU,S9\n", "S9"},
      {"x/a.png,x/b.png,zero,NU,S1\n", "identity"},
      {"x/a.png,x/b.png,0,NU\n", "fields"},
      {"x/a.png,x/missing.png,0,NU,S1\n", "missing.png"},
      {"x/b.png,x/b.png,0,NU,S1\n", "RGB"},
  };
  for (const auto& [row, needle] : cases) {
    write_file(dir / "manifest.csv", header + row);
    const std::string msg = load_error_message(dir / "manifest.csv");
    EXPECT_NE(msg.find("line 2"), std::string::npos) << row << " -> " << msg;
    EXPECT_NE(msg.find(needle), std::string::npos) << row << " -> " << msg;
  }
  EXPECT_THROW(load_dataset(dir / "nope.csv"), LoadError);
  write_file(dir / "manifest.csv", "wrong,header\n");
  EXPECT_THROW(load_dataset(dir / "manifest.csv"), LoadError);
}

TEST(Manifest, CorruptPngRaisesLoadError) {
  TempDir dir("corrupt");
  std::filesystem::create_directories(dir / "x");
  write_rgb_png((dir / "x/a.png").string(), nn::Tensor({3, 32, 32}, 0.5));
  std::string bytes;
  {
    std::ifstream in(dir / "x/a.png", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  write_file(dir / "x/t.png", bytes.substr(0, 40));
  EXPECT_THROW(read_png((dir / "x/t.png").string()), LoadError);
}

TEST(Manifest, NormalizationBounds) {
  TempDir dir("norm");
  write_dataset(generate_synthetic_dataset(2, 3, {}, k64, 17), dir.path());
  const Dataset ds = load_dataset(dir.path());
  for (const RgbdSample& s : ds.samples) {
    for (double v : s.rgb.pixels().values()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    for (double v : s.depth.pixels().values()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(Protocol, Counting) {
  const Dataset ds = generate_synthetic_dataset(2, 3, {}, k64, 1);
  const EvalProtocol p = build_protocol(ds);
  EXPECT_EQ(p.gallery_indices.size(), 2u);
  EXPECT_EQ(p.probe_indices.size(), 4u);
  EXPECT_EQ(p.subset_of.size(), 4u);
}

TEST(Protocol, FallsBackToLowestIndex) {
  VariationSpec spec;
  spec.cycle = {Subset::PS};
  const Dataset ds = generate_synthetic_dataset(2, 3, spec, k64, 1);
  const EvalProtocol p = build_protocol(ds);
  EXPECT_EQ(p.gallery_indices, (std::vector<std::size_t>{0, 3}));
}

// Gallery indices agree with a direct linear scan on mixed-tag datasets, and
// gallery/probe partition all indices.
TEST(Protocol, MatchesLinearScan) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Dataset ds;
    ds.identity_count = 4;
    std::uniform_int_distribution<int> id(0, 3), sub(0, 4), ses(0, 1);
    for (int k = 0; k < 4; ++k)
      for (int r = 0; r < 2; ++r) ds.samples.push_back({{}, {}, k, Subset::FE, Session::S1});
    for (int k = 0; k < 12; ++k)
      ds.samples.push_back({{}, {}, id(rng), kAllSubsets[sub(rng)], ses(rng) ? Session::S2 : Session::S1});
    std::shuffle(ds.samples.begin(), ds.samples.end(), rng);

    std::vector<std::size_t> expect;
    for (int k = 0; k < 4; ++k) {
      std::size_t first = ds.size(), pref = ds.size();
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.samples[i].identity != k) continue;
        if (first == ds.size()) first = i;
        if (pref == ds.size() && ds.samples[i].subset == Subset::NU && ds.samples[i].session == Session::S1) pref = i;
      }
      expect.push_back(pref != ds.size() ? pref : first);
    }
    const EvalProtocol p = build_protocol(ds);
    EXPECT_EQ(p.gallery_indices, expect);
    std::vector<std::size_t> all = p.gallery_indices;
    all.insert(all.end(), p.probe_indices.begin(), p.probe_indices.end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, all_indices(ds));
    for (std::size_t i : p.probe_indices) EXPECT_EQ(p.subset_of.at(i), ds.samples[i].subset);
  }
}

TEST(Protocol, Errors) {
  Dataset ds;
  ds.identity_count = 3;
  ds.samples = {{{}, {}, 0, Subset::NU, Session::S1}, {{}, {}, 0, Subset::FE, Session::S1},
                {{}, {}, 2, Subset::NU, Session::S1}, {{}, {}, 2, Subset::FE, Session::S1}};
  EXPECT_THROW(build_protocol(ds), ProtocolError);
  ds.identity_count = 2;
  EXPECT_THROW(build_protocol(ds), ProtocolError);
  ds.identity_count = 3;
  ds.samples.push_back({{}, {}, 1, Subset::NU, Session::S1});
  EXPECT_THROW(build_protocol(ds), ProtocolError);
  GalleryRule rule;
  rule.allow_gallery_only = true;
  const EvalProtocol p = build_protocol(ds, rule);
  EXPECT_EQ(p.gallery_indices.size(), 3u);
  EXPECT_EQ(p.probe_indices.size(), 2u);
}
