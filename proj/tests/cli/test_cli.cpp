#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rgbdface/rgbdface.hpp"
#include "support/tempdir.hpp"

namespace fs = std::filesystem;
using namespace rgbdface;
using testing_support::TempDir;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(RGBDFACE_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.output += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

// Per-process pipeline artifacts, built on first use.
class Pipeline {
 public:
  static Pipeline& get() {
    static Pipeline p;
    return p;
  }
  const fs::path& root() const { return dir_.path(); }

  fs::path raw() {
    if (!raw_) {
      raw_ = dir_ / "raw";
      const RunResult r = run("synth --ids 8 --per-id 8 --res 64 --seed 5 --out " + raw_->string());
      EXPECT_EQ(r.code, 0) << r.output;
    }
    return *raw_;
  }
  fs::path stage1() {
    if (!stage1_) {
      stage1_ = dir_ / "s1";
      const RunResult r = run("train --stage depthgen --epochs 1 --profile desk --data " + raw().string() + " --out " +
                              stage1_->string());
      EXPECT_EQ(r.code, 0) << r.output;
    }
    return *stage1_;
  }
  fs::path generated() {
    if (!generated_) {
      generated_ = dir_ / "gen";
      const RunResult r = run("export-depth --profile desk --checkpoint " + (stage1() / "depthgen.ckpt").string() +
                              " --data " + raw().string() + " --out " + generated_->string());
      EXPECT_EQ(r.code, 0) << r.output;
    }
    return *generated_;
  }
  fs::path fusion_ckpt() {
    if (!fusion_) {
      fusion_ = dir_ / "s2";
      const RunResult r = run("train --stage fusion --epochs 2 --profile desk --data " + generated().string() +
                              " --out " + fusion_->string());
      EXPECT_EQ(r.code, 0) << r.output;
    }
    return *fusion_ / "fusion.ckpt";
  }

 private:
  Pipeline() : dir_("cli") {}
  TempDir dir_;
  std::optional<fs::path> raw_, stage1_, generated_, fusion_;
};

std::vector<fs::path> tree(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(CliSynth, WritesManifestAndPairs) {
  TempDir dir("synth");
  const RunResult r = run("synth --ids 8 --per-id 8 --res 64 --seed 3 --out " + (dir / "d").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "d/manifest.csv"));
  EXPECT_TRUE(fs::exists(dir / "d/run.json"));
  int rgb = 0, depth = 0;
  for (const auto& e : fs::directory_iterator(dir / "d/rgb")) rgb += e.path().extension() == ".png";
  for (const auto& e : fs::directory_iterator(dir / "d/depth")) depth += e.path().extension() == ".png";
  EXPECT_EQ(rgb, 64);
  EXPECT_EQ(depth, 64);
  const dataio::Dataset ds = dataio::load_dataset(dir / "d");
  EXPECT_EQ(ds.size(), 64u);
  EXPECT_EQ(ds.identity_count, 8);
}

TEST(CliSynth, RerunIsByteIdentical) {
  TempDir dir("synth_twice");
  // Same output path both times, so the recorded argv matches too.
  ASSERT_EQ(run("synth --ids 3 --per-id 4 --res 64 --seed 3 --out " + (dir / "d").string()).code, 0);
  fs::rename(dir / "d", dir / "first");
  ASSERT_EQ(run("synth --ids 3 --per-id 4 --res 64 --seed 3 --out " + (dir / "d").string()).code, 0);
  const auto a = tree(dir / "first"), b = tree(dir / "d");
  ASSERT_EQ(a, b);
  for (const fs::path& rel : a) EXPECT_EQ(slurp(dir / "first" / rel), slurp(dir / "d" / rel)) << rel;
}

TEST(CliSynth, RejectsIndivisibleResolution) {
  TempDir dir("synth_bad");
  const RunResult r = run("synth --res 60 --out " + (dir / "d").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("divisible by 32"), std::string::npos) << r.output;
}

TEST(CliTrain, DepthgenSmokeWritesCheckpointAndManifest) {
  Pipeline& p = Pipeline::get();
  const fs::path s1 = p.stage1();
  EXPECT_TRUE(fs::exists(s1 / "depthgen.ckpt"));
  EXPECT_EQ(training::read_checkpoint_header((s1 / "depthgen.ckpt").string()).kind, training::CheckpointKind::Depthgen);
  const auto rows = csv_rows(slurp(s1 / "history.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], "1");
  const std::string manifest = slurp(s1 / "run.json");
  EXPECT_NE(manifest.find("\"command\": \"train\""), std::string::npos);
  EXPECT_NE(manifest.find("\"dataset_digest\""), std::string::npos);
  EXPECT_NE(manifest.find("\"tool_version\""), std::string::npos);
}

TEST(CliTrain, DefaultsEchoStageSettings) {
  const RunResult d = run("train --stage depthgen --print-config");
  ASSERT_EQ(d.code, 0) << d.output;
  EXPECT_NE(d.output.find("batch_size=32 lr=0.01 "), std::string::npos) << d.output;
  EXPECT_NE(d.output.find("profile=\"full\""), std::string::npos) << d.output;
  const RunResult f = run("train --stage fusion --print-config");
  ASSERT_EQ(f.code, 0) << f.output;
  EXPECT_NE(f.output.find("batch_size=4 lr=0.001 "), std::string::npos) << f.output;
  EXPECT_NE(f.output.find("decay_factor=0.5 patience=5"), std::string::npos) << f.output;
}

TEST(CliTrain, FusionTogglesZeroTheirColumns) {
  Pipeline& p = Pipeline::get();
  const fs::path out = p.root() / "ablated";
  const RunResult r = run("train --stage fusion --no-cic --no-cfe --epochs 2 --profile desk --data " +
                          p.generated().string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = csv_rows(slurp(out / "history.csv"));
  ASSERT_EQ(rows.size(), 3u);
  ASSERT_EQ(rows[0][6], "l_cic");
  ASSERT_EQ(rows[0][7], "l_cfe");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(std::stod(rows[i][6]), 0.0);
    EXPECT_EQ(std::stod(rows[i][7]), 0.0);
    EXPECT_GT(std::stod(rows[i][3]), 0.0);
  }
  for (const auto& row : csv_rows(slurp(out / "steps.csv"))) {
    if (row[0] == "epoch") {
      EXPECT_EQ(row[2 + 6], "l_cic");
      continue;
    }
    EXPECT_EQ(std::stod(row[2 + 6]), 0.0);
    EXPECT_EQ(std::stod(row[2 + 7]), 0.0);
  }
}

TEST(CliTrain, Errors) {
  Pipeline& p = Pipeline::get();
  TempDir dir("train_err");
  EXPECT_NE(run("train --stage nonsense --data " + p.raw().string() + " --out " + dir.path().string()).code, 0);
  EXPECT_NE(run("train --stage depthgen --data " + (dir / "missing").string() + " --out " + dir.path().string()).code,
            0);
  // Default profile is full (256x256); the dataset is 64x64.
  const RunResult r = run("train --stage depthgen --epochs 1 --data " + p.raw().string() + " --out " +
                          (dir / "o").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("does not match profile full"), std::string::npos) << r.output;
}

TEST(CliExport, ReplacesDepthKeepsTags) {
  Pipeline& p = Pipeline::get();
  const dataio::Dataset raw = dataio::load_dataset(p.raw());
  const dataio::Dataset gen = dataio::load_dataset(p.generated());
  ASSERT_EQ(gen.size(), raw.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    EXPECT_EQ(gen.samples[i].identity, raw.samples[i].identity);
    EXPECT_EQ(gen.samples[i].subset, raw.samples[i].subset);
    EXPECT_EQ(gen.samples[i].session, raw.samples[i].session);
    EXPECT_TRUE(gen.samples[i].rgb.pixels() == raw.samples[i].rgb.pixels());
    any_diff = any_diff || !(gen.samples[i].depth.pixels() == raw.samples[i].depth.pixels());
  }
  EXPECT_TRUE(any_diff);
  // 16-bit export: within half a 16-bit step of the in-memory generator output.
  const training::DepthgenModel dg = training::load_depthgen_checkpoint((p.stage1() / "depthgen.ckpt").string());
  const dataio::Dataset direct = training::export_generated_depth(raw, dg.generator);
  for (std::size_t i = 0; i < raw.size(); i += 9) {
    const nn::Tensor& a = gen.samples[i].depth.pixels();
    const nn::Tensor& b = direct.samples[i].depth.pixels();
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_NEAR(a[k], b[k], 0.5 / 65535.0 + 1e-12);
  }
  EXPECT_NE(run("export-depth --checkpoint " + (p.root() / "absent.ckpt").string() + " --data " + p.raw().string() +
                " --out " + (p.root() / "x").string())
                .code,
            0);
  EXPECT_NE(run("export-depth --profile full --checkpoint " + (p.stage1() / "depthgen.ckpt").string() + " --data " +
                p.raw().string() + " --out " + (p.root() / "x").string())
                .code,
            0);
}

TEST(CliEval, CopyOfGalleryScoresHundred) {
  Pipeline& p = Pipeline::get();
  // Every sample of an identity is a copy of its first sample; tags stay varied.
  dataio::Dataset ds = dataio::load_dataset(p.generated());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t first = static_cast<std::size_t>(ds.samples[i].identity) * 8;
    ds.samples[i].rgb = ds.samples[first].rgb;
    ds.samples[i].depth = ds.samples[first].depth;
  }
  const fs::path fixture = p.root() / "copies";
  dataio::write_dataset(ds, fixture, 16);
  const fs::path out = p.root() / "eval_copies";
  const RunResult r =
      run("eval --checkpoint " + p.fusion_ckpt().string() + " --data " + fixture.string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto kv = key_values(slurp(out / "report.txt"));
  EXPECT_EQ(kv.at("overall"), "100.0000");
  for (const char* k : {"subset.NU", "subset.FE", "subset.OC", "subset.PS", "subset.TM", "avg.pooled",
                        "avg.subset_mean", "n_correct", "n_total"})
    EXPECT_TRUE(kv.count(k)) << k;
  EXPECT_EQ(kv.at("n_total"), "56");
  const auto table = csv_rows(slurp(out / "table.csv"));
  ASSERT_EQ(table.size(), 2u);
  EXPECT_EQ(table[0], (std::vector<std::string>{"NU", "FE", "OC", "PS", "TM", "AVG"}));
}

TEST(CliEval, RankOneRecomputedFromDumpedEmbeddings) {
  Pipeline& p = Pipeline::get();
  const fs::path out = p.root() / "eval_dump";
  const RunResult r = run("eval --checkpoint " + p.fusion_ckpt().string() + " --data " + p.generated().string() +
                          " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  struct Row {
    std::string role;
    int identity;
    std::string subset;
    std::vector<double> e;
  };
  std::vector<Row> gallery, probes;
  const auto rows = csv_rows(slurp(out / "embeddings.csv"));
  ASSERT_GT(rows.size(), 1u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    Row row{rows[i][0], std::stoi(rows[i][2]), rows[i][3], {}};
    for (std::size_t k = 4; k < rows[i].size(); ++k) row.e.push_back(std::stod(rows[i][k]));
    ASSERT_EQ(row.e.size(), 2048u);
    (row.role == "gallery" ? gallery : probes).push_back(std::move(row));
  }
  ASSERT_EQ(gallery.size(), 8u);
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) ab += a[k] * b[k], aa += a[k] * a[k], bb += b[k] * b[k];
    return ab / std::sqrt(aa * bb);
  };
  int correct = 0;
  std::map<std::string, std::pair<int, int>> per;
  for (const Row& pr : probes) {
    std::size_t best = 0;
    double best_s = -2.0;
    for (std::size_t j = 0; j < gallery.size(); ++j) {
      const double s = cosine(pr.e, gallery[j].e);
      if (s > best_s) best_s = s, best = j;
    }
    const bool ok = gallery[best].identity == pr.identity;
    correct += ok;
    per[pr.subset].first += ok;
    per[pr.subset].second += 1;
  }
  const auto kv = key_values(slurp(out / "report.txt"));
  EXPECT_EQ(std::stoi(kv.at("n_correct")), correct);
  EXPECT_EQ(std::stoi(kv.at("n_total")), static_cast<int>(probes.size()));
  EXPECT_NEAR(std::stod(kv.at("overall")), 100.0 * correct / probes.size(), 5e-5);
  for (const auto& [tag, nc] : per) EXPECT_EQ(std::stoi(kv.at("subset." + tag + ".n_correct")), nc.first) << tag;
}

TEST(CliEval, WithStageOneCheckpointReportsMae) {
  Pipeline& p = Pipeline::get();
  const fs::path out = p.root() / "eval_mae";
  const RunResult r = run("eval --checkpoint " + p.fusion_ckpt().string() + " --depthgen " +
                          (p.stage1() / "depthgen.ckpt").string() + " --data " + p.raw().string() + " --out " +
                          out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const double reported = std::stod(key_values(slurp(out / "mae.txt")).at("mae"));
  const dataio::Dataset raw = dataio::load_dataset(p.raw());
  const training::DepthgenModel dg = training::load_depthgen_checkpoint((p.stage1() / "depthgen.ckpt").string());
  const dataio::Dataset gen = training::export_generated_depth(raw, dg.generator);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const nn::Tensor& a = gen.samples[i].depth.pixels();
    const nn::Tensor& b = raw.samples[i].depth.pixels();
    for (std::size_t k = 0; k < a.size(); ++k, ++n) s += std::fabs(a[k] - b[k]) * 255.0;
  }
  EXPECT_NEAR(reported, s / n, 1e-6);
}

TEST(CliEval, MissingCheckpointFails) {
  Pipeline& p = Pipeline::get();
  const RunResult r = run("eval --checkpoint " + (p.root() / "nope.ckpt").string() + " --data " + p.raw().string() +
                          " --out " + (p.root() / "e").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("nope.ckpt"), std::string::npos) << r.output;
}

TEST(CliSweep, SingleLambdaGivesOneRow) {
  Pipeline& p = Pipeline::get();
  const fs::path out = p.root() / "sweep1";
  const RunResult r = run("sweep-lambda --lambdas 0.5 --epochs 1 --profile desk --data " + p.generated().string() +
                          " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = csv_rows(slurp(out / "sweep.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"lambda", "rank1"}));
  EXPECT_EQ(rows[1][0], "0.5");
  EXPECT_EQ(training::read_checkpoint_header((out / "lambda_0.5/fusion.ckpt").string()).lambda, 0.5);
}

TEST(CliSweep, RowsAscendAndMatchManualEval) {
  Pipeline& p = Pipeline::get();
  const fs::path out = p.root() / "sweep3";
  const RunResult r = run("sweep-lambda --lambdas 0.9,0.1,0.4 --epochs 1 --profile desk --data " +
                          p.generated().string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = csv_rows(slurp(out / "sweep.csv"));
  ASSERT_EQ(rows.size(), 4u);
  const std::vector<std::string> expect{"0.1", "0.4", "0.9"};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rows[i + 1][0], expect[i]);
    const fs::path ev = p.root() / ("manual_" + expect[i]);
    const RunResult e = run("eval --checkpoint " + (out / ("lambda_" + expect[i]) / "fusion.ckpt").string() +
                            " --data " + p.generated().string() + " --out " + ev.string());
    ASSERT_EQ(e.code, 0) << e.output;
    EXPECT_EQ(key_values(slurp(ev / "report.txt")).at("overall"), rows[i + 1][1]) << expect[i];
  }
}

TEST(CliSweep, EmptyListFails) {
  Pipeline& p = Pipeline::get();
  const RunResult r = run("sweep-lambda --lambdas \"\" --profile desk --data " + p.raw().string() + " --out " +
                          (p.root() / "sweep0").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("lambda list is empty"), std::string::npos) << r.output;
}

TEST(CliAblate, DisabledComponentsLogZero) {
  Pipeline& p = Pipeline::get();
  const fs::path out = p.root() / "ablate";
  const RunResult r = run("ablate --variants full,none --epochs 1 --profile desk --data " + p.generated().string() +
                          " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = csv_rows(slurp(out / "ablation.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "full");
  EXPECT_GT(std::stod(rows[1][3]), 0.0);
  EXPECT_EQ(rows[2][0], "none");
  EXPECT_EQ(std::stod(rows[2][3]), 0.0);
  EXPECT_EQ(std::stod(rows[2][4]), 0.0);
  for (const auto& row : csv_rows(slurp(out / "none/history.csv")))
    if (row[0] != "epoch") EXPECT_EQ(std::stod(row[6]) + std::stod(row[7]), 0.0);
}
