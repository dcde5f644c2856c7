// rgbdface: dataset synthesis, two-stage training, depth export, evaluation,
// lambda sweeps and loss ablations from the command line.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rgbdface/rgbdface.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace rgbdface;

namespace {

constexpr const char* kToolVersion = "0.3.0";

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  std::string data;
  std::string profile = "full";
  bool profile_given = false;
  std::vector<std::string> argv;

  Profile resolved_profile() const {
    const auto p = parse_profile(profile);
    require<PreconditionError>(p.has_value(), "unknown profile '", profile, "' (expected desk or full)");
    return *p;
  }
  std::optional<Profile> expected_profile() const {
    return profile_given ? std::optional<Profile>(resolved_profile()) : std::nullopt;
  }
  fs::path out_dir() const {
    require<PreconditionError>(!out.empty(), "--out is required");
    fs::create_directories(out);
    return fs::path(out);
  }
  dataio::Dataset load_data() const {
    require<PreconditionError>(!data.empty(), "--data is required");
    return dataio::load_dataset(data);
  }
};

// Every training knob; unset optionals fall back to the stage defaults.
struct TrainFlags {
  std::string stage = "depthgen";
  int epochs = 30;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<double> momentum;
  std::optional<double> weight_decay;
  std::optional<double> decay;
  std::optional<int> patience;
  std::optional<double> lambda;
  std::optional<double> arc_scale;
  std::optional<double> arc_margin;
  std::optional<int> mfs_levels;
  std::optional<double> holdout;
  bool no_mfs = false;
  bool no_cic = false;
  bool no_cfe = false;
  bool no_bn_recal = false;

  void add_to(CLI::App* cmd, bool with_stage) {
    if (with_stage)
      cmd->add_option("--stage", stage, "depthgen or fusion")->check(CLI::IsMember({"depthgen", "fusion"}));
    cmd->add_option("--epochs", epochs, "number of epochs")->default_val(30);
    cmd->add_option("--batch-size", batch_size, "batch size (32 depthgen, 4 fusion)");
    cmd->add_option("--lr", lr, "initial learning rate (0.01 depthgen, 0.001 fusion)");
    cmd->add_option("--momentum", momentum, "SGD momentum (0.9)");
    cmd->add_option("--weight-decay", weight_decay, "SGD weight decay (0)");
    cmd->add_option("--decay", decay, "plateau decay factor (0.5)");
    cmd->add_option("--patience", patience, "plateau patience in epochs (5)");
    cmd->add_option("--lambda", lambda, "weight of the identity loss in stage 2 (0.5)");
    cmd->add_option("--arc-scale", arc_scale, "arc-margin scale s (30)");
    cmd->add_option("--arc-margin", arc_margin, "arc-margin m (0.5)");
    cmd->add_option("--mfs-levels", mfs_levels, "shallow feature levels in the MFS loss (3)");
    cmd->add_option("--holdout", holdout, "validation holdout fraction (0.1 depthgen, 0.25 fusion)");
    cmd->add_flag("--no-mfs", no_mfs, "drop the multi-scale feature similarity loss");
    cmd->add_flag("--no-cic", no_cic, "drop the common identity consistency loss");
    cmd->add_flag("--no-cfe", no_cfe, "drop the cross-modal feature exclusivity loss");
    cmd->add_flag("--no-bn-recalibration", no_bn_recal, "skip batch-norm re-estimation before validation");
  }

  training::TrainConfig resolve(const Globals& g, std::optional<training::Stage> force = std::nullopt) const {
    const training::Stage st = force ? *force : *training::parse_stage(stage);
    training::TrainConfig c = training::TrainConfig::defaults(st);
    c.max_epochs = epochs;
    c.seed = g.seed;
    c.profile = g.resolved_profile();
    if (batch_size) c.batch_size = *batch_size;
    if (lr) c.lr = *lr;
    if (momentum) c.momentum = *momentum;
    if (weight_decay) c.weight_decay = *weight_decay;
    if (decay) c.decay_factor = *decay;
    if (patience) c.patience = *patience;
    if (lambda) c.lambda = *lambda;
    if (arc_scale) c.arc.scale = *arc_scale;
    if (arc_margin) c.arc.margin = *arc_margin;
    if (mfs_levels) c.mfs_levels = *mfs_levels;
    if (holdout) c.holdout_fraction = *holdout;
    c.mfs_on = !no_mfs;
    c.cic_on = !no_cic;
    c.cfe_on = !no_cfe;
    c.recalibrate_bn = !no_bn_recal;
    c.validate();
    return c;
  }
};

json config_json(const training::TrainConfig& c) {
  json j;
  j["stage"] = std::string(training::to_string(c.stage));
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["decay_factor"] = c.decay_factor;
  j["patience"] = c.patience;
  j["max_epochs"] = c.max_epochs;
  j["seed"] = c.seed;
  j["mfs_on"] = c.mfs_on;
  j["cic_on"] = c.cic_on;
  j["cfe_on"] = c.cfe_on;
  j["mfs_levels"] = c.mfs_levels;
  j["lambda"] = c.lambda;
  j["arc_scale"] = c.arc.scale;
  j["arc_margin"] = c.arc.margin;
  j["profile"] = std::string(to_string(c.profile));
  j["holdout_fraction"] = c.holdout_fraction;
  j["recalibrate_bn"] = c.recalibrate_bn;
  return j;
}

void print_config(const training::TrainConfig& c) {
  const json j = config_json(c);
  std::cout << "config";
  for (const auto& [k, v] : j.items()) std::cout << ' ' << k << '=' << v.dump();
  std::cout << '\n';
}

// Written before any long-running work starts.
void write_run_manifest(const fs::path& dir, const std::string& command, const Globals& g, json config,
                        std::optional<std::uint64_t> dataset_digest) {
  json j;
  j["command"] = command;
  j["tool_version"] = kToolVersion;
  j["argv"] = g.argv;
  j["seed"] = g.seed;
  j["profile"] = g.profile;
  j["data"] = g.data;
  j["output_directory"] = g.out;
  j["dataset_digest"] = dataset_digest ? json(hex64(*dataset_digest)) : json(nullptr);
  j["config"] = std::move(config);
  training::write_text((dir / "run.json").string(), j.dump(2) + "\n");
}

void log_epoch(const training::EpochRecord& r) {
  std::printf("epoch %d total=%.6f val=%.4f lr=%g\n", r.epoch, r.loss.total, r.val_metric, r.lr);
  std::fflush(stdout);
}

void write_history(const fs::path& dir, const training::TrainHistory& h) {
  training::write_text((dir / "history.csv").string(), training::history_csv(h));
  training::write_text((dir / "steps.csv").string(), training::steps_csv(h));
}

// Trains stage 2 into `dir` and returns the checkpoint path.
std::string run_fusion(const fs::path& dir, const dataio::Dataset& ds, const training::TrainConfig& cfg) {
  auto res = training::train_fusion(ds, cfg, log_epoch);
  write_history(dir, res.history);
  const std::string ckpt = (dir / "fusion.ckpt").string();
  training::save_fusion_checkpoint(ckpt, res.model, cfg.profile, cfg.lambda);
  return ckpt;
}

struct EvalOutcome {
  eval::RankReport report;
  std::optional<double> mae;
};

// Rank-1 over the whole dataset (gallery per identity, every other sample a
// probe). With a stage-1 checkpoint the dataset depth is ground truth: MAE is
// reported and recognition runs on generated depth.
EvalOutcome run_eval(const fs::path& dir, const std::string& fusion_ckpt, const std::optional<std::string>& depthgen_ckpt,
                     const dataio::Dataset& raw, const Globals& g, bool allow_gallery_only, bool dump_embeddings) {
  const training::LoadedFusion f = training::load_fusion_checkpoint(fusion_ckpt, g.expected_profile());
  EvalOutcome out;
  dataio::Dataset ds = raw;
  if (depthgen_ckpt) {
    const training::DepthgenModel dg = training::load_depthgen_checkpoint(*depthgen_ckpt, f.header.profile);
    ds = training::export_generated_depth(raw, dg.generator);
    const auto all = dataio::all_indices(raw);
    out.mae = eval::mae(dataio::depth_batch(ds, all), dataio::depth_batch(raw, all));
    char line[64];
    std::snprintf(line, sizeof line, "mae=%.6f\n", *out.mae);
    training::write_text((dir / "mae.txt").string(), line);
  }
  training::require_profile_resolution(ds, f.header.profile);
  dataio::GalleryRule rule;
  rule.allow_gallery_only = allow_gallery_only;
  const dataio::EvalProtocol protocol = dataio::build_protocol(ds, rule);
  const eval::ProtocolResult r = eval::evaluate_protocol(f.model, ds, protocol);
  out.report = r.report;
  training::write_text((dir / "report.txt").string(), eval::format_report(r.report));
  training::write_text((dir / "table.csv").string(), eval::format_table(r.report));

  if (dump_embeddings) {
    std::string s = "role,sample,identity,subset,embedding\n";
    char buf[32];
    auto dump = [&](const char* role, const std::vector<std::size_t>& idx, const nn::Tensor& e) {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const dataio::RgbdSample& smp = ds.samples[idx[k]];
        s += std::string(role) + ',' + std::to_string(idx[k]) + ',' + std::to_string(smp.identity) + ',' +
             std::string(dataio::to_string(smp.subset));
        for (int d = 0; d < e.dim(1); ++d) {
          std::snprintf(buf, sizeof buf, ",%.17g", e.at(static_cast<int>(k), d));
          s += buf;
        }
        s += '\n';
      }
    };
    dump("gallery", protocol.gallery_indices, r.gallery_embeddings);
    dump("probe", protocol.probe_indices, r.probe_embeddings);
    training::write_text((dir / "embeddings.csv").string(), s);
  }
  return out;
}

std::vector<double> parse_lambdas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require<PreconditionError>(used == item.size(), "bad lambda value '", item, "'");
    out.push_back(v);
  }
  require<PreconditionError>(!out.empty(), "lambda list is empty");
  return out;
}

std::string lambda_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "lambda_%.4g", v);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D face recognition from generated depth: synthesis, training, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  g.argv.assign(argv, argv + argc);
  app.add_option("--seed", g.seed, "random seed")->default_val(0);
  app.add_option("--out", g.out, "output directory");
  app.add_option("--data", g.data, "dataset directory or manifest.csv");
  auto* profile_opt =
      app.add_option("--profile", g.profile, "model profile")->check(CLI::IsMember({"desk", "full"}))->default_val("full");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a procedural paired RGB-D dataset");
  int ids = 8, per_id = 8, depth_bits = 8;
  std::optional<int> res;
  synth->add_option("--ids", ids, "number of identities")->default_val(8);
  synth->add_option("--per-id", per_id, "samples per identity")->default_val(8);
  synth->add_option("--res", res, "square resolution, divisible by 32 (profile input size)");
  synth->add_option("--depth-bits", depth_bits, "depth PNG bit depth")->check(CLI::IsMember({8, 16}))->default_val(8);

  // train
  auto* train = app.add_subcommand("train", "train stage 1 (depth generation) or stage 2 (fusion)");
  TrainFlags tf;
  bool print_only = false;
  tf.add_to(train, true);
  train->add_flag("--print-config", print_only, "print the resolved configuration and exit");

  // export-depth
  auto* exportd = app.add_subcommand("export-depth", "replace dataset depth with generated depth");
  std::string ckpt;
  int export_bits = 16;
  exportd->add_option("--checkpoint", ckpt, "stage-1 checkpoint")->required();
  exportd->add_option("--depth-bits", export_bits, "depth PNG bit depth")->check(CLI::IsMember({8, 16}))->default_val(16);

  // eval
  auto* evalc = app.add_subcommand("eval", "rank-1 identification report");
  std::string fusion_ckpt;
  std::optional<std::string> depthgen_ckpt;
  bool allow_gallery_only = false, dump = true;
  evalc->add_option("--checkpoint", fusion_ckpt, "stage-2 checkpoint")->required();
  evalc->add_option("--depthgen", depthgen_ckpt, "stage-1 checkpoint; dataset depth is then ground truth");
  evalc->add_flag("--allow-gallery-only", allow_gallery_only, "accept identities with a single sample");
  evalc->add_flag("!--no-embeddings", dump, "skip embeddings.csv");

  // sweep-lambda
  auto* sweep = app.add_subcommand("sweep-lambda", "stage-2 accuracy as a function of lambda");
  std::string lambda_list = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  std::optional<std::string> eval_data;
  TrainFlags sf;
  sf.add_to(sweep, false);
  sweep->add_option("--lambdas", lambda_list, "comma-separated lambda values")->default_val(lambda_list);
  sweep->add_option("--eval-data", eval_data, "dataset to evaluate on (defaults to --data)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "stage-2 runs with CIC/CFE toggled");
  TrainFlags af;
  std::vector<std::string> variants{"full", "no-cic", "no-cfe", "none"};
  std::optional<std::string> ablate_eval;
  af.add_to(ablate, false);
  ablate->add_option("--variants", variants, "subset of full,no-cic,no-cfe,none")
      ->delimiter(',')
      ->check(CLI::IsMember({"full", "no-cic", "no-cfe", "none"}));
  ablate->add_option("--eval-data", ablate_eval, "dataset to evaluate on (defaults to --data)");

  CLI11_PARSE(app, argc, argv);
  g.profile_given = profile_opt->count() > 0;

  try {
    if (*synth) {
      const Geometry geom = geometry_for(g.resolved_profile());
      const int side = res.value_or(geom.input_size);
      require<PreconditionError>(g.seed <= static_cast<std::uint64_t>(dataio::kMaxSeed), "seed ", g.seed,
                                 " outside [0, ", dataio::kMaxSeed, "]");
      const fs::path dir = g.out_dir();
      const dataio::Dataset ds = dataio::generate_synthetic_dataset(ids, per_id, dataio::VariationSpec{},
                                                                    {side, side}, static_cast<std::int64_t>(g.seed));
      write_run_manifest(dir, "synth", g,
                         json{{"ids", ids}, {"per_id", per_id}, {"res", side}, {"depth_bits", depth_bits}},
                         ds.manifest_digest);
      dataio::write_dataset(ds, dir, depth_bits);
      std::printf("wrote %zu samples (%d identities, %dx%d) to %s\n", ds.size(), ids, side, side, g.out.c_str());
      return 0;
    }

    if (*train) {
      const training::TrainConfig cfg = tf.resolve(g);
      print_config(cfg);
      if (print_only) return 0;
      const dataio::Dataset ds = g.load_data();
      const fs::path dir = g.out_dir();
      write_run_manifest(dir, "train", g, config_json(cfg), ds.manifest_digest);
      if (cfg.stage == training::Stage::Depthgen) {
        auto r = training::train_depthgen(ds, cfg, log_epoch);
        write_history(dir, r.history);
        training::save_depthgen_checkpoint((dir / "depthgen.ckpt").string(), r.model, cfg.profile);
        std::printf("checkpoint %s\n", (dir / "depthgen.ckpt").c_str());
      } else {
        std::printf("checkpoint %s\n", run_fusion(dir, ds, cfg).c_str());
      }
      return 0;
    }

    if (*exportd) {
      const training::DepthgenModel dg = training::load_depthgen_checkpoint(ckpt, g.expected_profile());
      const dataio::Dataset ds = g.load_data();
      const fs::path dir = g.out_dir();
      write_run_manifest(dir, "export-depth", g, json{{"checkpoint", ckpt}, {"depth_bits", export_bits}},
                         ds.manifest_digest);
      const dataio::Dataset out = training::export_generated_depth(ds, dg.generator);
      dataio::write_dataset(out, dir, export_bits);
      std::printf("exported %zu generated depth maps to %s\n", out.size(), g.out.c_str());
      return 0;
    }

    if (*evalc) {
      const dataio::Dataset ds = g.load_data();
      const fs::path dir = g.out_dir();
      json c{{"checkpoint", fusion_ckpt}, {"allow_gallery_only", allow_gallery_only}};
      c["depthgen"] = depthgen_ckpt ? json(*depthgen_ckpt) : json(nullptr);
      write_run_manifest(dir, "eval", g, c, ds.manifest_digest);
      const EvalOutcome r = run_eval(dir, fusion_ckpt, depthgen_ckpt, ds, g, allow_gallery_only, dump);
      std::cout << eval::format_report(r.report);
      if (r.mae) std::printf("mae=%.6f\n", *r.mae);
      return 0;
    }

    if (*sweep) {
      std::vector<double> lambdas = parse_lambdas(lambda_list);
      std::sort(lambdas.begin(), lambdas.end());
      lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());
      const training::TrainConfig base = sf.resolve(g, training::Stage::Fusion);
      const dataio::Dataset ds = g.load_data();
      const dataio::Dataset test = eval_data ? dataio::load_dataset(*eval_data) : ds;
      const fs::path dir = g.out_dir();
      json c = config_json(base);
      c["lambdas"] = lambdas;
      c["eval_data"] = eval_data ? json(*eval_data) : json(nullptr);
      write_run_manifest(dir, "sweep-lambda", g, c, ds.manifest_digest);
      std::string table = "lambda,rank1\n";
      for (double lam : lambdas) {
        training::TrainConfig cfg = base;
        cfg.lambda = lam;
        cfg.validate();
        const fs::path sub = dir / lambda_tag(lam);
        fs::create_directories(sub);
        std::printf("lambda %g\n", lam);
        const std::string ck = run_fusion(sub, ds, cfg);
        const EvalOutcome r = run_eval(sub, ck, std::nullopt, test, g, false, false);
        char row[64];
        std::snprintf(row, sizeof row, "%g,%s\n", lam, fixed4(r.report.overall_accuracy()).c_str());
        table += row;
      }
      training::write_text((dir / "sweep.csv").string(), table);
      std::cout << table;
      return 0;
    }

    if (*ablate) {
      const training::TrainConfig base = af.resolve(g, training::Stage::Fusion);
      const dataio::Dataset ds = g.load_data();
      const dataio::Dataset test = ablate_eval ? dataio::load_dataset(*ablate_eval) : ds;
      const fs::path dir = g.out_dir();
      json c = config_json(base);
      c["variants"] = variants;
      write_run_manifest(dir, "ablate", g, c, ds.manifest_digest);
      std::string table = "variant,cic_on,cfe_on,final_l_cic,final_l_cfe,rank1\n";
      for (const std::string& v : variants) {
        training::TrainConfig cfg = base;
        cfg.cic_on = v == "full" || v == "no-cfe";
        cfg.cfe_on = v == "full" || v == "no-cic";
        const fs::path sub = dir / v;
        fs::create_directories(sub);
        std::printf("variant %s\n", v.c_str());
        auto res = training::train_fusion(ds, cfg, log_epoch);
        write_history(sub, res.history);
        const std::string ck = (sub / "fusion.ckpt").string();
        training::save_fusion_checkpoint(ck, res.model, cfg.profile, cfg.lambda);
        const EvalOutcome r = run_eval(sub, ck, std::nullopt, test, g, false, false);
        const training::LossRecord& last = res.history.epochs.back().loss;
        char row[160];
        std::snprintf(row, sizeof row, "%s,%d,%d,%.6f,%.6f,%s\n", v.c_str(), cfg.cic_on, cfg.cfe_on, last.l_cic,
                      last.l_cfe, fixed4(r.report.overall_accuracy()).c_str());
        table += row;
      }
      training::write_text((dir / "ablation.csv").string(), table);
      std::cout << table;
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
