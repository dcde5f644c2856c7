#pragma once

#include <functional>
#include <vector>

#include "rgbdface/checksum.hpp"
#include "rgbdface/depthgen/losses.hpp"
#include "rgbdface/eval/metrics.hpp"
#include "rgbdface/nn/sgd.hpp"
#include "rgbdface/training/checkpoint.hpp"
#include "rgbdface/training/history.hpp"
#include "rgbdface/training/schedule.hpp"
#include "rgbdface/training/split.hpp"

namespace rgbdface::training {

using EpochCallback = std::function<void(const EpochRecord&)>;

struct DepthgenResult {
  DepthgenModel model;
  TrainHistory history;
  Split split;
};

inline void require_profile_resolution(const dataio::Dataset& ds, Profile profile) {
  const Geometry g = geometry_for(profile);
  require<ShapeError>(ds.height() == g.input_size && ds.width() == g.input_size, "dataset resolution ",
                      ds.height(), "x", ds.width(), " does not match profile ", to_string(profile), " (",
                      g.input_size, "x", g.input_size, ")");
}

// Running statistics become the average over `batches` of per-batch
// statistics under the current weights (cumulative momentum 1/(k+1)).
template <typename Forward>
void recalibrate_batch_norm(const std::vector<std::vector<std::size_t>>& batches, Forward&& forward) {
  nn::NoGradGuard guard;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    nn::BatchNormMomentumScope scope(1.0 / static_cast<double>(k + 1));
    forward(batches[k]);
  }
}

// One SGD step on the stage-1 objective; returns the logged components.
inline LossRecord depthgen_step(DepthgenModel& m, const dataio::Dataset& ds, const std::vector<std::size_t>& batch,
                                const TrainConfig& cfg, nn::Sgd& opt) {
  const nn::Var rgb(dataio::rgb_batch(ds, batch));
  const nn::Var gt(dataio::depth_batch(ds, batch));
  const std::vector<int> labels = dataio::labels_of(ds, batch);

  opt.zero_grad();
  const nn::Var gen = depthgen::generate_depth(rgb, m.generator, nn::Mode::Train);
  const nn::Var l_ps = depthgen::ps_loss(gen, gt);
  auto fc = m.backbone.classification_branch();
  const auto out = fc.forward(gen, nn::Mode::Train);
  const nn::Var l_dis = depthgen::ffdg_identity_loss(out.logits, labels);
  nn::Var l_mfs;
  if (cfg.mfs_on) {
    const std::vector<nn::Var> fgen(out.taps.begin(), out.taps.begin() + cfg.mfs_levels);
    const std::vector<nn::Var> fgt = depthgen::shallow_features(gt, m.backbone.feature_branch(), cfg.mfs_levels,
                                                                nn::Mode::Train);
    l_mfs = depthgen::mfs_loss(fgen, fgt);
  } else {
    l_mfs = nn::Var(nn::Tensor::scalar(0.0));
  }
  auto [total, b] = depthgen::ffdg_total_loss(l_ps, l_mfs, l_dis);
  nn::backward(total);
  opt.step();

  LossRecord r;
  r.l_ps = b.l_ps, r.l_mfs = b.l_mfs, r.l_dis = b.l_dis, r.lambda1 = b.lambda1, r.lambda2 = b.lambda2;
  r.total = b.l_total;
  return r;
}

// Held-out MAE (0-255 scale) with eval-mode batch norm.
inline double depthgen_validation_mae(const depthgen::GeneratorState& gen, const dataio::Dataset& ds,
                                      const std::vector<std::size_t>& indices, int chunk = 16) {
  nn::NoGradGuard guard;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < indices.size(); b += static_cast<std::size_t>(chunk)) {
    const std::vector<std::size_t> part(indices.begin() + static_cast<std::ptrdiff_t>(b),
                                        indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), b + chunk)));
    const nn::Tensor gt = dataio::depth_batch(ds, part);
    const nn::Var y = depthgen::generate_depth(nn::Var(dataio::rgb_batch(ds, part)), gen);
    sum += eval::mae(y.value(), gt) * static_cast<double>(gt.size());
    n += gt.size();
  }
  return sum / static_cast<double>(n);
}

// Stage 1: batched SGD on lambda1*L_PS + lambda2*L_MFS + L_dis with weights
// recomputed per batch; lr decays on a plateau of the held-out MAE.
inline DepthgenResult train_depthgen(const dataio::Dataset& ds, const TrainConfig& cfg,
                                     const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require<PreconditionError>(cfg.stage == Stage::Depthgen, "train_depthgen needs a depthgen-stage config");
  require<PreconditionError>(!ds.empty(), "train_depthgen: empty dataset");
  require_profile_resolution(ds, cfg.profile);
  Split split = identity_holdout(ds, cfg.holdout_fraction);
  require<PreconditionError>(split.train.size() >= static_cast<std::size_t>(cfg.batch_size), "training split has ",
                             split.train.size(), " samples, fewer than one batch of ", cfg.batch_size);

  DepthgenResult res{DepthgenModel(geometry_for(cfg.profile), ds.identity_count, sub_seed(cfg.seed, 1)),
                     TrainHistory{Stage::Depthgen, Direction::Lower, {}, {}}, std::move(split)};
  nn::Sgd opt(nn::collect_parameters(res.model), cfg.lr, cfg.momentum, cfg.weight_decay);
  PlateauScheduler sched(cfg.lr, cfg.patience, cfg.decay_factor, Direction::Lower);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto batches = make_batches(epoch_order(res.split.train, cfg.seed, Stage::Depthgen, epoch), cfg.batch_size);
    LossRecord mean;
    int step = 0;
    for (const auto& batch : batches) {
      const LossRecord r = depthgen_step(res.model, ds, batch, cfg, opt);
      res.history.steps.push_back({epoch, ++step, static_cast<int>(batch.size()), r});
      mean.accumulate(r);
    }
    mean.scale(1.0 / static_cast<double>(batches.size()));
    if (cfg.recalibrate_bn)
      recalibrate_batch_norm(make_batches(res.split.train, cfg.batch_size), [&](const std::vector<std::size_t>& b) {
        depthgen::generate_depth(nn::Var(dataio::rgb_batch(ds, b)), res.model.generator, nn::Mode::Train);
      });
    EpochRecord rec{epoch, mean, depthgen_validation_mae(res.model.generator, ds, res.split.val), opt.lr()};
    res.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    sched.observe(rec.val_metric);
    opt.set_lr(sched.lr());
  }
  return res;
}

// Same samples and tags with the depth channel replaced by Y' = F_g(X).
inline dataio::Dataset export_generated_depth(const dataio::Dataset& ds, const depthgen::GeneratorState& gen,
                                              int chunk = 16) {
  if (!ds.empty())
    require<ShapeError>(ds.height() == gen.input_size() && ds.width() == gen.input_size(), "dataset resolution ",
                        ds.height(), "x", ds.width(), " does not match the generator profile input ",
                        gen.input_size(), "x", gen.input_size());
  nn::NoGradGuard guard;
  dataio::Dataset out;
  out.identity_count = ds.identity_count;
  out.samples.reserve(ds.size());
  Fnv1a h;
  h.update_pod(ds.manifest_digest);
  h.update("generated-depth");
  const std::vector<std::size_t> all = dataio::all_indices(ds);
  for (std::size_t b = 0; b < all.size(); b += static_cast<std::size_t>(chunk)) {
    const std::vector<std::size_t> part(all.begin() + static_cast<std::ptrdiff_t>(b),
                                        all.begin() + static_cast<std::ptrdiff_t>(std::min(all.size(), b + chunk)));
    const nn::Var y = depthgen::generate_depth(nn::Var(dataio::rgb_batch(ds, part)), gen);
    for (std::size_t k = 0; k < part.size(); ++k) {
      const dataio::RgbdSample& s = ds.samples[part[k]];
      nn::Tensor d = y.value().slice_batch(static_cast<int>(k), static_cast<int>(k) + 1);
      h.update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(d.data()),
                                              d.size() * sizeof(double)));
      out.samples.push_back({s.rgb, dataio::DepthMap(d.reshaped({1, ds.height(), ds.width()})), s.identity, s.subset,
                             s.session});
    }
  }
  out.manifest_digest = h.digest();
  return out;
}

}  // namespace rgbdface::training
