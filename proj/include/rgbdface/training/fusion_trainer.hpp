#pragma once

#include <vector>

#include "rgbdface/eval/pipeline.hpp"
#include "rgbdface/fusion/losses.hpp"
#include "rgbdface/nn/sgd.hpp"
#include "rgbdface/training/depthgen_trainer.hpp"

namespace rgbdface::training {

struct FusionResult {
  fusion::FusionModel model;
  TrainHistory history;
  Split split;
  dataio::EvalProtocol val_protocol;
};

// Gallery: per identity the preferred (NU, S1) training sample; probes: the
// held-out samples.
inline dataio::EvalProtocol validation_protocol(const dataio::Dataset& ds, const Split& split) {
  dataio::GalleryRule rule;
  rule.allow_gallery_only = true;
  dataio::EvalProtocol p = dataio::build_protocol(ds, rule, split.train);
  p.probe_indices = split.val;
  p.subset_of.clear();
  for (std::size_t i : p.probe_indices) p.subset_of[i] = ds.samples[i].subset;
  return p;
}

inline LossRecord fusion_step(fusion::FusionModel& m, const dataio::Dataset& ds, const std::vector<std::size_t>& batch,
                              const TrainConfig& cfg, nn::Sgd& opt) {
  const nn::Var rgb(dataio::rgb_batch(ds, batch));
  const nn::Var depth(dataio::depth_batch(ds, batch));
  const std::vector<int> labels = dataio::labels_of(ds, batch);

  opt.zero_grad();
  const fusion::SeparatedEmbeddings e = fusion::extract_and_separate(rgb, depth, m.streams, m.heads, nn::Mode::Train);
  nn::Var l_cic, l_cfe;
  if (cfg.cic_on) l_cic = fusion::cic_loss(e.rgb_shared, e.depth_shared);
  if (cfg.cfe_on) l_cfe = fusion::cfe_loss(e.rgb_specific, e.depth_specific);
  const nn::Var l_dis = fusion::arc_identity_loss(e, labels, m.rgb_classifier, m.depth_classifier);
  const nn::Var total = fusion::mcfl_total_loss(l_cic, l_cfe, l_dis, cfg.lambda);
  nn::backward(total);
  opt.step();

  LossRecord r;
  r.l_cic = l_cic.defined() ? l_cic.item() : 0.0;
  r.l_cfe = l_cfe.defined() ? l_cfe.item() : 0.0;
  r.l_dis = l_dis.item();
  r.total = total.item();
  return r;
}

// Stage 2: batched SGD on L_CIC + L_CFE + lambda * L_dis (disabled terms are
// left out of the graph); lr decays on a plateau of held-out rank-1 accuracy.
inline FusionResult train_fusion(const dataio::Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require<PreconditionError>(cfg.stage == Stage::Fusion, "train_fusion needs a fusion-stage config");
  require<PreconditionError>(!ds.empty(), "train_fusion: empty dataset");
  require<PreconditionError>(ds.identity_count >= 2, "train_fusion needs >= 2 identities, got ", ds.identity_count);
  require_profile_resolution(ds, cfg.profile);
  Split split = sample_holdout(ds, cfg.holdout_fraction);
  require<PreconditionError>(split.train.size() >= static_cast<std::size_t>(cfg.batch_size), "training split has ",
                             split.train.size(), " samples, fewer than one batch of ", cfg.batch_size);

  const Geometry geom = geometry_for(cfg.profile);
  FusionResult res{fusion::FusionModel(geom, ds.identity_count, cfg.arc, sub_seed(cfg.seed, 2)),
                   TrainHistory{Stage::Fusion, Direction::Higher, {}, {}}, std::move(split), {}};
  res.val_protocol = validation_protocol(ds, res.split);
  nn::Sgd opt(nn::collect_parameters(res.model), cfg.lr, cfg.momentum, cfg.weight_decay);
  PlateauScheduler sched(cfg.lr, cfg.patience, cfg.decay_factor, Direction::Higher);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto batches = make_batches(epoch_order(res.split.train, cfg.seed, Stage::Fusion, epoch), cfg.batch_size);
    LossRecord mean;
    int step = 0;
    for (const auto& batch : batches) {
      const LossRecord r = fusion_step(res.model, ds, batch, cfg, opt);
      res.history.steps.push_back({epoch, ++step, static_cast<int>(batch.size()), r});
      mean.accumulate(r);
    }
    mean.scale(1.0 / static_cast<double>(batches.size()));
    if (cfg.recalibrate_bn)
      recalibrate_batch_norm(make_batches(res.split.train, cfg.batch_size), [&](const std::vector<std::size_t>& b) {
        fusion::extract_and_separate(nn::Var(dataio::rgb_batch(ds, b)), nn::Var(dataio::depth_batch(ds, b)),
                                     res.model.streams, res.model.heads, nn::Mode::Train);
      });
    const double acc = eval::evaluate_protocol(res.model, ds, res.val_protocol).report.overall_accuracy();
    EpochRecord rec{epoch, mean, acc, opt.lr()};
    res.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    sched.observe(rec.val_metric);
    opt.set_lr(sched.lr());
  }
  return res;
}

}  // namespace rgbdface::training
