#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>

#include "rgbdface/fusion/model.hpp"
#include "rgbdface/profile.hpp"

namespace rgbdface::training {

enum class Stage { Depthgen, Fusion };

inline std::string_view to_string(Stage s) { return s == Stage::Depthgen ? "depthgen" : "fusion"; }

inline std::optional<Stage> parse_stage(std::string_view s) {
  if (s == "depthgen") return Stage::Depthgen;
  if (s == "fusion") return Stage::Fusion;
  return std::nullopt;
}

// Which way the validation metric improves.
enum class Direction { Lower, Higher };

struct TrainConfig {
  Stage stage = Stage::Depthgen;
  int batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double decay_factor = 0.5;
  int patience = 5;
  int max_epochs = 30;
  std::uint64_t seed = 0;
  bool mfs_on = true;
  bool cic_on = true;
  bool cfe_on = true;
  int mfs_levels = 3;
  double lambda = 0.5;
  fusion::ArcParams arc{};
  Profile profile = Profile::Full;
  // Stage 1 holds out the last ceil(fraction * identity_count) identities.
  // Stage 2 holds out the last ceil(fraction * n) samples of every identity.
  double holdout_fraction = 0.1;
  // Re-estimate batch-norm running statistics over the training split before
  // each validation pass.
  bool recalibrate_bn = true;

  static TrainConfig defaults(Stage s) {
    TrainConfig c;
    c.stage = s;
    if (s == Stage::Fusion) {
      c.batch_size = 4;
      c.lr = 0.001;
      c.holdout_fraction = 0.25;
    }
    return c;
  }

  Direction direction() const { return stage == Stage::Depthgen ? Direction::Lower : Direction::Higher; }

  void validate() const {
    require<PreconditionError>(batch_size >= 1, "batch_size must be >= 1, got ", batch_size);
    require<PreconditionError>(lr > 0.0 && std::isfinite(lr), "lr must be positive, got ", lr);
    require<PreconditionError>(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1), got ", momentum);
    require<PreconditionError>(weight_decay >= 0.0, "weight_decay must be >= 0, got ", weight_decay);
    require<PreconditionError>(decay_factor > 0.0 && decay_factor < 1.0, "decay_factor must be in (0, 1), got ",
                               decay_factor);
    require<PreconditionError>(patience >= 1, "patience must be >= 1, got ", patience);
    require<PreconditionError>(max_epochs >= 1, "max_epochs must be >= 1, got ", max_epochs);
    require<PreconditionError>(mfs_levels >= 1 && mfs_levels <= 4, "mfs_levels must be in [1, 4], got ",
                               mfs_levels);
    require<PreconditionError>(lambda >= 0.0 && std::isfinite(lambda), "lambda must be >= 0, got ", lambda);
    require<PreconditionError>(holdout_fraction > 0.0 && holdout_fraction < 1.0,
                               "holdout_fraction must be in (0, 1), got ", holdout_fraction);
    arc.validate();
  }
};

}  // namespace rgbdface::training
