#pragma once

#include <cmath>
#include <span>

#include "rgbdface/error.hpp"
#include "rgbdface/training/config.hpp"

namespace rgbdface::training {

// Reduce-on-plateau: after `patience` consecutive epochs without a strict
// improvement over the best metric so far, multiply lr by `factor` and start
// counting again.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor, Direction direction)
      : lr_(lr), patience_(patience), factor_(factor), direction_(direction) {
    require<PreconditionError>(patience >= 1, "patience must be >= 1, got ", patience);
    require<PreconditionError>(factor > 0.0 && factor < 1.0, "decay factor must be in (0, 1), got ", factor);
  }

  // Feeds one epoch's metric; returns true when the lr was decayed.
  bool observe(double metric) {
    require<PreconditionError>(std::isfinite(metric), "plateau metric is not finite: ", metric);
    if (!seen_ || better(metric)) {
      best_ = metric;
      seen_ = true;
      stall_ = 0;
      return false;
    }
    if (++stall_ >= patience_) {
      lr_ *= factor_;
      stall_ = 0;
      return true;
    }
    return false;
  }

  double lr() const { return lr_; }
  double best() const { return best_; }
  int stall() const { return stall_; }

 private:
  bool better(double m) const { return direction_ == Direction::Lower ? m < best_ : m > best_; }

  double lr_;
  int patience_;
  double factor_;
  Direction direction_;
  double best_ = 0.0;
  bool seen_ = false;
  int stall_ = 0;
};

// Stateless form: replays `history` and returns current_lr * factor if the
// last epoch triggers a decay, else current_lr.
inline double plateau_schedule(std::span<const double> history, double current_lr, int patience, double factor,
                               Direction direction = Direction::Higher) {
  require<PreconditionError>(!history.empty(), "plateau_schedule: empty metric history");
  PlateauScheduler s(1.0, patience, factor, direction);
  bool decayed = false;
  for (double m : history) decayed = s.observe(m);
  return decayed ? current_lr * factor : current_lr;
}

}  // namespace rgbdface::training
