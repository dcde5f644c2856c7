#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "rgbdface/training/config.hpp"

namespace rgbdface::training {

// Loss components of one step or the batch mean over one epoch. Components a
// stage does not use stay 0.
struct LossRecord {
  double l_ps = 0.0;
  double l_mfs = 0.0;
  double l_dis = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double l_cic = 0.0;
  double l_cfe = 0.0;
  double total = 0.0;

  void accumulate(const LossRecord& o) {
    l_ps += o.l_ps, l_mfs += o.l_mfs, l_dis += o.l_dis, lambda1 += o.lambda1, lambda2 += o.lambda2;
    l_cic += o.l_cic, l_cfe += o.l_cfe, total += o.total;
  }
  void scale(double s) {
    l_ps *= s, l_mfs *= s, l_dis *= s, lambda1 *= s, lambda2 *= s, l_cic *= s, l_cfe *= s, total *= s;
  }
};

struct StepRecord {
  int epoch = 0;
  int step = 0;
  int batch = 0;
  LossRecord loss;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  LossRecord loss;
  double val_metric = 0.0;
  double lr = 0.0;  // in effect during this epoch
};

struct TrainHistory {
  Stage stage = Stage::Depthgen;
  Direction direction = Direction::Lower;
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;

  std::vector<double> metrics() const {
    std::vector<double> out;
    for (const EpochRecord& e : epochs) out.push_back(e.val_metric);
    return out;
  }
};

namespace detail {
inline void append_g17(std::string& s, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  s += buf;
}
inline void append_loss(std::string& s, const LossRecord& r) {
  for (double v : {r.l_ps, r.l_mfs, r.l_dis, r.lambda1, r.lambda2, r.l_cic, r.l_cfe, r.total}) {
    append_g17(s, v);
    s += ',';
  }
}
}  // namespace detail

inline constexpr const char* kHistoryHeader = "epoch,l_ps,l_mfs,l_dis,lambda1,lambda2,l_cic,l_cfe,total,val_metric,lr";

// Full-precision CSV; identical histories give identical bytes.
inline std::string history_csv(const TrainHistory& h) {
  std::string s = kHistoryHeader;
  s += '\n';
  for (const EpochRecord& e : h.epochs) {
    s += std::to_string(e.epoch);
    s += ',';
    detail::append_loss(s, e.loss);
    detail::append_g17(s, e.val_metric);
    s += ',';
    detail::append_g17(s, e.lr);
    s += '\n';
  }
  return s;
}

inline std::string steps_csv(const TrainHistory& h) {
  std::string s = "epoch,step,batch,l_ps,l_mfs,l_dis,lambda1,lambda2,l_cic,l_cfe,total\n";
  for (const StepRecord& r : h.steps) {
    s += std::to_string(r.epoch) + ',' + std::to_string(r.step) + ',' + std::to_string(r.batch) + ',';
    detail::append_loss(s, r.loss);
    s.back() = '\n';
  }
  return s;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require<std::runtime_error>(static_cast<bool>(out), "cannot open ", path, " for writing");
  out << text;
  require<std::runtime_error>(static_cast<bool>(out), "write to ", path, " failed");
}

}  // namespace rgbdface::training
