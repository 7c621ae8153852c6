#pragma once

#include <limits>
#include <vector>

#include "murec/eval.hpp"
#include "murec/training.hpp"

namespace murec::idw {

struct IdwConfig {
  double momentum = 0.9;   // m; 1 keeps the initial weights forever
  double eta = 3e-4;       // stop when ||w(t+1) - w(t)||_2 drops below this
  int max_iterations = 15; // MAX_T
  train::TrainConfig wake;         // weighted retraining per iteration
  train::TrainConfig calibration;  // final user-tower-only training

  IdwConfig() {
    wake.patience = 2;
  }
  void validate() const;
};

struct IterRow {
  int iteration = 0;
  double delta_w = 0.0;
  double ms = std::numeric_limits<double>::quiet_NaN();  // NaN without ground truth
  double val_hr = 0.0;
  double val_ndcg = 0.0;
};

struct IdwResult {
  towers::TowerParams params;
  std::vector<IterRow> log;
  std::vector<double> weights;  // final w
  train::TrainResult initial;   // unweighted baseline training
  int iterations_run = 0;
  bool converged = false;
};

// Scott's rule with a scalar bandwidth: N^(-1/(d+4)) times the mean
// per-dimension sample standard deviation, floored at 1e-6.
double scott_bandwidth(const towers::Mat& reps);

// Weighted Gaussian KDE evaluated at every item's own representation:
// p~(y) = (1/l) sum_k w_k K(||y - v_k|| / l), including the self term.
std::vector<double> kde_density(const towers::Mat& reps, const std::vector<double>& weights,
                                double bandwidth);

// Min-max rescaling into [0,1]; all zeros when the density is constant.
std::vector<double> relative_density(const std::vector<double>& density);

// w(t+1) = m w(t) + (1-m) h / sum(h) with h = 1 - p'. Keeps w on the simplex.
// A degenerate all-zero h leaves w unchanged (flag reported when requested).
std::vector<double> update_weights(const std::vector<double>& weights,
                                   const std::vector<double>& relative, double momentum,
                                   bool* degenerate = nullptr);

bool check_convergence(const std::vector<double>& w_old, const std::vector<double>& w_new,
                       double eta);

IdwResult run_idw(const data::DatasetSplits& splits, const data::ItemStats& stats,
                  const towers::TowerConfig& tower_cfg, const train::TrainConfig& base,
                  const IdwConfig& config, const eval::ClusterInfo* clusters = nullptr,
                  const towers::TowerParams* warm_start = nullptr);

}  // namespace murec::idw
