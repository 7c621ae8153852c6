#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "murec/dataset.hpp"
#include "murec/towers.hpp"

namespace murec::train {

enum class Strategy {
  uniform,
  frequency,
  focal,
  qmargin,
  item_norm,
  item_norm_posthoc,
  external,
};

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 256;
  int max_epochs = 50;
  int patience = 3;  // early-stop epochs without validation HR@k improvement
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  Strategy strategy = Strategy::uniform;
  double focal_gamma = 2.0;
  double qmargin_max = 0.5;  // margins calibrated so max delta_y equals this
  std::uint64_t rng_seed = 1;
  int eval_k = 20;
  int eval_negatives = 99;
  std::uint64_t eval_seed = 9001;

  void validate() const;
};

// Resolved per-item weighting rule for one strategy.
struct StrategyPlan {
  std::vector<double> item_weights;  // w_y; empty means all ones
  bool focal = false;
  double focal_gamma = 2.0;
  std::vector<double> margins;  // per item, empty unless qmargin
  bool normalize_train = false;
  bool normalize_eval = false;
  long excluded_items = 0;  // items with p(y) = 0 dropped from the rule
};

StrategyPlan strategy_weights(Strategy strategy, const data::ItemStats& stats,
                              double focal_gamma = 2.0, double qmargin_max = 0.5,
                              const std::vector<double>* external = nullptr);

class Adam {
 public:
  Adam(const towers::TowerParams& shape, double lr, double beta1, double beta2, double eps);
  void step(towers::TowerParams& params, const towers::TowerParams& grads,
            bool freeze_item_tower = false);
  long steps() const { return t_; }

 private:
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_hr = 0.0;
  double val_ndcg = 0.0;
};

struct TrainResult {
  towers::TowerParams params;  // checkpoint with the best validation HR
  std::vector<EpochRow> history;
  int best_epoch = 0;
  double best_val_hr = 0.0;
};

TrainResult train(towers::TowerParams params, const data::DatasetSplits& splits,
                  const data::ItemStats& stats, const TrainConfig& config,
                  const std::vector<double>* external_weights = nullptr,
                  bool freeze_item_tower = false);

// User-tower calibration: the item tower receives zero updates while the
// user tower trains with the unweighted loss.
TrainResult freeze_item_tower_train(towers::TowerParams params, const data::DatasetSplits& splits,
                                    const data::ItemStats& stats, const TrainConfig& config);

}  // namespace murec::train
