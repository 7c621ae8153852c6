#include "murec/idw.hpp"

#include <algorithm>
#include <cmath>

namespace murec::idw {

void IdwConfig::validate() const {
  if (momentum < 0.0 || momentum > 1.0) throw ConfigError("momentum must be in [0,1]");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  wake.validate();
  calibration.validate();
}

double scott_bandwidth(const towers::Mat& reps) {
  const Eigen::Index n = reps.rows(), d = reps.cols();
  if (n < 2) throw ConfigError("scott_bandwidth: need at least 2 representations");
  double sigma_sum = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double mean = reps.col(j).mean();
    const double ss = (reps.col(j).array() - mean).square().sum();
    sigma_sum += std::sqrt(ss / static_cast<double>(n - 1));
  }
  const double sigma_bar = sigma_sum / static_cast<double>(d);
  const double factor =
      std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
  return std::max(factor * sigma_bar, 1e-6);
}

std::vector<double> kde_density(const towers::Mat& reps, const std::vector<double>& weights,
                                double bandwidth) {
  const int n = static_cast<int>(reps.rows());
  if (static_cast<int>(weights.size()) != n)
    throw ConfigError("kde_density: weight vector length mismatch");
  if (!(bandwidth > 0.0)) throw ConfigError("kde_density: bandwidth must be positive");
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("kde_density: weights must be nonnegative");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-6)
    throw ConfigError("kde_density: weights must sum to 1");

  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  const double inv_l = 1.0 / bandwidth;
  std::vector<double> density(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      const double u = (reps.row(i) - reps.row(k)).norm() * inv_l;
      acc += weights[k] * inv_sqrt_2pi * std::exp(-0.5 * u * u);
    }
    density[i] = acc * inv_l;
  }
  return density;
}

std::vector<double> relative_density(const std::vector<double>& density) {
  if (density.empty()) return {};
  const double lo = *std::min_element(density.begin(), density.end());
  const double hi = *std::max_element(density.begin(), density.end());
  std::vector<double> rel(density.size(), 0.0);
  if (hi > lo) {
    const double span = hi - lo;
    for (std::size_t i = 0; i < density.size(); ++i) rel[i] = (density[i] - lo) / span;
  }
  return rel;
}

std::vector<double> update_weights(const std::vector<double>& weights,
                                   const std::vector<double>& relative, double momentum,
                                   bool* degenerate) {
  if (weights.size() != relative.size())
    throw ConfigError("update_weights: size mismatch");
  if (degenerate) *degenerate = false;
  double h_sum = 0.0;
  for (double r : relative) h_sum += 1.0 - r;
  if (h_sum <= 0.0) {
    if (degenerate) *degenerate = true;
    return weights;
  }
  std::vector<double> next(weights.size());
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double h = (1.0 - relative[k]) / h_sum;
    next[k] = momentum * weights[k] + (1.0 - momentum) * h;
  }
  return next;
}

bool check_convergence(const std::vector<double>& w_old, const std::vector<double>& w_new,
                       double eta) {
  if (w_old.size() != w_new.size()) throw ConfigError("check_convergence: size mismatch");
  double ss = 0.0;
  for (std::size_t i = 0; i < w_old.size(); ++i) {
    const double d = w_new[i] - w_old[i];
    ss += d * d;
  }
  return std::sqrt(ss) < eta;
}

IdwResult run_idw(const data::DatasetSplits& splits, const data::ItemStats& stats,
                  const towers::TowerConfig& tower_cfg, const train::TrainConfig& base,
                  const IdwConfig& config, const eval::ClusterInfo* clusters,
                  const towers::TowerParams* warm_start) {
  config.validate();
  IdwResult result;

  towers::TowerParams params0 =
      warm_start ? *warm_start : towers::TowerParams::init(tower_cfg, base.rng_seed);
  result.initial = train::train(std::move(params0), splits, stats, base);
  towers::TowerParams params = result.initial.params;

  // w(0): normalized train-label frequencies.
  std::vector<double> w = stats.p;

  auto log_row = [&](int iteration, double delta) {
    IterRow row;
    row.iteration = iteration;
    row.delta_w = delta;
    if (clusters)
      row.ms = eval::mean_silhouette(towers::item_representations(params),
                                     clusters->item_cluster);
    const auto [hr, ndcg] = eval::quick_metrics(params, splits, splits.val, base.eval_k,
                                                base.eval_negatives, base.eval_seed);
    row.val_hr = hr;
    row.val_ndcg = ndcg;
    result.log.push_back(row);
  };

  for (int t = 1; t <= config.max_iterations; ++t) {
    result.iterations_run = t;

    // Sleep: re-estimate item weights from the representation space.
    const towers::Mat reps = towers::item_representations(params);
    const double bandwidth = scott_bandwidth(reps);
    const std::vector<double> density = kde_density(reps, w, bandwidth);
    const std::vector<double> relative = relative_density(density);
    std::vector<double> w_next = update_weights(w, relative, config.momentum);
    double delta = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = w_next[i] - w[i];
      delta += d * d;
    }
    delta = std::sqrt(delta);
    const bool converged = check_convergence(w, w_next, config.eta);
    w = std::move(w_next);

    if (converged) {
      result.converged = true;
      log_row(t, delta);
      break;
    }

    // Wake: weighted retraining, warm-started from the current parameters.
    train::TrainConfig wake_cfg = config.wake;
    wake_cfg.strategy = train::Strategy::external;
    wake_cfg.rng_seed = config.wake.rng_seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(t));
    params = train::train(params, splits, stats, wake_cfg, &w).params;
    log_row(t, delta);
  }

  params = train::freeze_item_tower_train(std::move(params), splits, stats, config.calibration)
               .params;
  result.params = std::move(params);
  result.weights = std::move(w);
  return result;
}

}  // namespace murec::idw
