#include "murec/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "murec/eval.hpp"
#include "murec/rng.hpp"

namespace murec::train {

Strategy parse_strategy(const std::string& name) {
  if (name == "uniform") return Strategy::uniform;
  if (name == "frequency") return Strategy::frequency;
  if (name == "focal") return Strategy::focal;
  if (name == "qmargin") return Strategy::qmargin;
  if (name == "item_norm") return Strategy::item_norm;
  if (name == "item_norm_posthoc") return Strategy::item_norm_posthoc;
  if (name == "external" || name == "external_weights") return Strategy::external;
  throw ConfigError("unknown strategy: " + name);
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::uniform: return "uniform";
    case Strategy::frequency: return "frequency";
    case Strategy::focal: return "focal";
    case Strategy::qmargin: return "qmargin";
    case Strategy::item_norm: return "item_norm";
    case Strategy::item_norm_posthoc: return "item_norm_posthoc";
    case Strategy::external: return "external";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be nonnegative");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (max_epochs < 0) throw ConfigError("max_epochs must be nonnegative");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (eval_k < 1) throw ConfigError("eval_k must be positive");
  if (eval_negatives < eval_k - 1) throw ConfigError("eval_k must not exceed eval_negatives + 1");
}

StrategyPlan strategy_weights(Strategy strategy, const data::ItemStats& stats, double focal_gamma,
                              double qmargin_max, const std::vector<double>* external) {
  StrategyPlan plan;
  const int n = stats.num_items();
  switch (strategy) {
    case Strategy::uniform:
      plan.item_weights.assign(n, 1.0);
      break;
    case Strategy::frequency: {
      // w_y = 1/p(y), normalized to mean 1 over observed items.
      plan.item_weights.assign(n, 0.0);
      double sum = 0.0;
      long observed = 0;
      for (int i = 0; i < n; ++i) {
        if (stats.p[i] > 0.0) {
          plan.item_weights[i] = 1.0 / stats.p[i];
          sum += plan.item_weights[i];
          ++observed;
        } else {
          ++plan.excluded_items;
        }
      }
      if (observed == 0) throw ConfigError("frequency weights: no observed items");
      const double mean = sum / static_cast<double>(observed);
      for (double& w : plan.item_weights) w /= mean;
      break;
    }
    case Strategy::focal:
      plan.focal = true;
      plan.focal_gamma = focal_gamma;
      break;
    case Strategy::qmargin: {
      // delta_y = scale * p(y)^(-1/4), scale chosen so max delta = qmargin_max.
      plan.margins.assign(n, 0.0);
      double max_raw = 0.0;
      for (int i = 0; i < n; ++i) {
        if (stats.p[i] > 0.0)
          max_raw = std::max(max_raw, std::pow(stats.p[i], -0.25));
        else
          ++plan.excluded_items;
      }
      if (max_raw <= 0.0) throw ConfigError("qmargin: no observed items");
      const double scale = qmargin_max / max_raw;
      for (int i = 0; i < n; ++i)
        if (stats.p[i] > 0.0) plan.margins[i] = scale * std::pow(stats.p[i], -0.25);
      break;
    }
    case Strategy::item_norm:
      plan.normalize_train = true;
      plan.normalize_eval = true;
      break;
    case Strategy::item_norm_posthoc:
      plan.normalize_eval = true;
      break;
    case Strategy::external: {
      if (!external) throw ConfigError("external strategy needs a weight table");
      if (static_cast<int>(external->size()) != n)
        throw ConfigError("external weight table size mismatch");
      for (double w : *external)
        if (!(w >= 0.0) || !std::isfinite(w))
          throw ConfigError("external weights must be finite and nonnegative");
      plan.item_weights = *external;
      break;
    }
  }
  return plan;
}

Adam::Adam(const towers::TowerParams& shape, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const towers::TensorRef& t : shape.tensors()) {
    m_.emplace_back(t.size, 0.0);
    v_.emplace_back(t.size, 0.0);
  }
}

void Adam::step(towers::TowerParams& params, const towers::TowerParams& grads,
                bool freeze_item_tower) {
  ++t_;
  const auto pt = params.tensors();
  const auto gt = grads.tensors();
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < pt.size(); ++k) {
    if (freeze_item_tower && pt[k].item_tower) continue;
    double* p = pt[k].data;
    const double* g = gt[k].data;
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (Eigen::Index i = 0; i < pt[k].size; ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

TrainResult train(towers::TowerParams params, const data::DatasetSplits& splits,
                  const data::ItemStats& stats, const TrainConfig& config,
                  const std::vector<double>* external_weights, bool freeze_item_tower) {
  config.validate();
  if (splits.train.empty()) throw ConfigError("train: empty train split");

  StrategyPlan plan = strategy_weights(config.strategy, stats, config.focal_gamma,
                                       config.qmargin_max, external_weights);
  if (plan.normalize_train) params.cfg.normalize_items = true;

  towers::LossOpts opts;
  opts.focal = plan.focal;
  opts.focal_gamma = plan.focal_gamma;
  if (!plan.margins.empty()) opts.margins = &plan.margins;
  opts.normalize_items = params.cfg.normalize_items;

  Adam optimizer(params, config.learning_rate, config.adam_beta1, config.adam_beta2,
                 config.adam_eps);
  towers::TowerParams grads = towers::TowerParams::zeros_like(params);

  TrainResult result;
  result.params = params;
  result.best_val_hr = -1.0;
  int since_best = 0;

  std::vector<std::size_t> order(splits.train.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<towers::BatchItem> batch;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng = Rng::derive(config.rng_seed, 0x5affull + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    long seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t bsize =
          std::min<std::size_t>(config.batch_size, order.size() - start);
      if (bsize < 2) break;  // drop a trailing singleton batch
      batch.clear();
      opts.example_weights.clear();
      for (std::size_t b = 0; b < bsize; ++b) {
        const data::ExampleRef& ref = splits.train[order[start + b]];
        towers::BatchItem item;
        item.ctx = splits.context_of(ref);
        item.len = splits.context_len(ref);
        item.label = splits.label_of(ref);
        batch.push_back(item);
        opts.example_weights.push_back(
            plan.item_weights.empty() ? 1.0 : plan.item_weights[item.label]);
      }
      grads.set_zero();
      const towers::LossResult res = towers::batch_softmax_loss(params, batch, stats, opts, &grads);
      if (!std::isfinite(res.loss))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(start / config.batch_size));
      optimizer.step(params, grads, freeze_item_tower);
      loss_sum += res.loss * static_cast<double>(bsize);
      seen += static_cast<long>(bsize);
    }

    const auto [val_hr, val_ndcg] = eval::quick_metrics(
        params, splits, splits.val, config.eval_k, config.eval_negatives, config.eval_seed);
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(seen);
    row.val_hr = val_hr;
    row.val_ndcg = val_ndcg;
    result.history.push_back(row);

    if (val_hr > result.best_val_hr) {
      result.best_val_hr = val_hr;
      result.best_epoch = epoch;
      result.params = params;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= config.patience) break;
  }

  if (plan.normalize_eval) result.params.cfg.normalize_items = true;
  return result;
}

TrainResult freeze_item_tower_train(towers::TowerParams params, const data::DatasetSplits& splits,
                                    const data::ItemStats& stats, const TrainConfig& config) {
  TrainConfig calib = config;
  calib.strategy = Strategy::uniform;
  return train(std::move(params), splits, stats, calib, nullptr, /*freeze_item_tower=*/true);
}

}  // namespace murec::train
