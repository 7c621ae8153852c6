#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "murec/rng.hpp"
#include "murec/towers.hpp"

namespace murec::testsupport {

inline data::ItemStats uniform_stats(int num_items) {
  data::ItemStats stats;
  stats.counts.assign(num_items, 1);
  stats.total = num_items;
  stats.p.assign(num_items, 1.0 / num_items);
  stats.logp.assign(num_items, std::log(1.0 / num_items));
  stats.in_head.assign(num_items, 0);
  return stats;
}

inline data::ItemStats ramp_stats(int num_items) {
  data::ItemStats stats;
  stats.counts.resize(num_items);
  stats.p.resize(num_items);
  stats.logp.resize(num_items);
  long total = 0;
  for (int i = 0; i < num_items; ++i) {
    stats.counts[i] = i + 1;
    total += i + 1;
  }
  stats.total = total;
  for (int i = 0; i < num_items; ++i) {
    stats.p[i] = static_cast<double>(i + 1) / total;
    stats.logp[i] = std::log(stats.p[i]);
  }
  stats.in_head.assign(num_items, 0);
  return stats;
}

struct Instance {
  towers::TowerParams params;
  std::vector<std::vector<int>> contexts;
  std::vector<towers::BatchItem> batch;
  data::ItemStats stats;
  towers::LossOpts opts;
};

inline Instance random_instance(std::uint64_t seed, int d, int heads, int layers, int M,
                                int num_items, int batch_size, bool shared, bool dup_labels) {
  Instance inst;
  towers::TowerConfig cfg;
  cfg.embed_dim = d;
  cfg.attention_heads = heads;
  cfg.encoder_layers = layers;
  cfg.num_reps = M;
  cfg.num_items = num_items;
  cfg.max_len = 8;
  cfg.share_embeddings = shared;
  inst.params = towers::TowerParams::init(cfg, seed);
  inst.stats = ramp_stats(num_items);

  Rng rng(seed * 31 + 7);
  for (int b = 0; b < batch_size; ++b) {
    const int len = 1 + rng.uniform_int(cfg.max_len - 2);
    std::vector<int> ctx(len);
    for (int& c : ctx) c = rng.uniform_int(num_items);
    inst.contexts.push_back(ctx);
  }
  for (int b = 0; b < batch_size; ++b) {
    towers::BatchItem item;
    item.ctx = inst.contexts[b].data();
    item.len = static_cast<int>(inst.contexts[b].size());
    item.label = rng.uniform_int(num_items);
    inst.batch.push_back(item);
  }
  if (dup_labels && batch_size >= 2) inst.batch[1].label = inst.batch[0].label;
  return inst;
}

// Central finite differences over every entry of every parameter tensor;
// returns the worst relative disagreement with the analytic gradients.
inline double max_grad_rel_error(towers::TowerParams& params, const towers::TowerParams& grads,
                                 const std::function<double()>& loss_fn, double h = 1e-5) {
  double worst = 0.0;
  const auto pt = params.tensors();
  const auto gt = grads.tensors();
  for (std::size_t k = 0; k < pt.size(); ++k) {
    for (Eigen::Index i = 0; i < pt[k].size; ++i) {
      const double saved = pt[k].data[i];
      pt[k].data[i] = saved + h;
      const double up = loss_fn();
      pt[k].data[i] = saved - h;
      const double down = loss_fn();
      pt[k].data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = gt[k].data[i];
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

struct GradCheckKnobs {
  std::uint64_t seed;
  int d, heads, layers, M, items, batch;
  bool shared, dup, focal, margins, normalize;
  double w0;
};

// Randomized configurations covering every tensor under each loss variant.
inline const std::vector<GradCheckKnobs>& grad_check_cases() {
  static const std::vector<GradCheckKnobs> cases = {
      {21, 4, 1, 1, 1, 6, 2, false, false, false, false, false, 1.0},
      {22, 4, 2, 1, 2, 6, 3, false, false, false, false, false, 0.5},
      {23, 4, 2, 2, 3, 8, 3, false, true, false, false, false, 1.0},
      {24, 8, 4, 1, 2, 6, 3, false, false, true, false, false, 1.0},
      {25, 4, 2, 1, 2, 6, 3, false, false, false, true, false, 1.0},
      {26, 4, 2, 1, 2, 6, 3, false, false, false, false, true, 1.0},
      {27, 4, 2, 2, 2, 6, 3, true, false, false, false, false, 1.0},
      {28, 4, 4, 2, 1, 6, 4, false, false, false, false, false, 0.0},
      {29, 8, 2, 2, 5, 10, 4, false, true, true, false, false, 1.0},
      {30, 4, 1, 2, 2, 6, 3, false, false, false, true, true, 0.7},
      {31, 4, 2, 1, 4, 7, 5, false, false, false, false, false, 1.0},
      {32, 8, 4, 2, 2, 9, 3, true, true, false, false, false, 0.3},
      {33, 4, 2, 1, 1, 6, 2, false, false, true, true, false, 1.0},
      {34, 4, 2, 2, 3, 6, 3, false, false, false, false, true, 0.2},
      {35, 8, 2, 1, 2, 8, 4, false, false, true, false, true, 1.0},
      {36, 4, 4, 1, 2, 6, 3, false, true, false, true, false, 1.0},
      {37, 4, 2, 2, 2, 6, 2, true, false, true, false, false, 1.0},
      {38, 8, 8, 1, 3, 8, 3, false, false, false, false, false, 1.0},
      {39, 4, 2, 2, 2, 6, 3, false, false, true, true, true, 0.6},
      {40, 8, 4, 2, 5, 12, 4, false, false, false, false, false, 1.0},
  };
  return cases;
}

// Runs one knobbed gradient check; returns the worst relative error.
inline double run_grad_check_case(const GradCheckKnobs& k) {
  Instance inst =
      random_instance(k.seed, k.d, k.heads, k.layers, k.M, k.items, k.batch, k.shared, k.dup);
  inst.opts.focal = k.focal;
  inst.opts.focal_gamma = 2.0;
  std::vector<double> margins;
  if (k.margins) {
    margins.resize(k.items);
    for (int i = 0; i < k.items; ++i) margins[i] = 0.05 * (i % 4);
    inst.opts.margins = &margins;
  }
  inst.opts.normalize_items = k.normalize;
  inst.opts.example_weights.assign(k.batch, 1.0);
  inst.opts.example_weights[0] = k.w0;

  towers::TowerParams grads = towers::TowerParams::zeros_like(inst.params);
  towers::batch_softmax_loss(inst.params, inst.batch, inst.stats, inst.opts, &grads);
  auto loss_fn = [&]() {
    return towers::batch_softmax_loss(inst.params, inst.batch, inst.stats, inst.opts, nullptr)
        .loss;
  };
  return max_grad_rel_error(inst.params, grads, loss_fn);
}

// Reference silhouette: a literal transcription of the definition.
inline double silhouette_oracle(const towers::Mat& reps, const std::vector<int>& clusters) {
  const int n = static_cast<int>(reps.rows());
  int num_clusters = 0;
  for (int c : clusters) num_clusters = std::max(num_clusters, c + 1);
  double total = 0.0;
  for (int p = 0; p < n; ++p) {
    long own_size = 0;
    for (int q = 0; q < n; ++q)
      if (clusters[q] == clusters[p]) ++own_size;
    if (own_size <= 1) continue;
    double a = 0.0;
    for (int q = 0; q < n; ++q)
      if (q != p && clusters[q] == clusters[p]) a += (reps.row(p) - reps.row(q)).norm();
    a /= static_cast<double>(own_size - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < num_clusters; ++c) {
      if (c == clusters[p]) continue;
      double sum = 0.0;
      long count = 0;
      for (int q = 0; q < n; ++q)
        if (clusters[q] == c) {
          sum += (reps.row(p) - reps.row(q)).norm();
          ++count;
        }
      if (count > 0) b = std::min(b, sum / static_cast<double>(count));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

inline std::vector<double> kde_oracle(const towers::Mat& reps, const std::vector<double>& w,
                                      double l) {
  const int n = static_cast<int>(reps.rows());
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      const double u = (reps.row(i) - reps.row(k)).norm() / l;
      acc += w[k] * 0.3989422804014327 * std::exp(-0.5 * u * u);
    }
    out[i] = acc / l;
  }
  return out;
}

inline bool params_equal(const towers::TowerParams& a, const towers::TowerParams& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t k = 0; k < ta.size(); ++k) {
    if (ta[k].size != tb[k].size) return false;
    for (Eigen::Index i = 0; i < ta[k].size; ++i)
      if (ta[k].data[i] != tb[k].data[i]) return false;
  }
  return true;
}

}  // namespace murec::testsupport
