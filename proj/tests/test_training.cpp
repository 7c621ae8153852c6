#include <doctest.h>

#include <cmath>

#include "murec/eval.hpp"
#include "murec/synthetic.hpp"
#include "murec/training.hpp"

using namespace murec;
using namespace murec::train;

namespace {

struct Task {
  data::DatasetSplits splits;
  data::ItemStats stats;
  towers::TowerConfig tower;
  TrainConfig cfg;
};

Task tiny_task(std::uint64_t seed, int users = 120, double exponent = 0.0, int clusters = 2,
               int items_per_cluster = 10) {
  synth::SynthConfig scfg;
  scfg.num_clusters = clusters;
  scfg.items_per_cluster = items_per_cluster;
  scfg.num_users = users;
  scfg.seq_len = 10;
  scfg.interest_exponent = exponent;
  scfg.interests_per_user = std::min(2, clusters);
  if (clusters == 2) {
    scfg.alpha = 0.7;
    scfg.gamma = 0.3;  // both clusters are interests: alpha + gamma = 1
  }
  scfg.rng_seed = seed;
  const auto ds = synth::generate_dataset(scfg);

  Task task;
  task.splits = data::make_splits(ds.log);
  task.stats = data::compute_item_stats(task.splits);
  task.tower.embed_dim = 8;
  task.tower.attention_heads = 2;
  task.tower.encoder_layers = 1;
  task.tower.num_reps = 2;
  task.tower.num_items = task.splits.num_items;
  task.cfg.batch_size = 32;
  task.cfg.max_epochs = 3;
  task.cfg.patience = 2;
  task.cfg.rng_seed = seed;
  task.cfg.eval_k = 5;  // only ~20 items: 99-negative evaluation cannot apply
  task.cfg.eval_negatives = 9;
  return task;
}

bool params_equal(const towers::TowerParams& a, const towers::TowerParams& b) {
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

}  // namespace

TEST_CASE("strategy_weights: frequency balance on balanced data is a fixed point") {
  data::ItemStats stats;
  stats.counts = {10, 10};
  stats.total = 20;
  stats.p = {0.5, 0.5};
  stats.logp = {std::log(0.5), std::log(0.5)};
  const auto plan = strategy_weights(Strategy::frequency, stats);
  CHECK(plan.item_weights[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(plan.item_weights[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("strategy_weights: frequency ratio follows inverse probability") {
  data::ItemStats stats;
  stats.counts = {9, 1};
  stats.total = 10;
  stats.p = {0.9, 0.1};
  stats.logp = {std::log(0.9), std::log(0.1)};
  const auto plan = strategy_weights(Strategy::frequency, stats);
  CHECK(plan.item_weights[1] / plan.item_weights[0] == doctest::Approx(9.0).epsilon(1e-12));
  // mean-1 normalization over observed items
  CHECK((plan.item_weights[0] + plan.item_weights[1]) / 2.0 ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("strategy_weights: frequency excludes unseen items with a count") {
  data::ItemStats stats;
  stats.counts = {4, 0, 4};
  stats.total = 8;
  stats.p = {0.5, 0.0, 0.5};
  stats.logp = {std::log(0.5), 0.0, std::log(0.5)};
  const auto plan = strategy_weights(Strategy::frequency, stats);
  CHECK(plan.excluded_items == 1);
  CHECK(plan.item_weights[1] == 0.0);
}

TEST_CASE("strategy_weights: qmargin margins nonincreasing in p, capped at the max") {
  data::ItemStats stats;
  stats.counts = {1, 4, 16, 64};
  stats.total = 85;
  stats.p.resize(4);
  stats.logp.resize(4);
  for (int i = 0; i < 4; ++i) {
    stats.p[i] = stats.counts[i] / 85.0;
    stats.logp[i] = std::log(stats.p[i]);
  }
  const auto plan = strategy_weights(Strategy::qmargin, stats, 2.0, 0.5);
  for (int i = 1; i < 4; ++i) CHECK(plan.margins[i] <= plan.margins[i - 1] + 1e-15);
  CHECK(plan.margins[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("strategy_weights: strategy routing flags") {
  data::ItemStats stats;
  stats.counts = {1, 1};
  stats.total = 2;
  stats.p = {0.5, 0.5};
  stats.logp = {std::log(0.5), std::log(0.5)};

  CHECK(strategy_weights(Strategy::focal, stats).focal);
  CHECK(strategy_weights(Strategy::item_norm, stats).normalize_train);
  CHECK(strategy_weights(Strategy::item_norm, stats).normalize_eval);
  CHECK(!strategy_weights(Strategy::item_norm_posthoc, stats).normalize_train);
  CHECK(strategy_weights(Strategy::item_norm_posthoc, stats).normalize_eval);
  CHECK_THROWS_AS(strategy_weights(Strategy::external, stats), ConfigError);
  const std::vector<double> bad{0.5, -0.1};
  CHECK_THROWS_AS(strategy_weights(Strategy::external, stats, 2.0, 0.5, &bad), ConfigError);
}

TEST_CASE("focal loss: gamma 0 recovers the plain loss, gamma 2 never exceeds it") {
  Task task = tiny_task(3);
  towers::TowerParams params = towers::TowerParams::init(task.tower, 3);
  std::vector<towers::BatchItem> batch;
  for (int i = 0; i < 8; ++i) {
    const auto& ref = task.splits.train[i];
    batch.push_back({task.splits.context_of(ref), task.splits.context_len(ref),
                     task.splits.label_of(ref)});
  }
  towers::LossOpts plain, focal0, focal2;
  focal0.focal = true;
  focal0.focal_gamma = 0.0;
  focal2.focal = true;
  focal2.focal_gamma = 2.0;
  const auto lp = towers::batch_softmax_loss(params, batch, task.stats, plain, nullptr);
  const auto l0 = towers::batch_softmax_loss(params, batch, task.stats, focal0, nullptr);
  const auto l2 = towers::batch_softmax_loss(params, batch, task.stats, focal2, nullptr);
  CHECK(l0.loss == doctest::Approx(lp.loss).epsilon(1e-12));
  for (std::size_t i = 0; i < batch.size(); ++i)
    CHECK(l2.per_example[i] <= lp.per_example[i] + 1e-12);
}

TEST_CASE("uniform weight scaling multiplies loss and gradients by c") {
  Task task = tiny_task(5);
  towers::TowerParams params = towers::TowerParams::init(task.tower, 5);
  std::vector<towers::BatchItem> batch;
  for (int i = 0; i < 6; ++i) {
    const auto& ref = task.splits.train[i];
    batch.push_back({task.splits.context_of(ref), task.splits.context_len(ref),
                     task.splits.label_of(ref)});
  }
  const double c = 2.7;
  towers::LossOpts base, scaled;
  scaled.example_weights.assign(batch.size(), c);

  towers::TowerParams g1 = towers::TowerParams::zeros_like(params);
  towers::TowerParams g2 = towers::TowerParams::zeros_like(params);
  const auto r1 = towers::batch_softmax_loss(params, batch, task.stats, base, &g1);
  const auto r2 = towers::batch_softmax_loss(params, batch, task.stats, scaled, &g2);
  CHECK(r2.loss == doctest::Approx(c * r1.loss).epsilon(1e-12));
  const auto t1 = g1.tensors();
  const auto t2 = g2.tensors();
  for (std::size_t k = 0; k < t1.size(); ++k)
    for (Eigen::Index i = 0; i < t1[k].size; ++i)
      CHECK(t2[k].data[i] == doctest::Approx(c * t1[k].data[i]).epsilon(1e-9));
}

TEST_CASE("train: zero learning rate leaves parameters unchanged") {
  Task task = tiny_task(7);
  task.cfg.learning_rate = 0.0;
  task.cfg.max_epochs = 2;
  const towers::TowerParams init = towers::TowerParams::init(task.tower, 7);
  const TrainResult result = train(init, task.splits, task.stats, task.cfg);
  CHECK(params_equal(result.params, init));
}

TEST_CASE("train: deterministic given the seed") {
  Task task = tiny_task(11);
  task.cfg.max_epochs = 2;
  const towers::TowerParams init = towers::TowerParams::init(task.tower, 11);
  const TrainResult a = train(init, task.splits, task.stats, task.cfg);
  const TrainResult b = train(init, task.splits, task.stats, task.cfg);
  CHECK(params_equal(a.params, b.params));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_hr == b.history[i].val_hr);
  }
}

TEST_CASE("train: separable synthetic task is learnable") {
  Task task = tiny_task(13, 400);
  task.cfg.max_epochs = 8;
  task.cfg.patience = 8;  // no early stop inside the window under test
  task.cfg.batch_size = 64;
  const towers::TowerParams init = towers::TowerParams::init(task.tower, 13);
  const TrainResult result = train(init, task.splits, task.stats, task.cfg);

  REQUIRE(result.history.size() >= 5);
  for (int e = 1; e < 5; ++e)
    CHECK(result.history[e].train_loss < result.history[e - 1].train_loss);

  const auto [train_hr5, train_ndcg5] =
      eval::quick_metrics(result.params, task.splits, task.splits.train, 5, 9, 77);
  CHECK(train_hr5 > 0.9);
}

TEST_CASE("train: early stopping returns the best validation checkpoint") {
  Task task = tiny_task(17, 200);
  task.cfg.max_epochs = 10;
  task.cfg.patience = 2;
  const towers::TowerParams init = towers::TowerParams::init(task.tower, 17);
  const TrainResult result = train(init, task.splits, task.stats, task.cfg);

  double best = -1.0;
  for (const auto& row : result.history) best = std::max(best, row.val_hr);
  CHECK(result.best_val_hr == best);

  // the returned checkpoint re-evaluates to exactly the best row's metric
  const auto [hr, ndcg] = eval::quick_metrics(result.params, task.splits, task.splits.val,
                                              task.cfg.eval_k, task.cfg.eval_negatives,
                                              task.cfg.eval_seed);
  CHECK(hr == result.best_val_hr);
}

TEST_CASE("freeze_item_tower_train: item tower is bitwise frozen") {
  Task task = tiny_task(19, 150);
  task.cfg.max_epochs = 2;
  const towers::TowerParams init = towers::TowerParams::init(task.tower, 19);
  const TrainResult base = train(init, task.splits, task.stats, task.cfg);

  TrainConfig calib = task.cfg;
  calib.max_epochs = 2;
  const TrainResult calibrated =
      freeze_item_tower_train(base.params, task.splits, task.stats, calib);

  const auto before = base.params.tensors();
  const auto after = calibrated.params.tensors();
  bool user_side_changed = false;
  for (std::size_t k = 0; k < before.size(); ++k) {
    if (before[k].item_tower) {
      for (Eigen::Index i = 0; i < before[k].size; ++i)
        CHECK(before[k].data[i] == after[k].data[i]);
    } else {
      for (Eigen::Index i = 0; i < before[k].size; ++i)
        if (before[k].data[i] != after[k].data[i]) user_side_changed = true;
    }
  }
  CHECK(user_side_changed);

  // zero-epoch calibration changes nothing at all
  calib.max_epochs = 0;
  const TrainResult frozen = freeze_item_tower_train(base.params, task.splits, task.stats, calib);
  CHECK(params_equal(frozen.params, base.params));
}

TEST_CASE("train: item_norm_posthoc normalizes only the returned checkpoint") {
  Task task = tiny_task(23, 100);
  task.cfg.max_epochs = 1;
  task.cfg.strategy = Strategy::item_norm_posthoc;
  const towers::TowerParams init = towers::TowerParams::init(task.tower, 23);
  CHECK(!init.cfg.normalize_items);
  const TrainResult result = train(init, task.splits, task.stats, task.cfg);
  CHECK(result.params.cfg.normalize_items);
}

TEST_CASE("train: divergence aborts with a diagnostic") {
  Task task = tiny_task(29, 100);
  task.cfg.learning_rate = 1e6;  // drives the loss to overflow
  task.cfg.max_epochs = 5;
  const towers::TowerParams init = towers::TowerParams::init(task.tower, 29);
  try {
    train(init, task.splits, task.stats, task.cfg);
    // extreme rates may still survive on a tiny task; accept either outcome
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}
