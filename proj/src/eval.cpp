#include "murec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace murec::eval {

void EvalProtocol::validate() const {
  if (num_negatives < 1) throw ConfigError("num_negatives must be at least 1");
  if (seeds.empty()) throw ConfigError("protocol needs at least one seed");
  if (k_values.empty()) throw ConfigError("protocol needs at least one k");
  for (int k : k_values)
    if (k < 1 || k > num_negatives + 1)
      throw ConfigError("k must lie in [1, num_negatives + 1]");
}

std::vector<int> sample_negatives(const std::vector<char>& history, int num_items, int n,
                                  Rng& rng) {
  long pool = 0;
  for (int i = 0; i < num_items; ++i)
    if (!history[i]) ++pool;
  if (pool < n)
    throw ProtocolError("negative pool too small: " + std::to_string(pool) + " candidates for " +
                        std::to_string(n) + " negatives");

  std::vector<int> out;
  out.reserve(n);
  if (pool <= 2L * n) {
    // Dense history: enumerate the pool and take a partial shuffle.
    std::vector<int> allowed;
    allowed.reserve(pool);
    for (int i = 0; i < num_items; ++i)
      if (!history[i]) allowed.push_back(i);
    for (int k = 0; k < n; ++k) {
      const int j = k + rng.uniform_int(static_cast<int>(allowed.size()) - k);
      std::swap(allowed[k], allowed[j]);
      out.push_back(allowed[k]);
    }
  } else {
    std::set<int> chosen;
    while (static_cast<int>(out.size()) < n) {
      const int cand = rng.uniform_int(num_items);
      if (history[cand] || chosen.count(cand)) continue;
      chosen.insert(cand);
      out.push_back(cand);
    }
  }
  return out;
}

int rank_from_scores(double label_score, const std::vector<double>& negative_scores) {
  int rank = 1;
  for (double s : negative_scores)
    if (s >= label_score) ++rank;
  return rank;
}

namespace {

towers::Vec scoring_rep(const towers::TowerParams& params, int item) {
  towers::Vec v = towers::item_forward(params, item);
  if (params.cfg.normalize_items) {
    const double r = v.norm();
    if (r > 1e-12) v /= r;
  }
  return v;
}

}  // namespace

int rank_of_label(const towers::TowerParams& params, const towers::Mat& user_reps, int label,
                  const std::vector<int>& negatives) {
  const double label_score = towers::score(user_reps, scoring_rep(params, label));
  std::vector<double> neg_scores(negatives.size());
  for (std::size_t i = 0; i < negatives.size(); ++i)
    neg_scores[i] = towers::score(user_reps, scoring_rep(params, negatives[i]));
  return rank_from_scores(label_score, neg_scores);
}

double hr_at_k(int rank, int k) { return rank <= k ? 1.0 : 0.0; }

double ndcg_at_k(int rank, int k) {
  if (rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

namespace {

struct Accumulator {
  long count = 0;
  // per seed, per k: sums of hr and ndcg
  std::vector<std::vector<double>> hr, ndcg;

  Accumulator(std::size_t seeds, std::size_t ks)
      : hr(seeds, std::vector<double>(ks, 0.0)), ndcg(seeds, std::vector<double>(ks, 0.0)) {}

  void add(std::size_t seed, const std::vector<int>& ks, int rank) {
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      hr[seed][ki] += hr_at_k(rank, ks[ki]);
      ndcg[seed][ki] += ndcg_at_k(rank, ks[ki]);
    }
  }
};

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  const double n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

void finalize_split(MetricsReport& report, const std::string& name, const Accumulator& acc,
                    const std::vector<int>& ks) {
  if (acc.count == 0) return;  // empty split is absent, not zero
  SplitMetrics sm;
  sm.count = acc.count;
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    std::vector<double> hr_by_seed, ndcg_by_seed;
    for (std::size_t s = 0; s < acc.hr.size(); ++s) {
      hr_by_seed.push_back(acc.hr[s][ki] / static_cast<double>(acc.count));
      ndcg_by_seed.push_back(acc.ndcg[s][ki] / static_cast<double>(acc.count));
    }
    sm.values["hr@" + std::to_string(ks[ki])] = mean_std(hr_by_seed);
    sm.values["ndcg@" + std::to_string(ks[ki])] = mean_std(ndcg_by_seed);
  }
  report.splits[name] = std::move(sm);
}

}  // namespace

MetricsReport evaluate(const towers::TowerParams& params, const data::DatasetSplits& splits,
                       const std::vector<data::ExampleRef>& refs, const data::ItemStats& stats,
                       const EvalProtocol& protocol, const ClusterInfo* clusters,
                       std::vector<std::pair<int, int>>* example_ranks) {
  protocol.validate();
  const int num_items = splits.num_items;
  const std::size_t num_seeds = protocol.seeds.size();
  const int E = static_cast<int>(refs.size());

  // Full per-user history: every item in every chunk of the user.
  std::vector<std::vector<int>> user_items(splits.num_users);
  for (const data::Chunk& chunk : splits.chunks)
    user_items[chunk.user].insert(user_items[chunk.user].end(), chunk.items.begin(),
                                  chunk.items.end());

  // Negatives are fixed per (user, protocol seed).
  std::vector<char> seen_user(splits.num_users, 0);
  std::vector<int> users;
  for (const data::ExampleRef& ref : refs) {
    const int u = splits.owner_of(ref);
    if (!seen_user[u]) {
      seen_user[u] = 1;
      users.push_back(u);
    }
  }
  std::vector<std::vector<std::vector<int>>> negatives(splits.num_users);
  {
    std::vector<char> history(num_items, 0);
    for (int u : users) {
      for (int item : user_items[u]) history[item] = 1;
      negatives[u].resize(num_seeds);
      for (std::size_t s = 0; s < num_seeds; ++s) {
        Rng rng = Rng::derive(protocol.seeds[s], static_cast<std::uint64_t>(u));
        negatives[u][s] = sample_negatives(history, num_items, protocol.num_negatives, rng);
      }
      for (int item : user_items[u]) history[item] = 0;
    }
  }

  // Ranks per (example, seed); the example loop is read-only on params.
  std::vector<int> ranks(static_cast<std::size_t>(E) * num_seeds);
#pragma omp parallel for schedule(static)
  for (int e = 0; e < E; ++e) {
    towers::UserCache cache;
    const data::ExampleRef& ref = refs[e];
    towers::user_forward(params, splits.context_of(ref), splits.context_len(ref), cache);
    const int label = splits.label_of(ref);
    const int user = splits.owner_of(ref);
    for (std::size_t s = 0; s < num_seeds; ++s)
      ranks[static_cast<std::size_t>(e) * num_seeds + s] =
          rank_of_label(params, cache.zs, label, negatives[user][s]);
  }

  MetricsReport report;
  report.seeds = protocol.seeds;
  report.num_negatives = protocol.num_negatives;

  const std::vector<int>& ks = protocol.k_values;
  Accumulator overall(num_seeds, ks.size()), head(num_seeds, ks.size()),
      tail(num_seeds, ks.size()), head_cl(num_seeds, ks.size()), tail_cl(num_seeds, ks.size());

  for (int e = 0; e < E; ++e) {
    const int label = splits.label_of(refs[e]);
    const bool in_head = label < static_cast<int>(stats.in_head.size()) && stats.in_head[label];
    bool in_head_cluster = false;
    if (clusters) in_head_cluster = clusters->item_cluster[label] < clusters->head_clusters;
    ++overall.count;
    if (in_head)
      ++head.count;
    else
      ++tail.count;
    if (clusters) {
      if (in_head_cluster)
        ++head_cl.count;
      else
        ++tail_cl.count;
    }
    for (std::size_t s = 0; s < num_seeds; ++s) {
      const int rank = ranks[static_cast<std::size_t>(e) * num_seeds + s];
      overall.add(s, ks, rank);
      (in_head ? head : tail).add(s, ks, rank);
      if (clusters) (in_head_cluster ? head_cl : tail_cl).add(s, ks, rank);
      if (example_ranks && s == 0)
        example_ranks->emplace_back(splits.owner_of(refs[e]), rank);
    }
  }

  finalize_split(report, "overall", overall, ks);
  finalize_split(report, "head", head, ks);
  finalize_split(report, "tail", tail, ks);
  if (clusters) {
    finalize_split(report, "head_clusters", head_cl, ks);
    finalize_split(report, "tail_clusters", tail_cl, ks);
    report.ms = mean_silhouette(towers::item_representations(params), clusters->item_cluster);
  }
  return report;
}

std::pair<double, double> quick_metrics(const towers::TowerParams& params,
                                        const data::DatasetSplits& splits,
                                        const std::vector<data::ExampleRef>& refs, int k,
                                        int num_negatives, std::uint64_t seed) {
  EvalProtocol protocol;
  protocol.k_values = {k};
  protocol.num_negatives = num_negatives;
  protocol.seeds = {seed};
  data::ItemStats empty_stats;
  empty_stats.counts.assign(splits.num_items, 0);
  empty_stats.in_head.assign(splits.num_items, 0);
  const MetricsReport report = evaluate(params, splits, refs, empty_stats, protocol);
  const auto& overall = report.splits.at("overall");
  return {overall.values.at("hr@" + std::to_string(k)).mean,
          overall.values.at("ndcg@" + std::to_string(k)).mean};
}

double mean_silhouette(const towers::Mat& reps, const std::vector<int>& clusters) {
  const int n = static_cast<int>(reps.rows());
  if (static_cast<int>(clusters.size()) != n)
    throw ConfigError("mean_silhouette: cluster labels must match representation count");
  int num_clusters = 0;
  for (int c : clusters) num_clusters = std::max(num_clusters, c + 1);
  std::vector<long> cluster_size(num_clusters, 0);
  for (int c : clusters) {
    if (c < 0) throw ConfigError("mean_silhouette: negative cluster id");
    ++cluster_size[c];
  }
  int populated = 0;
  for (long s : cluster_size)
    if (s > 0) ++populated;
  if (populated < 2) throw ConfigError("undefined-metric: mean silhouette needs >= 2 clusters");

  towers::Mat dist(n, n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (int j = 0; j < i; ++j) {
      const double d = (reps.row(i) - reps.row(j)).norm();
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }

  double total = 0.0;
  for (int p = 0; p < n; ++p) {
    const int own = clusters[p];
    if (cluster_size[own] <= 1) continue;  // singleton: s_p = 0
    std::vector<double> sum(num_clusters, 0.0);
    for (int q = 0; q < n; ++q) sum[clusters[q]] += dist(p, q);
    const double a = sum[own] / static_cast<double>(cluster_size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < num_clusters; ++c) {
      if (c == own || cluster_size[c] == 0) continue;
      b = std::min(b, sum[c] / static_cast<double>(cluster_size[c]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

}  // namespace murec::eval
