#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "murec/dataset.hpp"
#include "murec/rng.hpp"
#include "murec/towers.hpp"

namespace murec::eval {

struct EvalProtocol {
  std::vector<int> k_values{5, 20};
  int num_negatives = 99;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  void validate() const;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct SplitMetrics {
  long count = 0;                          // test examples in the split
  std::map<std::string, MeanStd> values;   // "hr@5", "ndcg@20", ...
};

// Ground-truth interest clusters for synthetic data. Cluster ids are ranked
// by construction (cluster 0 is the most likely interest), so the first
// `head_clusters` ids form the head group.
struct ClusterInfo {
  std::vector<int> item_cluster;
  int num_clusters = 0;
  int head_clusters = 2;
};

struct MetricsReport {
  std::map<std::string, SplitMetrics> splits;  // absent key = empty split
  std::optional<double> ms;
  std::vector<std::uint64_t> seeds;
  int num_negatives = 0;
};

// n distinct items outside the user's full interaction history.
// `history` marks every item the user has interacted with (including all
// leave-one-out labels).
std::vector<int> sample_negatives(const std::vector<char>& history, int num_items, int n,
                                  Rng& rng);

// 1-based rank of the label among label + negatives; ties count against the
// label.
int rank_from_scores(double label_score, const std::vector<double>& negative_scores);

int rank_of_label(const towers::TowerParams& params, const towers::Mat& user_reps, int label,
                  const std::vector<int>& negatives);

double hr_at_k(int rank, int k);
double ndcg_at_k(int rank, int k);

MetricsReport evaluate(const towers::TowerParams& params, const data::DatasetSplits& splits,
                       const std::vector<data::ExampleRef>& refs, const data::ItemStats& stats,
                       const EvalProtocol& protocol, const ClusterInfo* clusters = nullptr,
                       std::vector<std::pair<int, int>>* example_ranks = nullptr);

// Overall HR@k and NDCG@k with a single protocol seed; used for validation
// during training.
std::pair<double, double> quick_metrics(const towers::TowerParams& params,
                                        const data::DatasetSplits& splits,
                                        const std::vector<data::ExampleRef>& refs, int k,
                                        int num_negatives, std::uint64_t seed);

// Mean silhouette of the representations against ground-truth clusters,
// Euclidean distances. Singleton clusters score 0, as does the 0/0 case.
double mean_silhouette(const towers::Mat& reps, const std::vector<int>& clusters);

}  // namespace murec::eval
