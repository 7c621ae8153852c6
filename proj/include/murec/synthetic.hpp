#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "murec/dataset.hpp"
#include "murec/rng.hpp"

namespace murec::synth {

// Finite-state HMM generator over C interest clusters with K items each.
struct SynthConfig {
  int num_clusters = 5;       // C
  int items_per_cluster = 10; // K
  int num_users = 2000;
  int seq_len = 20;           // T
  double alpha = 0.6;         // stay in current interest cluster
  double gamma = 0.3;         // switch within the user's interests
  double epsilon = 0.1;       // stay in a non-interest cluster
  double interest_exponent = 0.0;
  double item_exponent = 0.5;
  int interests_per_user = 2;
  std::uint64_t rng_seed = 1;

  int num_items() const { return num_clusters * items_per_cluster; }
  void validate() const;  // throws ConfigError
};

struct UserProfile {
  int user_id = 0;
  std::vector<int> interests;      // Y_u, sorted
  std::vector<double> transition;  // row-major C x C
};

struct GeneratedDataset {
  SynthConfig config;
  data::InteractionLog log;
  std::vector<int> item_cluster;                          // item id -> cluster id
  std::vector<double> interest_weights;                   // pi, length C
  std::vector<std::vector<double>> per_cluster_item_weights;
};

// pi_c proportional to rank^(-exponent) over ranks 1..C, normalized.
std::vector<double> sample_interest_weights(double exponent, int num_clusters);

// n distinct cluster ids drawn without replacement proportionally to pi.
std::vector<int> assign_user_interests(const std::vector<double>& pi, int n, Rng& rng);

// Row-major C x C row-stochastic matrix following the six-case transition
// rule. With a single interest the within-interest mass gamma folds into the
// self-transition.
std::vector<double> build_transition_matrix(const std::vector<int>& interests, double alpha,
                                            double gamma, double epsilon, int num_clusters);

// First state uniform over the user's interests, then Markov steps.
std::vector<int> sample_cluster_sequence(const std::vector<double>& transition, int num_clusters,
                                         const std::vector<int>& interests, int seq_len, Rng& rng);

// Item at step t drawn from the weight vector of clusters[t];
// item id = cluster * K + within-cluster index.
std::vector<int> sample_item_sequence(const std::vector<int>& clusters,
                                      const std::vector<std::vector<double>>& item_weights,
                                      Rng& rng);

GeneratedDataset generate_dataset(const SynthConfig& config);

void write_ground_truth_tsv(const std::vector<int>& item_cluster, const std::string& path);
std::vector<int> read_ground_truth_tsv(const std::string& path);

}  // namespace murec::synth
