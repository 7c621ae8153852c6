#include "murec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace murec::synth {

void SynthConfig::validate() const {
  if (num_clusters < 1) throw ConfigError("num_clusters must be positive");
  if (items_per_cluster < 1) throw ConfigError("items_per_cluster must be positive");
  if (num_users < 1) throw ConfigError("num_users must be positive");
  if (seq_len < 1) throw ConfigError("seq_len must be positive");
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must be in [0,1]");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0,1]");
  if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("epsilon must be in [0,1]");
  if (alpha + gamma > 1.0 + 1e-12) throw ConfigError("alpha + gamma must not exceed 1");
  if (interest_exponent < 0.0) throw ConfigError("interest_exponent must be nonnegative");
  if (item_exponent < 0.0) throw ConfigError("item_exponent must be nonnegative");
  if (interests_per_user < 1 || interests_per_user > num_clusters)
    throw ConfigError("interests_per_user must be in [1, num_clusters]");
  if (interests_per_user == num_clusters && alpha + gamma < 1.0 - 1e-12)
    throw ConfigError("alpha + gamma must equal 1 when every cluster is an interest");
}

std::vector<double> sample_interest_weights(double exponent, int num_clusters) {
  if (num_clusters < 1) throw ConfigError("sample_interest_weights: C must be positive");
  std::vector<double> pi(num_clusters);
  double total = 0.0;
  for (int c = 0; c < num_clusters; ++c) {
    pi[c] = std::pow(static_cast<double>(c + 1), -exponent);
    total += pi[c];
  }
  for (double& w : pi) w /= total;
  return pi;
}

std::vector<int> assign_user_interests(const std::vector<double>& pi, int n, Rng& rng) {
  if (n > static_cast<int>(pi.size()))
    throw ConfigError("assign_user_interests: n exceeds number of clusters");
  std::vector<int> interests = rng.sample_without_replacement(pi, n);
  std::sort(interests.begin(), interests.end());
  return interests;
}

std::vector<double> build_transition_matrix(const std::vector<int>& interests, double alpha,
                                            double gamma, double epsilon, int num_clusters) {
  const int C = num_clusters;
  const int Y = static_cast<int>(interests.size());
  if (Y < 1) throw ConfigError("build_transition_matrix: empty interest set");
  if (Y == C && alpha + gamma < 1.0 - 1e-12)
    throw ConfigError("build_transition_matrix: no non-interest clusters to absorb mass");

  std::vector<char> is_interest(C, 0);
  for (int c : interests) {
    if (c < 0 || c >= C) throw ConfigError("build_transition_matrix: interest out of range");
    is_interest[c] = 1;
  }

  std::vector<double> P(static_cast<std::size_t>(C) * C, 0.0);
  const double leave = (C > Y) ? (1.0 - alpha - gamma) / static_cast<double>(C - Y) : 0.0;
  const double enter = (1.0 - epsilon) / static_cast<double>(Y);
  const double within = (Y > 1) ? gamma / static_cast<double>(Y - 1) : 0.0;

  for (int i = 0; i < C; ++i) {
    double* row = &P[static_cast<std::size_t>(i) * C];
    if (is_interest[i]) {
      for (int j = 0; j < C; ++j) {
        if (j == i) {
          // |Y_u| = 1: the within-interest mass has nowhere to go but back.
          row[j] = (Y > 1) ? alpha : alpha + gamma;
        } else if (is_interest[j]) {
          row[j] = within;
        } else {
          row[j] = leave;
        }
      }
    } else {
      for (int j = 0; j < C; ++j) {
        if (j == i) {
          row[j] = epsilon;
        } else if (is_interest[j]) {
          row[j] = enter;
        }
      }
      // i != j with neither in Y_u stays 0.
    }
  }
  return P;
}

std::vector<int> sample_cluster_sequence(const std::vector<double>& transition, int num_clusters,
                                         const std::vector<int>& interests, int seq_len,
                                         Rng& rng) {
  const int C = num_clusters;
  std::vector<int> seq(seq_len);
  int state = interests[rng.uniform_int(static_cast<int>(interests.size()))];
  seq[0] = state;
  std::vector<double> row(C);
  for (int t = 1; t < seq_len; ++t) {
    const double* src = &transition[static_cast<std::size_t>(state) * C];
    row.assign(src, src + C);
    state = rng.categorical(row);
    seq[t] = state;
  }
  return seq;
}

std::vector<int> sample_item_sequence(const std::vector<int>& clusters,
                                      const std::vector<std::vector<double>>& item_weights,
                                      Rng& rng) {
  std::vector<int> items(clusters.size());
  for (std::size_t t = 0; t < clusters.size(); ++t) {
    const int c = clusters[t];
    const auto& weights = item_weights[c];
    const int k = rng.categorical(weights);
    items[t] = c * static_cast<int>(weights.size()) + k;
  }
  return items;
}

GeneratedDataset generate_dataset(const SynthConfig& config) {
  config.validate();
  GeneratedDataset out;
  out.config = config;
  out.interest_weights = sample_interest_weights(config.interest_exponent, config.num_clusters);
  const std::vector<double> item_w =
      sample_interest_weights(config.item_exponent, config.items_per_cluster);
  out.per_cluster_item_weights.assign(config.num_clusters, item_w);

  out.item_cluster.resize(config.num_items());
  for (int i = 0; i < config.num_items(); ++i)
    out.item_cluster[i] = i / config.items_per_cluster;

  out.log.num_items = config.num_items();
  out.log.sequences.resize(config.num_users);
  out.log.user_raw.resize(config.num_users);
  out.log.item_raw.resize(config.num_items());
  for (int i = 0; i < config.num_items(); ++i) out.log.item_raw[i] = std::to_string(i);

  // Each user draws from an independent stream; generation order is
  // irrelevant, so the loop can be parallelized over users.
#pragma omp parallel for schedule(static)
  for (int u = 0; u < config.num_users; ++u) {
    Rng rng = Rng::derive(config.rng_seed, static_cast<std::uint64_t>(u));
    const std::vector<int> interests =
        assign_user_interests(out.interest_weights, config.interests_per_user, rng);
    const std::vector<double> transition = build_transition_matrix(
        interests, config.alpha, config.gamma, config.epsilon, config.num_clusters);
    const std::vector<int> clusters = sample_cluster_sequence(
        transition, config.num_clusters, interests, config.seq_len, rng);
    out.log.sequences[u] = sample_item_sequence(clusters, out.per_cluster_item_weights, rng);
    out.log.user_raw[u] = std::to_string(u);
  }
  return out;
}

void write_ground_truth_tsv(const std::vector<int>& item_cluster, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < item_cluster.size(); ++i)
    out << i << '\t' << item_cluster[i] << '\n';
}

std::vector<int> read_ground_truth_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path);
  std::vector<int> clusters;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    long item = 0, cluster = 0;
    char tab = 0;
    if (!(row >> item) || !(row >> cluster) || item < 0)
      throw ParseError("ground truth parse error at line " + std::to_string(line_no));
    (void)tab;
    if (item >= static_cast<long>(clusters.size())) clusters.resize(item + 1, -1);
    clusters[item] = static_cast<int>(cluster);
  }
  if (clusters.empty()) throw ParseError("ground truth file is empty: " + path);
  return clusters;
}

}  // namespace murec::synth
