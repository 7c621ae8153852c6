#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "murec/common.hpp"
#include "murec/dataset.hpp"

namespace murec::towers {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct TowerConfig {
  int embed_dim = 16;        // d
  int num_reps = 5;          // M; 1 recovers the single-representation model
  int encoder_layers = 2;
  int attention_heads = 4;
  int mlp_layers = 2;        // item tower depth, width d
  int max_len = data::kMaxSeqLen;
  bool share_embeddings = false;  // one table for both towers
  bool normalize_items = false;   // L2-normalize item representations in score
  int num_items = 0;

  void validate() const;
};

struct EncoderLayer {
  Vec ln1_g, ln1_b, ln2_g, ln2_b;
  Mat wq, wk, wv, wo;  // d x d
  Vec bq, bk, bv, bo;
  Mat ff1, ff2;        // d x d
  Vec fb1, fb2;
};

struct TensorRef {
  std::string name;
  double* data;
  Eigen::Index size;
  bool item_tower;  // phi: frozen during user-tower calibration
};

struct TowerParams {
  TowerConfig cfg;
  Mat item_emb;   // |I| x d, item tower input
  Mat user_emb;   // |I| x d, user tower input (empty when shared)
  Mat pos_emb;    // max_len x d, learned position encodings
  std::vector<EncoderLayer> enc;
  Vec lnf_g, lnf_b;  // final pre-output normalization
  Mat queries;       // M x d global query vectors
  std::vector<Mat> mlp_w;  // item tower, d x d each
  std::vector<Vec> mlp_b;

  static TowerParams init(const TowerConfig& cfg, std::uint64_t seed);
  static TowerParams zeros_like(const TowerParams& other);
  void set_zero();

  // Stable-ordered view over every parameter tensor.
  std::vector<TensorRef> tensors() const;
  Eigen::Index num_params() const;

  const Mat& user_table() const { return cfg.share_embeddings ? item_emb : user_emb; }
  Mat& user_table() { return cfg.share_embeddings ? item_emb : user_emb; }
};

// ---- forward caches -------------------------------------------------------

struct ItemCache {
  int id = -1;
  Vec emb;
  std::vector<Vec> pre;   // per MLP layer, pre-activation
  Vec out;                // representation v
  double norm = 0.0;      // ||v|| when normalization is active
  Vec normalized;
};

struct EncLayerCache {
  Mat x_in, a, q, k, v, c, x_mid, bhat, f_pre;
  Mat ln1_xhat, ln2_xhat;
  Vec ln1_inv, ln2_inv;
  std::vector<Mat> attn;  // per head, row-softmax probabilities
};

struct UserCache {
  int n = 0;
  std::vector<int> ctx;
  Mat e;        // embedded input, n x d
  std::vector<EncLayerCache> layers;
  Mat x_final;  // encoder output before the final normalization
  Mat lnf_xhat;
  Vec lnf_inv;
  Mat h;        // hidden states, n x d
  Mat alphas;   // M x n attention over positions
  Mat zs;       // M x d user representations
};

// ---- operations -----------------------------------------------------------

Vec item_forward(const TowerParams& params, int item_id, ItemCache* cache = nullptr);
Mat item_representations(const TowerParams& params);

// Accumulates d(loss)/d(item tower params) for d(loss)/d(v) = dout.
void item_backward(const TowerParams& params, const ItemCache& cache, const Vec& dout,
                   TowerParams& grads);

// Self-attention encoder over the first `len` context entries; fills cache.h.
void user_encode(const TowerParams& params, const int* ctx, int len, UserCache& cache);

// Parametric attention pooling; fills cache.alphas and cache.zs.
void extract_interests(const TowerParams& params, UserCache& cache);

void user_forward(const TowerParams& params, const int* ctx, int len, UserCache& cache);

// Accumulates gradients through the encoder (and input embeddings) for
// d(loss)/d(h) = dh.
void encoder_backward(const TowerParams& params, const UserCache& cache, const Mat& dh,
                      TowerParams& grads);

// Accumulates gradients through pooling and the encoder for
// d(loss)/d(zs) = dzs.
void user_backward(const TowerParams& params, const UserCache& cache, const Mat& dzs,
                   TowerParams& grads);

// Affinity of a user representation set against one candidate:
// w = softmax_m(z_m . v), score = sum_m w_m (z_m . v).
double score(const Mat& zs, const Vec& v);
double score_with_dots(const Mat& zs, const Vec& v, Vec& dots_out);

// s^c = s - log p(y), applied per candidate column.
Mat logq_correct(const Mat& logits, const std::vector<double>& p_cols);

// ---- batch loss -----------------------------------------------------------

struct BatchItem {
  const int* ctx = nullptr;
  int len = 0;
  int label = 0;
};

struct LossOpts {
  std::vector<double> example_weights;    // empty = all ones
  bool focal = false;
  double focal_gamma = 2.0;
  const std::vector<double>* margins = nullptr;  // per item, subtracted at the true column
  bool normalize_items = false;
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> per_example;
};

// In-batch sampled softmax with LogQ correction. Candidates are the batch's
// labels; duplicate labels are masked as negatives for foreign examples.
// When `grads` is non-null it accumulates exact gradients for every tensor.
LossResult batch_softmax_loss(const TowerParams& params, const std::vector<BatchItem>& batch,
                              const data::ItemStats& stats, const LossOpts& opts,
                              TowerParams* grads);

}  // namespace murec::towers
