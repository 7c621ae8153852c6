#include "murec/towers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "murec/rng.hpp"

namespace murec::towers {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kNormFloor = 1e-12;

void ln_forward(const Mat& x, const Vec& g, const Vec& b, Mat& y, Mat& xhat, Vec& inv) {
  const Eigen::Index n = x.rows(), d = x.cols();
  y.resize(n, d);
  xhat.resize(n, d);
  inv.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    Eigen::RowVectorXd c = x.row(i).array() - mu;
    const double var = c.squaredNorm() / static_cast<double>(d);
    const double iv = 1.0 / std::sqrt(var + kLnEps);
    inv(i) = iv;
    xhat.row(i) = c * iv;
    y.row(i) = xhat.row(i).cwiseProduct(g.transpose()) + b.transpose();
  }
}

Mat ln_backward(const Mat& dy, const Mat& xhat, const Vec& inv, const Vec& g, Vec& dg, Vec& db) {
  const Eigen::Index n = dy.rows(), d = dy.cols();
  Mat dx(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    dg += dy.row(i).cwiseProduct(xhat.row(i)).transpose();
    db += dy.row(i).transpose();
    const Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(g.transpose());
    const double s1 = dxhat.sum();
    const double s2 = dxhat.cwiseProduct(xhat.row(i)).sum();
    dx.row(i) =
        inv(i) * (dxhat.array() - (s1 + xhat.row(i).array() * s2) / static_cast<double>(d));
  }
  return dx;
}

void softmax_rows_inplace(Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

// dS_i = P_i (x) (dP_i - <dP_i, P_i>)
Mat softmax_rows_backward(const Mat& p, const Mat& dp) {
  Mat ds(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double rd = dp.row(i).dot(p.row(i));
    ds.row(i) = p.row(i).cwiseProduct(dp.row(i).array() - rd);
  }
  return ds;
}

}  // namespace

void TowerConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("embed_dim must be positive");
  if (num_reps < 1) throw ConfigError("num_reps must be at least 1");
  if (encoder_layers < 0) throw ConfigError("encoder_layers must be nonnegative");
  if (attention_heads < 1) throw ConfigError("attention_heads must be positive");
  if (embed_dim % attention_heads != 0)
    throw ConfigError("embed_dim must be divisible by attention_heads");
  if (mlp_layers < 1) throw ConfigError("mlp_layers must be positive");
  if (max_len < 1) throw ConfigError("max_len must be positive");
  if (num_items < 1) throw ConfigError("num_items must be positive");
}

TowerParams TowerParams::init(const TowerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TowerParams p;
  p.cfg = cfg;
  const int d = cfg.embed_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng = Rng::derive(seed, 0x70773355ull);
  auto fill_mat = [&](Mat& m, Eigen::Index rows, Eigen::Index cols) {
    m.resize(rows, cols);
    double* data = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) data[i] = rng.uniform(-bound, bound);
  };
  auto zero_vec = [&](Vec& v) {
    v.resize(d);
    v.setZero();
  };
  auto one_vec = [&](Vec& v) {
    v.resize(d);
    v.setOnes();
  };

  fill_mat(p.item_emb, cfg.num_items, d);
  if (cfg.share_embeddings)
    p.user_emb.resize(0, 0);
  else
    fill_mat(p.user_emb, cfg.num_items, d);
  fill_mat(p.pos_emb, cfg.max_len, d);
  p.enc.resize(cfg.encoder_layers);
  for (EncoderLayer& l : p.enc) {
    one_vec(l.ln1_g);
    zero_vec(l.ln1_b);
    fill_mat(l.wq, d, d);
    zero_vec(l.bq);
    fill_mat(l.wk, d, d);
    zero_vec(l.bk);
    fill_mat(l.wv, d, d);
    zero_vec(l.bv);
    fill_mat(l.wo, d, d);
    zero_vec(l.bo);
    one_vec(l.ln2_g);
    zero_vec(l.ln2_b);
    fill_mat(l.ff1, d, d);
    zero_vec(l.fb1);
    fill_mat(l.ff2, d, d);
    zero_vec(l.fb2);
  }
  one_vec(p.lnf_g);
  zero_vec(p.lnf_b);
  fill_mat(p.queries, cfg.num_reps, d);
  p.mlp_w.resize(cfg.mlp_layers);
  p.mlp_b.resize(cfg.mlp_layers);
  for (int l = 0; l < cfg.mlp_layers; ++l) {
    fill_mat(p.mlp_w[l], d, d);
    zero_vec(p.mlp_b[l]);
  }
  return p;
}

TowerParams TowerParams::zeros_like(const TowerParams& other) {
  TowerParams p = other;
  p.set_zero();
  return p;
}

void TowerParams::set_zero() {
  for (const TensorRef& t : tensors()) {
    for (Eigen::Index i = 0; i < t.size; ++i) t.data[i] = 0.0;
  }
}

std::vector<TensorRef> TowerParams::tensors() const {
  auto* self = const_cast<TowerParams*>(this);
  std::vector<TensorRef> out;
  auto add = [&](const std::string& name, double* data, Eigen::Index size, bool item_tower) {
    out.push_back(TensorRef{name, data, size, item_tower});
  };
  add("item_emb", self->item_emb.data(), self->item_emb.size(), true);
  if (!cfg.share_embeddings) add("user_emb", self->user_emb.data(), self->user_emb.size(), false);
  add("pos_emb", self->pos_emb.data(), self->pos_emb.size(), false);
  for (std::size_t l = 0; l < enc.size(); ++l) {
    EncoderLayer& e = self->enc[l];
    const std::string prefix = "enc" + std::to_string(l) + ".";
    add(prefix + "ln1_g", e.ln1_g.data(), e.ln1_g.size(), false);
    add(prefix + "ln1_b", e.ln1_b.data(), e.ln1_b.size(), false);
    add(prefix + "wq", e.wq.data(), e.wq.size(), false);
    add(prefix + "bq", e.bq.data(), e.bq.size(), false);
    add(prefix + "wk", e.wk.data(), e.wk.size(), false);
    add(prefix + "bk", e.bk.data(), e.bk.size(), false);
    add(prefix + "wv", e.wv.data(), e.wv.size(), false);
    add(prefix + "bv", e.bv.data(), e.bv.size(), false);
    add(prefix + "wo", e.wo.data(), e.wo.size(), false);
    add(prefix + "bo", e.bo.data(), e.bo.size(), false);
    add(prefix + "ln2_g", e.ln2_g.data(), e.ln2_g.size(), false);
    add(prefix + "ln2_b", e.ln2_b.data(), e.ln2_b.size(), false);
    add(prefix + "ff1", e.ff1.data(), e.ff1.size(), false);
    add(prefix + "fb1", e.fb1.data(), e.fb1.size(), false);
    add(prefix + "ff2", e.ff2.data(), e.ff2.size(), false);
    add(prefix + "fb2", e.fb2.data(), e.fb2.size(), false);
  }
  add("lnf_g", self->lnf_g.data(), self->lnf_g.size(), false);
  add("lnf_b", self->lnf_b.data(), self->lnf_b.size(), false);
  add("queries", self->queries.data(), self->queries.size(), false);
  for (std::size_t l = 0; l < mlp_w.size(); ++l) {
    const std::string prefix = "item_mlp" + std::to_string(l) + ".";
    add(prefix + "w", self->mlp_w[l].data(), self->mlp_w[l].size(), true);
    add(prefix + "b", self->mlp_b[l].data(), self->mlp_b[l].size(), true);
  }
  return out;
}

Eigen::Index TowerParams::num_params() const {
  Eigen::Index total = 0;
  for (const TensorRef& t : tensors()) total += t.size;
  return total;
}

Vec item_forward(const TowerParams& params, int item_id, ItemCache* cache) {
  if (item_id < 0 || item_id >= params.cfg.num_items)
    throw std::out_of_range("item id out of range: " + std::to_string(item_id));
  Vec x = params.item_emb.row(item_id).transpose();
  if (cache) {
    cache->id = item_id;
    cache->emb = x;
    cache->pre.clear();
  }
  const int L = static_cast<int>(params.mlp_w.size());
  for (int l = 0; l < L; ++l) {
    Vec pre = params.mlp_w[l].transpose() * x + params.mlp_b[l];
    if (cache) cache->pre.push_back(pre);
    x = (l + 1 < L) ? pre.cwiseMax(0.0).eval() : pre;
  }
  if (cache) cache->out = x;
  return x;
}

void item_backward(const TowerParams& params, const ItemCache& cache, const Vec& dout,
                   TowerParams& grads) {
  const int L = static_cast<int>(params.mlp_w.size());
  Vec d = dout;
  for (int l = L - 1; l >= 0; --l) {
    const Vec input = (l == 0) ? cache.emb : cache.pre[l - 1].cwiseMax(0.0).eval();
    grads.mlp_w[l] += input * d.transpose();
    grads.mlp_b[l] += d;
    Vec din = params.mlp_w[l] * d;
    if (l > 0)
      din = din.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
    d = din;
  }
  grads.item_emb.row(cache.id) += d.transpose();
}

Mat item_representations(const TowerParams& params) {
  Mat reps(params.cfg.num_items, params.cfg.embed_dim);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < params.cfg.num_items; ++i)
    reps.row(i) = item_forward(params, i).transpose();
  return reps;
}

void user_encode(const TowerParams& params, const int* ctx, int len, UserCache& cache) {
  if (len <= 0) throw ConfigError("empty context: valid_len must be at least 1");
  if (len > params.cfg.max_len) throw ConfigError("context longer than max_len");
  const int d = params.cfg.embed_dim;
  const int H = params.cfg.attention_heads;
  const int dh = d / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Mat& table = params.user_table();

  cache.n = len;
  cache.ctx.assign(ctx, ctx + len);
  cache.e.resize(len, d);
  for (int i = 0; i < len; ++i) {
    if (ctx[i] < 0 || ctx[i] >= params.cfg.num_items)
      throw std::out_of_range("item id out of range in context");
    cache.e.row(i) = table.row(ctx[i]) + params.pos_emb.row(i);
  }

  cache.layers.resize(params.enc.size());
  Mat x = cache.e;
  for (std::size_t l = 0; l < params.enc.size(); ++l) {
    const EncoderLayer& lp = params.enc[l];
    EncLayerCache& lc = cache.layers[l];
    lc.x_in = x;
    ln_forward(lc.x_in, lp.ln1_g, lp.ln1_b, lc.a, lc.ln1_xhat, lc.ln1_inv);
    lc.q = lc.a * lp.wq;
    lc.q.rowwise() += lp.bq.transpose();
    lc.k = lc.a * lp.wk;
    lc.k.rowwise() += lp.bk.transpose();
    lc.v = lc.a * lp.wv;
    lc.v.rowwise() += lp.bv.transpose();
    lc.attn.resize(H);
    lc.c.resize(len, d);
    for (int h = 0; h < H; ++h) {
      Mat s = lc.q.middleCols(h * dh, dh) * lc.k.middleCols(h * dh, dh).transpose() * inv_sqrt;
      softmax_rows_inplace(s);
      lc.attn[h] = std::move(s);
      lc.c.middleCols(h * dh, dh) = lc.attn[h] * lc.v.middleCols(h * dh, dh);
    }
    Mat o = lc.c * lp.wo;
    o.rowwise() += lp.bo.transpose();
    lc.x_mid = lc.x_in + o;
    ln_forward(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.bhat, lc.ln2_xhat, lc.ln2_inv);
    lc.f_pre = lc.bhat * lp.ff1;
    lc.f_pre.rowwise() += lp.fb1.transpose();
    Mat f = lc.f_pre.cwiseMax(0.0) * lp.ff2;
    f.rowwise() += lp.fb2.transpose();
    x = lc.x_mid + f;
  }
  cache.x_final = x;
  ln_forward(cache.x_final, params.lnf_g, params.lnf_b, cache.h, cache.lnf_xhat, cache.lnf_inv);
}

void extract_interests(const TowerParams& params, UserCache& cache) {
  if (cache.n < 1) throw ConfigError("extract_interests called before user_encode");
  cache.alphas = params.queries * cache.h.transpose();  // M x n
  softmax_rows_inplace(cache.alphas);
  cache.zs = cache.alphas * cache.h;  // M x d
}

void user_forward(const TowerParams& params, const int* ctx, int len, UserCache& cache) {
  user_encode(params, ctx, len, cache);
  extract_interests(params, cache);
}

namespace {

Mat layer_backward(const EncoderLayer& lp, EncoderLayer& lg, const EncLayerCache& lc,
                   const Mat& dx_out, int heads) {
  const Eigen::Index n = lc.x_in.rows(), d = lc.x_in.cols();
  const int dh = static_cast<int>(d) / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // feed-forward branch: x_out = x_mid + relu(ln2(x_mid) ff1 + fb1) ff2 + fb2
  const Mat frelu = lc.f_pre.cwiseMax(0.0);
  lg.ff2 += frelu.transpose() * dx_out;
  lg.fb2 += dx_out.colwise().sum().transpose();
  Mat dfrelu = dx_out * lp.ff2.transpose();
  const Mat dfpre =
      dfrelu.cwiseProduct((lc.f_pre.array() > 0.0).cast<double>().matrix());
  lg.ff1 += lc.bhat.transpose() * dfpre;
  lg.fb1 += dfpre.colwise().sum().transpose();
  const Mat db = dfpre * lp.ff1.transpose();
  Mat dx_mid = dx_out + ln_backward(db, lc.ln2_xhat, lc.ln2_inv, lp.ln2_g, lg.ln2_g, lg.ln2_b);

  // attention branch: x_mid = x_in + (multi-head attn over ln1(x_in)) wo + bo
  const Mat& dO = dx_mid;
  lg.wo += lc.c.transpose() * dO;
  lg.bo += dO.colwise().sum().transpose();
  const Mat dc = dO * lp.wo.transpose();
  Mat dq = Mat::Zero(n, d), dk = Mat::Zero(n, d), dv = Mat::Zero(n, d);
  for (int h = 0; h < heads; ++h) {
    const auto ph = lc.attn[h];
    const auto dch = dc.middleCols(h * dh, dh);
    const auto vh = lc.v.middleCols(h * dh, dh);
    const Mat dp = dch * vh.transpose();
    dv.middleCols(h * dh, dh) = ph.transpose() * dch;
    Mat ds = softmax_rows_backward(ph, dp);
    ds *= inv_sqrt;
    dq.middleCols(h * dh, dh) = ds * lc.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = ds.transpose() * lc.q.middleCols(h * dh, dh);
  }
  lg.wq += lc.a.transpose() * dq;
  lg.bq += dq.colwise().sum().transpose();
  lg.wk += lc.a.transpose() * dk;
  lg.bk += dk.colwise().sum().transpose();
  lg.wv += lc.a.transpose() * dv;
  lg.bv += dv.colwise().sum().transpose();
  const Mat da = dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();
  return dx_mid + ln_backward(da, lc.ln1_xhat, lc.ln1_inv, lp.ln1_g, lg.ln1_g, lg.ln1_b);
}

}  // namespace

void encoder_backward(const TowerParams& params, const UserCache& cache, const Mat& dh,
                      TowerParams& grads) {
  Mat dx = ln_backward(dh, cache.lnf_xhat, cache.lnf_inv, params.lnf_g, grads.lnf_g, grads.lnf_b);
  for (int l = static_cast<int>(params.enc.size()) - 1; l >= 0; --l)
    dx = layer_backward(params.enc[l], grads.enc[l], cache.layers[l], dx,
                        params.cfg.attention_heads);

  Mat& table_grad = grads.user_table();
  for (int i = 0; i < cache.n; ++i) {
    table_grad.row(cache.ctx[i]) += dx.row(i);
    grads.pos_emb.row(i) += dx.row(i);
  }
}

void user_backward(const TowerParams& params, const UserCache& cache, const Mat& dzs,
                   TowerParams& grads) {
  // attention pooling: zs = softmax_rows(queries h^T) h
  Mat dh = cache.alphas.transpose() * dzs;
  const Mat dalpha = dzs * cache.h.transpose();
  const Mat de = softmax_rows_backward(cache.alphas, dalpha);
  grads.queries += de * cache.h;
  dh += de.transpose() * params.queries;
  encoder_backward(params, cache, dh, grads);
}

double score_with_dots(const Mat& zs, const Vec& v, Vec& dots_out) {
  dots_out = zs * v;
  const double mx = dots_out.maxCoeff();
  double total = 0.0, acc = 0.0;
  for (Eigen::Index m = 0; m < dots_out.size(); ++m) {
    const double e = std::exp(dots_out(m) - mx);
    total += e;
    acc += e * dots_out(m);
  }
  return acc / total;
}

double score(const Mat& zs, const Vec& v) {
  Vec dots;
  return score_with_dots(zs, v, dots);
}

Mat logq_correct(const Mat& logits, const std::vector<double>& p_cols) {
  if (static_cast<Eigen::Index>(p_cols.size()) != logits.cols())
    throw ConfigError("logq_correct: probability vector length mismatch");
  Mat corrected = logits;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    if (!(p_cols[j] > 0.0))
      throw ConfigError("invalid-stats: sampling probability must be positive");
    corrected.col(j).array() -= std::log(p_cols[j]);
  }
  return corrected;
}

LossResult batch_softmax_loss(const TowerParams& params, const std::vector<BatchItem>& batch,
                              const data::ItemStats& stats, const LossOpts& opts,
                              TowerParams* grads) {
  const int B = static_cast<int>(batch.size());
  if (B < 2) throw ConfigError("degenerate batch: in-batch negatives need at least 2 examples");
  const int M = params.cfg.num_reps;
  const int d = params.cfg.embed_dim;
  const double neg_inf = -std::numeric_limits<double>::infinity();

  std::vector<double> ex_weights = opts.example_weights;
  if (ex_weights.empty()) ex_weights.assign(B, 1.0);
  if (static_cast<int>(ex_weights.size()) != B)
    throw ConfigError("example_weights size must match batch size");
  for (double w : ex_weights)
    if (!(w >= 0.0)) throw ConfigError("example weights must be nonnegative");

  // Item side: candidate representations are the batch labels.
  std::vector<ItemCache> icache(B);
  Mat vhat(B, d);
  for (int j = 0; j < B; ++j) {
    const int label = batch[j].label;
    if (label < 0 || label >= stats.num_items() || !(stats.p[label] > 0.0))
      throw ConfigError("invalid-stats: batch label " + std::to_string(label) +
                        " has zero sampling probability");
    Vec v = item_forward(params, label, &icache[j]);
    if (opts.normalize_items) {
      const double r = std::max(v.norm(), kNormFloor);
      icache[j].norm = r;
      icache[j].normalized = v / r;
      vhat.row(j) = icache[j].normalized.transpose();
    } else {
      vhat.row(j) = v.transpose();
    }
  }

  // User side.
  std::vector<UserCache> ucache(B);
  for (int i = 0; i < B; ++i) user_forward(params, batch[i].ctx, batch[i].len, ucache[i]);

  // Scores, LogQ correction, margins, duplicate-label masking.
  std::vector<Mat> dots(B), wsm(B);  // per example: M x B dots and their softmax over m
  Mat logits(B, B);
  for (int i = 0; i < B; ++i) {
    dots[i].noalias() = ucache[i].zs * vhat.transpose();
    wsm[i].resize(M, B);
    for (int j = 0; j < B; ++j) {
      const auto col = dots[i].col(j);
      const double mx = col.maxCoeff();
      double total = 0.0;
      for (int m = 0; m < M; ++m) {
        const double e = std::exp(col(m) - mx);
        wsm[i](m, j) = e;
        total += e;
      }
      wsm[i].col(j) /= total;
      logits(i, j) = wsm[i].col(j).dot(col) - stats.logp[batch[j].label];
    }
    if (opts.margins) logits(i, i) -= (*opts.margins)[batch[i].label];
  }
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j)
      if (j != i && batch[j].label == batch[i].label) logits(i, j) = neg_inf;

  // Row softmax over candidates; masked columns get probability zero.
  Mat probs(B, B);
  for (int i = 0; i < B; ++i) {
    const double mx = logits.row(i).maxCoeff();
    double total = 0.0;
    for (int j = 0; j < B; ++j) {
      const double e = logits(i, j) == neg_inf ? 0.0 : std::exp(logits(i, j) - mx);
      probs(i, j) = e;
      total += e;
    }
    probs.row(i) /= total;
  }

  LossResult result;
  result.per_example.resize(B);
  double total_loss = 0.0;
  for (int i = 0; i < B; ++i) {
    const double p_true = probs(i, i);
    const double nll = -std::log(p_true);
    double li = ex_weights[i] * nll;
    if (opts.focal) li *= std::pow(1.0 - p_true, opts.focal_gamma);
    result.per_example[i] = li;
    total_loss += li;
  }
  result.loss = total_loss / static_cast<double>(B);
  if (!grads) return result;

  // d loss / d logits. For the focal variant,
  // dL_ij = (w_i/B)(P_ij - delta_ij)(g (1-p)^(g-1) p nll + (1-p)^g).
  Mat dlogits(B, B);
  for (int i = 0; i < B; ++i) {
    double coef = ex_weights[i] / static_cast<double>(B);
    if (opts.focal) {
      const double p = probs(i, i);
      const double nll = -std::log(p);
      const double g = opts.focal_gamma;
      coef *= g * std::pow(1.0 - p, g - 1.0) * p * nll + std::pow(1.0 - p, g);
    }
    dlogits.row(i) = coef * probs.row(i);
    dlogits(i, i) -= coef;
  }

  // Score backward: s = sum_m w_m a_m with w = softmax_m(a), so
  // da = ds * w (x) (1 + a - s).
  Mat dvhat = Mat::Zero(B, d);
  Mat da(M, B);
  for (int i = 0; i < B; ++i) {
    for (int j = 0; j < B; ++j) {
      const double ds = dlogits(i, j);
      if (ds == 0.0) {
        da.col(j).setZero();
        continue;
      }
      const double s = wsm[i].col(j).dot(dots[i].col(j));
      da.col(j) = ds * wsm[i].col(j).cwiseProduct(
                           (dots[i].col(j).array() + (1.0 - s)).matrix());
    }
    user_backward(params, ucache[i], da * vhat, *grads);
    dvhat.noalias() += da.transpose() * ucache[i].zs;
  }

  for (int j = 0; j < B; ++j) {
    Vec dv = dvhat.row(j).transpose();
    if (opts.normalize_items) {
      const Vec& nv = icache[j].normalized;
      dv = (dv - nv * nv.dot(dv)) / icache[j].norm;
    }
    item_backward(params, icache[j], dv, *grads);
  }
  return result;
}

}  // namespace murec::towers
