#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "simpdo/encoder.hpp"
#include "simpdo/interactions.hpp"

namespace simpdo {

// Training sees only similar pairs. A model can then cheat in three ways:
// map everything to one point (collapse), map everything onto a line or a
// few points (partial collapse, perfectly correlated dimensions), or scale
// all representations toward zero (shrinking). The objective below combats
// all three: a hinge on the mean squared pairwise distance of the batch
// block keeps representations spread out, and an orthogonality penalty on
// the centered block decorrelates dimensions.

enum class BaseLoss { kCont, kMse };

inline BaseLoss parse_base_loss(const std::string& name) {
  if (name == "cont") return BaseLoss::kCont;
  if (name == "mse") return BaseLoss::kMse;
  throw std::invalid_argument("unknown base loss '" + name +
                              "' (expected cont or mse)");
}

/// Orthogonality penalty shape: kSquared sums squared off-diagonal inner
/// products (scale-symmetric, the default), kRaw sums them signed.
enum class OrthMode { kSquared, kRaw };

inline OrthMode parse_orth_mode(const std::string& name) {
  if (name == "squared") return OrthMode::kSquared;
  if (name == "raw") return OrthMode::kRaw;
  throw std::invalid_argument("unknown orth mode '" + name +
                              "' (expected squared or raw)");
}

struct ObjectiveConfig {
  BaseLoss base_loss = BaseLoss::kCont;
  double lambda1 = 0.01;  // base similarity term
  double lambda2 = 1.0;   // pairwise-distance hinge
  double lambda3 = 1.0;   // orthogonality term
  double margin_p = 0.01;  // floor on the batch mean squared pairwise distance
  double margin_d = 1.0;   // dissimilarity margin of the contrastive baseline
  Mapping mapping = Mapping::kDot;
  OrthMode orth_mode = OrthMode::kSquared;

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(lambda1) || !finite(lambda2) || !finite(lambda3) ||
        lambda1 < 0 || lambda2 < 0 || lambda3 < 0) {
      throw std::invalid_argument("loss weights must be finite and >= 0");
    }
    if (!(margin_p > 0) || !finite(margin_p)) {
      throw std::invalid_argument("margin_p must be positive");
    }
    if (!(margin_d > 0) || !finite(margin_d)) {
      throw std::invalid_argument("margin_d must be positive");
    }
    if (base_loss == BaseLoss::kMse && mapping != Mapping::kDot) {
      throw std::invalid_argument("mse base loss requires the dot mapping");
    }
  }
};

/// Statistics of one stacked representation block (batch users on top,
/// batch items below, each row once).
struct BatchStats {
  int rows = 0;     // b
  Vector mean;      // per-dimension mean, d
  Vector var;       // per-dimension population variance (1/b), d
  Matrix centered;  // b x d, rows sum to zero per column

  /// Mean squared pairwise distance of the block. Expanding
  /// (1/b^2) sum_{l,s} |z_l - z_s|^2 cancels the cross terms against the
  /// mean, leaving exactly twice the summed per-dimension variance.
  double pairwise_distance() const { return 2.0 * var.sum(); }

  /// Gram matrix of the centered block, cached. Its diagonal is b * var.
  const Matrix& centered_gram() const {
    if (!gram_) gram_ = centered.transpose() * centered;
    return *gram_;
  }

 private:
  mutable std::optional<Matrix> gram_;
};

/// Centers the block and takes per-dimension moments. Needs >= 2 rows; a
/// single row has no spread to measure.
inline BatchStats batch_stats(const Matrix& block) {
  if (block.rows() < 2) {
    throw std::invalid_argument("batch_stats needs at least two rows");
  }
  BatchStats st;
  st.rows = static_cast<int>(block.rows());
  st.mean = block.colwise().mean().transpose();
  st.centered = block.rowwise() - st.mean.transpose();
  st.var = st.centered.array().square().colwise().sum().transpose() /
           static_cast<double>(st.rows);
  return st;
}

/// Loss value plus sparse per-row gradients, index-ascending. `near_kink`
/// marks evaluations within kKinkTolerance of a hinge corner, where the
/// derivative is one-sided.
struct PairLossResult {
  double value = 0.0;
  std::vector<std::pair<int, RowVec>> user_grads;
  std::vector<std::pair<int, RowVec>> item_grads;
  bool near_kink = false;
};

inline constexpr double kKinkTolerance = 1e-3;

namespace detail {

inline std::vector<std::pair<int, RowVec>> sorted_grads(
    std::map<int, RowVec>&& acc) {
  std::vector<std::pair<int, RowVec>> out;
  out.reserve(acc.size());
  for (auto& [idx, g] : acc) out.emplace_back(idx, std::move(g));
  return out;
}

inline void add_grad(std::map<int, RowVec>& acc, int idx, int dim,
                     const RowVec& g) {
  auto [it, fresh] = acc.try_emplace(idx, RowVec::Zero(dim));
  (void)fresh;
  it->second += g;
}

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  double e = std::exp(s);
  return e / (1.0 + e);
}

/// ln(1 + e^s) without overflow.
inline double softplus(double s) {
  return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s)));
}

inline void require_pairs(std::size_t n, const char* who) {
  if (n == 0) {
    throw std::invalid_argument(std::string(who) + ": empty pair set");
  }
}

}  // namespace detail

/// Mean squared Euclidean distance between the members of each similar
/// pair: (1/B) sum |z_u - z_i|^2. Drives similar pairs together; alone it
/// admits the all-points-equal solution.
inline PairLossResult loss_cont(const std::vector<std::pair<int, int>>& pairs,
                                const EmbeddingModel& m) {
  detail::require_pairs(pairs.size(), "loss_cont");
  const double inv = 1.0 / static_cast<double>(pairs.size());
  const int d = m.dim();
  std::map<int, RowVec> gu, gi;
  PairLossResult res;
  for (const auto& [j, k] : pairs) {
    RowVec delta = user_rep(m, j) - item_rep(m, k);
    res.value += inv * delta.squaredNorm();
    detail::add_grad(gu, j, d, RowVec(2.0 * inv * delta));
    detail::add_grad(gi, k, d, RowVec(-2.0 * inv * delta));
  }
  res.user_grads = detail::sorted_grads(std::move(gu));
  res.item_grads = detail::sorted_grads(std::move(gi));
  return res;
}

/// Mean squared error of the similarity against 1 over similar pairs:
/// (1/B) sum (z_u . z_i - 1)^2. Pins the pair scores to a nonzero target,
/// which also blocks the shrink-everything-to-zero solution.
inline PairLossResult loss_mse_similar(
    const std::vector<std::pair<int, int>>& pairs, const EmbeddingModel& m,
    Mapping mapping) {
  detail::require_pairs(pairs.size(), "loss_mse_similar");
  if (mapping != Mapping::kDot) {
    throw std::invalid_argument("loss_mse_similar requires the dot mapping");
  }
  const double inv = 1.0 / static_cast<double>(pairs.size());
  const int d = m.dim();
  std::map<int, RowVec> gu, gi;
  PairLossResult res;
  for (const auto& [j, k] : pairs) {
    auto zu = user_rep(m, j);
    auto zi = item_rep(m, k);
    double err = zu.dot(zi) - 1.0;
    res.value += inv * err * err;
    detail::add_grad(gu, j, d, RowVec(2.0 * inv * err * zi));
    detail::add_grad(gi, k, d, RowVec(2.0 * inv * err * zu));
  }
  res.user_grads = detail::sorted_grads(std::move(gu));
  res.item_grads = detail::sorted_grads(std::move(gi));
  return res;
}

/// Labeled pair for the baselines that consume explicit negatives.
struct LabeledPair {
  int user = -1;
  int item = -1;
  int label = 0;  // 1 similar, 0 sampled negative
};

/// Mean binary cross-entropy of sigmoid(z_u . z_i) against the labels.
inline PairLossResult loss_bce(const std::vector<LabeledPair>& pairs,
                               const EmbeddingModel& m) {
  detail::require_pairs(pairs.size(), "loss_bce");
  const double inv = 1.0 / static_cast<double>(pairs.size());
  const int d = m.dim();
  std::map<int, RowVec> gu, gi;
  PairLossResult res;
  for (const auto& p : pairs) {
    if (p.label != 0 && p.label != 1) {
      throw std::invalid_argument("loss_bce: labels must be 0 or 1");
    }
    auto zu = user_rep(m, p.user);
    auto zi = item_rep(m, p.item);
    double s = zu.dot(zi);
    res.value += inv * (detail::softplus(s) - p.label * s);
    double c = inv * (detail::sigmoid(s) - p.label);
    detail::add_grad(gu, p.user, d, RowVec(c * zi));
    detail::add_grad(gi, p.item, d, RowVec(c * zu));
  }
  res.user_grads = detail::sorted_grads(std::move(gu));
  res.item_grads = detail::sorted_grads(std::move(gi));
  return res;
}

/// Ranking triple: the user should score `pos_item` above `neg_item`.
struct BprTriple {
  int user = -1;
  int pos_item = -1;
  int neg_item = -1;
};

/// Mean pairwise ranking loss -ln sigmoid(score_pos - score_neg).
inline PairLossResult loss_bpr(const std::vector<BprTriple>& triples,
                               const EmbeddingModel& m) {
  detail::require_pairs(triples.size(), "loss_bpr");
  const double inv = 1.0 / static_cast<double>(triples.size());
  const int d = m.dim();
  std::map<int, RowVec> gu, gi;
  PairLossResult res;
  for (const auto& t : triples) {
    if (t.pos_item == t.neg_item) {
      throw std::invalid_argument("loss_bpr: positive equals negative");
    }
    auto zu = user_rep(m, t.user);
    auto zp = item_rep(m, t.pos_item);
    auto zn = item_rep(m, t.neg_item);
    double diff = zu.dot(zp) - zu.dot(zn);
    res.value += inv * detail::softplus(-diff);
    double c = inv * (detail::sigmoid(diff) - 1.0);
    detail::add_grad(gu, t.user, d, RowVec(c * (zp - zn)));
    detail::add_grad(gi, t.pos_item, d, RowVec(c * zu));
    detail::add_grad(gi, t.neg_item, d, RowVec(-c * zu));
  }
  res.user_grads = detail::sorted_grads(std::move(gu));
  res.item_grads = detail::sorted_grads(std::move(gi));
  return res;
}

/// Distance-based contrastive baseline: similar pairs pay |z_u - z_i|^2,
/// negatives pay neg_weight * (margin_d - |z_u - z_i|)^2 while closer than
/// margin_d. The zero-distance negative takes subgradient zero.
inline PairLossResult loss_contrastive_neg(const std::vector<LabeledPair>& pairs,
                                           const EmbeddingModel& m,
                                           double margin_d,
                                           double neg_weight = 1.0) {
  detail::require_pairs(pairs.size(), "loss_contrastive_neg");
  if (!(margin_d > 0) || !std::isfinite(margin_d)) {
    throw std::invalid_argument("margin_d must be positive");
  }
  const double inv = 1.0 / static_cast<double>(pairs.size());
  const int d = m.dim();
  std::map<int, RowVec> gu, gi;
  PairLossResult res;
  for (const auto& p : pairs) {
    if (p.label != 0 && p.label != 1) {
      throw std::invalid_argument("loss_contrastive_neg: labels must be 0 or 1");
    }
    RowVec delta = user_rep(m, p.user) - item_rep(m, p.item);
    if (p.label == 1) {
      res.value += inv * delta.squaredNorm();
      detail::add_grad(gu, p.user, d, RowVec(2.0 * inv * delta));
      detail::add_grad(gi, p.item, d, RowVec(-2.0 * inv * delta));
      continue;
    }
    double r = delta.norm();
    if (std::abs(r - margin_d) < kKinkTolerance) res.near_kink = true;
    if (r >= margin_d) continue;
    double gap = margin_d - r;
    res.value += inv * neg_weight * gap * gap;
    if (r == 0.0) continue;
    double c = -2.0 * inv * neg_weight * gap / r;
    detail::add_grad(gu, p.user, d, RowVec(c * delta));
    detail::add_grad(gi, p.item, d, RowVec(-c * delta));
  }
  res.user_grads = detail::sorted_grads(std::move(gu));
  res.item_grads = detail::sorted_grads(std::move(gi));
  return res;
}

/// Loss value and gradient with respect to the stacked block rows.
struct BlockLossResult {
  double value = 0.0;
  Matrix grad;  // b x d
  bool near_kink = false;
};

/// Hinge on the block's mean squared pairwise distance d_p:
/// (margin_p - d_p)^2 while d_p < margin_p, else 0. Collapsed and shrunken
/// blocks have small d_p, so this term re-inflates them; healthy blocks
/// pay nothing. Gradient through d_p uses
/// d d_p / d z_lq = (4/b) (z_lq - mean_q); at d_p == margin_p the
/// subgradient 0 is taken.
inline BlockLossResult loss_hinge_pairwise(const BatchStats& st,
                                           double margin_p) {
  if (!(margin_p > 0) || !std::isfinite(margin_p)) {
    throw std::invalid_argument("margin_p must be positive");
  }
  BlockLossResult res;
  const double dp = st.pairwise_distance();
  res.near_kink = std::abs(dp - margin_p) < kKinkTolerance * margin_p;
  if (dp >= margin_p) {
    res.grad = Matrix::Zero(st.centered.rows(), st.centered.cols());
    return res;
  }
  const double gap = margin_p - dp;
  res.value = gap * gap;
  res.grad = (-8.0 * gap / static_cast<double>(st.rows)) * st.centered;
  return res;
}

/// Decorrelation penalty over the centered block's dimension pairs,
/// averaged over the d(d-1)/2 pairs so the weight means the same thing at
/// any width. With one dimension there is nothing to decorrelate: 0.
///
/// kRaw sums the signed inner products c_q . c_s themselves; writing
/// u = row sums of the centered block, the sum collapses to
/// (|u|^2 - |C|_F^2) / 2 with gradient u 1' - C per row (O(b d)).
/// kSquared sums their squares via the gram matrix G = C'C:
/// value (|G|_F^2 - tr(G^2 diag)) / 2, gradient 2 C G_offdiag.
inline BlockLossResult loss_orth(const BatchStats& st, OrthMode mode) {
  BlockLossResult res;
  const auto b = st.centered.rows();
  const auto d = st.centered.cols();
  if (d < 2) {
    res.grad = Matrix::Zero(b, d);
    return res;
  }
  const double norm = static_cast<double>(d) * (static_cast<double>(d) - 1.0) / 2.0;
  if (mode == OrthMode::kRaw) {
    Vector u = st.centered.rowwise().sum();
    res.value =
        (u.squaredNorm() - st.centered.squaredNorm()) / 2.0 / norm;
    res.grad = (u.replicate(1, d) - st.centered) / norm;
    return res;
  }
  const Matrix& gram = st.centered_gram();
  double frob2 = gram.squaredNorm();
  double diag2 = gram.diagonal().squaredNorm();
  res.value = (frob2 - diag2) / 2.0 / norm;
  Matrix off = gram;
  off.diagonal().setZero();
  res.grad = 2.0 * (st.centered * off) / norm;
  return res;
}

/// Per-term values of one batch objective evaluation. `cont` always reports
/// the mean squared pair distance, also when the mse base loss is active.
struct LossBreakdown {
  double cont = 0.0;
  double base = 0.0;
  double hinge = 0.0;
  double orth = 0.0;
  double total = 0.0;
  double d_p = 0.0;
};

/// Dense gradients for the rows a batch touches, aligned with the ascending
/// `users` / `items` index lists.
struct BatchGradients {
  std::vector<int> users;
  std::vector<int> items;
  RowMatrix user_grads;
  RowMatrix item_grads;

  bool all_finite() const {
    return user_grads.allFinite() && item_grads.allFinite();
  }
};

/// Full training objective of one batch:
///   total = lambda1 * base + lambda2 * hinge + lambda3 * orth
/// where base is the configured similarity loss over the batch pairs and
/// hinge/orth act on the stacked block of the batch's unique user and item
/// rows (users first). Batches where users + items < 2 rows cannot happen:
/// any pair contributes one user and one item row.
inline std::pair<LossBreakdown, BatchGradients> total_objective(
    const ObjectiveConfig& cfg, const Batch& batch, const EmbeddingModel& m) {
  if (batch.pairs.empty()) {
    throw std::invalid_argument("total_objective: empty batch");
  }
  const int d = m.dim();
  const int nu = static_cast<int>(batch.unique_users.size());
  const int ni = static_cast<int>(batch.unique_items.size());

  // Stacked block, one row per unique user then per unique item.
  Matrix block(nu + ni, d);
  for (int r = 0; r < nu; ++r) {
    block.row(r) = user_rep(m, batch.unique_users[static_cast<std::size_t>(r)]);
  }
  for (int r = 0; r < ni; ++r) {
    block.row(nu + r) =
        item_rep(m, batch.unique_items[static_cast<std::size_t>(r)]);
  }
  BatchStats st = batch_stats(block);

  BatchGradients grads;
  grads.users = batch.unique_users;
  grads.items = batch.unique_items;
  grads.user_grads = RowMatrix::Zero(nu, d);
  grads.item_grads = RowMatrix::Zero(ni, d);

  std::map<int, int> urow, irow;
  for (int r = 0; r < nu; ++r) {
    urow[batch.unique_users[static_cast<std::size_t>(r)]] = r;
  }
  for (int r = 0; r < ni; ++r) {
    irow[batch.unique_items[static_cast<std::size_t>(r)]] = r;
  }

  LossBreakdown lb;
  lb.d_p = st.pairwise_distance();

  PairLossResult base = cfg.base_loss == BaseLoss::kCont
                            ? loss_cont(batch.pairs, m)
                            : loss_mse_similar(batch.pairs, m, cfg.mapping);
  lb.base = base.value;
  lb.cont = cfg.base_loss == BaseLoss::kCont
                ? base.value
                : loss_cont(batch.pairs, m).value;
  for (const auto& [j, g] : base.user_grads) {
    grads.user_grads.row(urow.at(j)) += cfg.lambda1 * g;
  }
  for (const auto& [k, g] : base.item_grads) {
    grads.item_grads.row(irow.at(k)) += cfg.lambda1 * g;
  }

  BlockLossResult hinge = loss_hinge_pairwise(st, cfg.margin_p);
  BlockLossResult orth = loss_orth(st, cfg.orth_mode);
  lb.hinge = hinge.value;
  lb.orth = orth.value;
  grads.user_grads += cfg.lambda2 * hinge.grad.topRows(nu) +
                      cfg.lambda3 * orth.grad.topRows(nu);
  grads.item_grads += cfg.lambda2 * hinge.grad.bottomRows(ni) +
                      cfg.lambda3 * orth.grad.bottomRows(ni);

  lb.total = cfg.lambda1 * lb.base + cfg.lambda2 * lb.hinge +
             cfg.lambda3 * lb.orth;
  return {lb, std::move(grads)};
}

}  // namespace simpdo
