#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "simpdo/objective.hpp"

namespace simpdo {

/// Outcome of comparing one loss's analytic gradient against central finite
/// differences over every touched coordinate.
struct GradCheckReport {
  double max_rel_err = 0.0;
  int coords_checked = 0;
  int coords_skipped = 0;    // skipped for sitting too close to a hinge corner
  bool base_at_kink = false; // the unperturbed point itself sits on a corner
};

/// Evaluation of a loss at a model point: value, sparse gradients, and
/// whether the point is within tolerance of a non-differentiable corner.
struct LossEval {
  double value = 0.0;
  std::vector<std::pair<int, RowVec>> user_grads;
  std::vector<std::pair<int, RowVec>> item_grads;
  bool near_kink = false;
};

using LossFn = std::function<LossEval(const EmbeddingModel&)>;

/// Central-difference check of `fn` around `model`. Every coordinate with a
/// reported gradient is perturbed by +-eps; evaluations that land near a
/// corner are skipped rather than compared, because the two-sided difference
/// straddles the kink there. Relative error uses
/// |fd - g| / max(|fd|, |g|, 1e-8).
inline GradCheckReport finite_difference_check(EmbeddingModel model,
                                               const LossFn& fn, double eps) {
  if (!(eps > 0) || !std::isfinite(eps)) {
    throw std::invalid_argument("eps must be positive");
  }
  LossEval base = fn(model);
  if (!std::isfinite(base.value)) {
    throw std::runtime_error("finite_difference_check: non-finite loss value");
  }
  GradCheckReport report;
  if (base.near_kink) {
    report.base_at_kink = true;
    return report;
  }
  auto check_coord = [&](double* slot, double analytic) {
    const double saved = *slot;
    *slot = saved + eps;
    LossEval plus = fn(model);
    *slot = saved - eps;
    LossEval minus = fn(model);
    *slot = saved;
    if (plus.near_kink || minus.near_kink) {
      ++report.coords_skipped;
      return;
    }
    double fd = (plus.value - minus.value) / (2.0 * eps);
    double rel = std::abs(fd - analytic) /
                 std::max({std::abs(fd), std::abs(analytic), 1e-8});
    report.max_rel_err = std::max(report.max_rel_err, rel);
    ++report.coords_checked;
  };
  for (const auto& [j, g] : base.user_grads) {
    for (int q = 0; q < model.dim(); ++q) {
      check_coord(&model.users(j, q), g(q));
    }
  }
  for (const auto& [k, g] : base.item_grads) {
    for (int q = 0; q < model.dim(); ++q) {
      check_coord(&model.items(k, q), g(q));
    }
  }
  return report;
}

/// Fixed toy problem: a small random model plus pair sets for every loss
/// term. Sized so each term is active and away from its corners.
struct GradCheckOptions {
  int num_users = 6;
  int num_items = 6;
  int dim = 5;
  double eps = 1e-5;
  double init_scale = 0.5;
  std::uint64_t seed = 414243;
  double margin_p = 2.0;   // above the toy block's d_p, so the hinge is active
  double margin_d = 1.0;
  double rel_tol = 1e-4;
  std::string corrupt_term;  // test hook: break one term's gradient
};

struct TermCheck {
  std::string term;
  GradCheckReport report;
  bool pass = false;
};

namespace detail {

inline LossEval from_pair_result(PairLossResult&& r) {
  LossEval e;
  e.value = r.value;
  e.user_grads = std::move(r.user_grads);
  e.item_grads = std::move(r.item_grads);
  e.near_kink = r.near_kink;
  return e;
}

/// Lifts a block loss to model space over fixed row lists.
inline LossEval from_block_result(const std::vector<int>& users,
                                  const std::vector<int>& items,
                                  const BlockLossResult& r) {
  LossEval e;
  e.value = r.value;
  e.near_kink = r.near_kink;
  const int nu = static_cast<int>(users.size());
  for (int r2 = 0; r2 < nu; ++r2) {
    e.user_grads.emplace_back(users[static_cast<std::size_t>(r2)],
                              r.grad.row(r2));
  }
  for (std::size_t r2 = 0; r2 < items.size(); ++r2) {
    e.item_grads.emplace_back(items[r2],
                              r.grad.row(nu + static_cast<int>(r2)));
  }
  return e;
}

inline Matrix stack_block(const EmbeddingModel& m, const std::vector<int>& users,
                          const std::vector<int>& items) {
  Matrix block(static_cast<Eigen::Index>(users.size() + items.size()), m.dim());
  Eigen::Index r = 0;
  for (int j : users) block.row(r++) = user_rep(m, j);
  for (int k : items) block.row(r++) = item_rep(m, k);
  return block;
}

}  // namespace detail

/// Builds every term's evaluator on one toy problem and runs the finite
/// difference check. Covers both base losses, the three baselines, the
/// hinge, both orthogonality modes, and the assembled total objective.
inline std::vector<TermCheck> run_gradient_checks(
    const GradCheckOptions& opt) {
  EmbeddingModel model = init_model(opt.num_users, opt.num_items, opt.dim,
                                    opt.init_scale, opt.seed);
  Rng rng(derive_seed(opt.seed, 7));
  auto ri = [&](int bound) {
    return static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(bound)));
  };

  std::vector<std::pair<int, int>> pairs;
  for (int t = 0; t < 2 * opt.num_users; ++t) {
    pairs.emplace_back(ri(opt.num_users), ri(opt.num_items));
  }
  std::vector<LabeledPair> labeled;
  for (int t = 0; t < 2 * opt.num_users; ++t) {
    labeled.push_back({ri(opt.num_users), ri(opt.num_items), t % 2});
  }
  std::vector<BprTriple> triples;
  while (static_cast<int>(triples.size()) < 2 * opt.num_users) {
    int pos = ri(opt.num_items);
    int neg = ri(opt.num_items);
    if (pos == neg) continue;
    triples.push_back({ri(opt.num_users), pos, neg});
  }

  Batch batch;
  batch.pairs = pairs;
  for (const auto& [j, k] : pairs) {
    batch.unique_users.push_back(j);
    batch.unique_items.push_back(k);
  }
  auto dedup = [](std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  dedup(batch.unique_users);
  dedup(batch.unique_items);

  ObjectiveConfig total_cfg;
  total_cfg.base_loss = BaseLoss::kCont;
  total_cfg.lambda1 = 1.0;
  total_cfg.lambda2 = 1.0;
  total_cfg.lambda3 = 1.0;
  total_cfg.margin_p = opt.margin_p;
  total_cfg.orth_mode = OrthMode::kSquared;

  std::vector<std::pair<std::string, LossFn>> terms;
  terms.emplace_back("cont", [&](const EmbeddingModel& m) {
    return detail::from_pair_result(loss_cont(pairs, m));
  });
  terms.emplace_back("mse", [&](const EmbeddingModel& m) {
    return detail::from_pair_result(loss_mse_similar(pairs, m, Mapping::kDot));
  });
  terms.emplace_back("bce", [&](const EmbeddingModel& m) {
    return detail::from_pair_result(loss_bce(labeled, m));
  });
  terms.emplace_back("bpr", [&](const EmbeddingModel& m) {
    return detail::from_pair_result(loss_bpr(triples, m));
  });
  terms.emplace_back("contrastive", [&](const EmbeddingModel& m) {
    return detail::from_pair_result(
        loss_contrastive_neg(labeled, m, opt.margin_d));
  });
  terms.emplace_back("hinge", [&](const EmbeddingModel& m) {
    BatchStats st = batch_stats(
        detail::stack_block(m, batch.unique_users, batch.unique_items));
    return detail::from_block_result(batch.unique_users, batch.unique_items,
                                     loss_hinge_pairwise(st, opt.margin_p));
  });
  terms.emplace_back("orth_squared", [&](const EmbeddingModel& m) {
    BatchStats st = batch_stats(
        detail::stack_block(m, batch.unique_users, batch.unique_items));
    return detail::from_block_result(batch.unique_users, batch.unique_items,
                                     loss_orth(st, OrthMode::kSquared));
  });
  terms.emplace_back("orth_raw", [&](const EmbeddingModel& m) {
    BatchStats st = batch_stats(
        detail::stack_block(m, batch.unique_users, batch.unique_items));
    return detail::from_block_result(batch.unique_users, batch.unique_items,
                                     loss_orth(st, OrthMode::kRaw));
  });
  terms.emplace_back("total", [&](const EmbeddingModel& m) {
    auto [lb, grads] = total_objective(total_cfg, batch, m);
    LossEval e;
    e.value = lb.total;
    BatchStats st = batch_stats(
        detail::stack_block(m, batch.unique_users, batch.unique_items));
    e.near_kink = std::abs(st.pairwise_distance() - total_cfg.margin_p) <
                  kKinkTolerance * total_cfg.margin_p;
    for (std::size_t r = 0; r < grads.users.size(); ++r) {
      e.user_grads.emplace_back(grads.users[r],
                                grads.user_grads.row(static_cast<int>(r)));
    }
    for (std::size_t r = 0; r < grads.items.size(); ++r) {
      e.item_grads.emplace_back(grads.items[r],
                                grads.item_grads.row(static_cast<int>(r)));
    }
    return e;
  });

  std::vector<TermCheck> out;
  for (auto& [name, fn] : terms) {
    LossFn wrapped = fn;
    if (name == opt.corrupt_term) {
      wrapped = [fn = std::move(fn)](const EmbeddingModel& m) {
        LossEval e = fn(m);
        if (!e.user_grads.empty()) e.user_grads.front().second.array() += 0.5;
        return e;
      };
    }
    TermCheck tc;
    tc.term = name;
    tc.report = finite_difference_check(model, wrapped, opt.eps);
    tc.pass = !tc.report.base_at_kink && tc.report.coords_checked > 0 &&
              tc.report.max_rel_err < opt.rel_tol;
    out.push_back(std::move(tc));
  }
  return out;
}

}  // namespace simpdo
