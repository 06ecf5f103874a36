#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "simpdo/encoder.hpp"

namespace simpdo {

/// Mean over dimensions of the per-dimension population variance of the
/// rows. Zero exactly when all rows are identical.
inline double mean_dim_variance(const Matrix& reps) {
  if (reps.rows() < 2) {
    throw std::invalid_argument("mean_dim_variance needs at least two rows");
  }
  RowVec mean = reps.colwise().mean();
  Matrix centered = reps.rowwise() - mean;
  double total = centered.squaredNorm() / static_cast<double>(reps.rows());
  return total / static_cast<double>(reps.cols());
}

/// Mean absolute Pearson correlation over all dimension pairs. Pairs where
/// either dimension is constant contribute zero (no direction to correlate).
/// A representation squeezed onto a line scores 1 on every varying pair.
inline double mean_abs_correlation(const Matrix& reps) {
  if (reps.rows() < 2) {
    throw std::invalid_argument("mean_abs_correlation needs at least two rows");
  }
  const auto d = reps.cols();
  if (d < 2) {
    throw std::invalid_argument("mean_abs_correlation needs at least two dims");
  }
  RowVec mean = reps.colwise().mean();
  Matrix centered = reps.rowwise() - mean;
  Matrix gram = centered.transpose() * centered;
  Vector norms = gram.diagonal().cwiseSqrt();
  double acc = 0.0;
  for (Eigen::Index q = 0; q < d; ++q) {
    for (Eigen::Index s = q + 1; s < d; ++s) {
      double denom = norms(q) * norms(s);
      if (denom > 0.0) acc += std::abs(gram(q, s)) / denom;
    }
  }
  return acc / (static_cast<double>(d) * (static_cast<double>(d) - 1.0) / 2.0);
}

/// Literal O(N^2 d) mean squared pairwise distance, the reference the fast
/// variance form is checked against. One row has no pairs: 0.
inline double pairwise_distance_bruteforce(const Matrix& reps) {
  const auto n = reps.rows();
  if (n < 1) {
    throw std::invalid_argument("pairwise_distance_bruteforce: empty matrix");
  }
  double acc = 0.0;
  for (Eigen::Index l = 0; l < n; ++l) {
    for (Eigen::Index s = 0; s < n; ++s) {
      acc += (reps.row(l) - reps.row(s)).squaredNorm();
    }
  }
  return acc / (static_cast<double>(n) * static_cast<double>(n));
}

/// Number of distinct rows up to tolerance, counted greedily against the
/// first representative of each cluster and capped at `cap` (past a handful
/// the exact count stops mattering). The tolerance is relative to the
/// matrix's largest magnitude with an absolute floor, so a fully collapsed
/// table reads as one row even after long training, while a tiny but
/// genuinely spread table keeps its many distinct rows.
inline int estimate_unique_rows(const Matrix& reps, double rel_tol,
                                int cap = 16) {
  if (reps.rows() < 1) {
    throw std::invalid_argument("estimate_unique_rows: empty matrix");
  }
  if (!(rel_tol >= 0)) {
    throw std::invalid_argument("rel_tol must be >= 0");
  }
  const double scale = std::max(1.0, reps.cwiseAbs().maxCoeff());
  const double tol = rel_tol * scale;
  std::vector<Eigen::Index> reps_rows;
  for (Eigen::Index l = 0; l < reps.rows(); ++l) {
    bool found = false;
    for (Eigen::Index r : reps_rows) {
      if ((reps.row(l) - reps.row(r)).lpNorm<Eigen::Infinity>() <= tol) {
        found = true;
        break;
      }
    }
    if (!found) {
      reps_rows.push_back(l);
      if (static_cast<int>(reps_rows.size()) >= cap) return cap;
    }
  }
  return static_cast<int>(reps_rows.size());
}

enum class CollapseVerdict { kHealthy, kCollapsed, kPartiallyCollapsed, kShrinking };

inline std::string to_string(CollapseVerdict v) {
  switch (v) {
    case CollapseVerdict::kHealthy: return "healthy";
    case CollapseVerdict::kCollapsed: return "collapsed";
    case CollapseVerdict::kPartiallyCollapsed: return "partially_collapsed";
    case CollapseVerdict::kShrinking: return "shrinking";
  }
  return "unknown";
}

struct CollapseThresholds {
  double var_floor = 1e-4;      // below: no usable spread
  double corr_ceiling = 0.95;   // above: dimensions are redundant
  double shrink_floor = 1e-6;   // below with structure intact: scaled away
  double row_tolerance = 1e-6;  // relative row-equality tolerance
};

struct CollapseReport {
  double mean_dim_variance = 0.0;
  double mean_abs_correlation = 0.0;  // 0 when d < 2
  double d_p = 0.0;                   // 2 * sum of per-dimension variances
  int unique_rep_estimate = 0;
  CollapseVerdict verdict = CollapseVerdict::kHealthy;
};

/// Orders the degenerate regimes from most to least specific. One distinct
/// row is full collapse no matter the scale; two is the canonical partial
/// collapse; high correlation with real spread is partial collapse; tiny
/// variance with LOW correlation and many distinct rows means the structure
/// survived but shrank; tiny variance otherwise is collapse.
inline CollapseVerdict classify_collapse(const CollapseReport& r,
                                         const CollapseThresholds& th) {
  if (r.unique_rep_estimate <= 1) return CollapseVerdict::kCollapsed;
  if (r.unique_rep_estimate == 2) return CollapseVerdict::kPartiallyCollapsed;
  const bool high_corr = r.mean_abs_correlation > th.corr_ceiling;
  if (high_corr && r.mean_dim_variance >= th.var_floor) {
    return CollapseVerdict::kPartiallyCollapsed;
  }
  if (!high_corr && r.mean_dim_variance < th.shrink_floor) {
    return CollapseVerdict::kShrinking;
  }
  if (!high_corr && r.mean_dim_variance < th.var_floor) {
    return CollapseVerdict::kCollapsed;
  }
  if (high_corr) return CollapseVerdict::kPartiallyCollapsed;
  return CollapseVerdict::kHealthy;
}

/// Full diagnostic pass over a stacked representation matrix.
inline CollapseReport collapse_report(const Matrix& reps,
                                      const CollapseThresholds& th = {}) {
  if (reps.rows() < 2) {
    throw std::invalid_argument("collapse_report needs at least two rows");
  }
  CollapseReport r;
  r.mean_dim_variance = mean_dim_variance(reps);
  r.mean_abs_correlation = reps.cols() >= 2 ? mean_abs_correlation(reps) : 0.0;
  r.d_p = 2.0 * r.mean_dim_variance * static_cast<double>(reps.cols());
  r.unique_rep_estimate = estimate_unique_rows(reps, th.row_tolerance);
  r.verdict = classify_collapse(r, th);
  return r;
}

/// The user and item tables stacked into one matrix, users on top.
inline Matrix stacked_reps(const EmbeddingModel& m) {
  Matrix z(m.num_users() + m.num_items(), m.dim());
  z.topRows(m.num_users()) = m.users;
  z.bottomRows(m.num_items()) = m.items;
  return z;
}

}  // namespace simpdo
