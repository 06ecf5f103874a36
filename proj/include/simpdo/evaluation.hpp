#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "simpdo/encoder.hpp"
#include "simpdo/interactions.hpp"

namespace simpdo {

struct MetricResult {
  std::string metric;
  int k = 0;
  double value = 0.0;
  int num_cases = 0;      // cases actually scored
  int num_excluded = 0;   // cases dropped (e.g. cold items with no truth)
  std::uint64_t seed = 0; // seed of the split the metric was computed on
};

/// How the user side is represented when ranking users for a cold item.
enum class ColdUserRep { kTable, kAggregate };

inline ColdUserRep parse_cold_user_rep(const std::string& name) {
  if (name == "table") return ColdUserRep::kTable;
  if (name == "aggregate") return ColdUserRep::kAggregate;
  throw std::invalid_argument("unknown user rep '" + name +
                              "' (expected table or aggregate)");
}

namespace detail {

/// Rank of entry `pos` among `scores`: the number of entries that beat it.
/// Ties break by ascending index, so equal-score candidates with a smaller
/// index outrank it. This makes untrained models land exactly at chance.
inline int rank_of(const std::vector<double>& scores, std::size_t pos) {
  int rank = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c == pos) continue;
    if (scores[c] > scores[pos] ||
        (scores[c] == scores[pos] && c < pos)) {
      ++rank;
    }
  }
  return rank;
}

}  // namespace detail

/// Fraction of leave-one-out cases whose held-out item ranks in the top K
/// of its candidate list. Every case needs at least K candidates, otherwise
/// a top-K hit would be vacuous.
inline MetricResult hit_ratio_at_k(const EmbeddingModel& model,
                                   const WarmSplit& split, int k,
                                   Mapping mapping) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (split.cases.empty()) {
    throw std::invalid_argument("hit_ratio_at_k: split has no cases");
  }
  int hits = 0;
  for (const auto& tc : split.cases) {
    if (static_cast<int>(tc.candidates.size()) < k) {
      throw std::invalid_argument(
          "hit_ratio_at_k: case for user " + std::to_string(tc.user) +
          " has fewer than k candidates");
    }
    auto zu = user_rep(model, tc.user);
    std::vector<double> scores;
    scores.reserve(tc.candidates.size());
    std::size_t pos = tc.candidates.size();
    for (std::size_t c = 0; c < tc.candidates.size(); ++c) {
      if (tc.candidates[c] == tc.held_out) pos = c;
      scores.push_back(
          predict_score(zu, item_rep(model, tc.candidates[c]), mapping));
    }
    if (pos == tc.candidates.size()) {
      throw std::invalid_argument(
          "hit_ratio_at_k: candidates are missing the held-out item");
    }
    if (detail::rank_of(scores, pos) < k) ++hits;
  }
  MetricResult res;
  res.metric = "hr";
  res.k = k;
  res.num_cases = static_cast<int>(split.cases.size());
  res.value = static_cast<double>(hits) / res.num_cases;
  res.seed = split.seed;
  return res;
}

/// Mean per-item recall of the top K candidate users for each cold item.
/// The cold item is scored from its side features through the model's
/// feature encoder; users use their table row or the mean of their training
/// items. Cases with no truth users are excluded (nothing to recall);
/// candidate users with no training history score zero under kAggregate.
inline MetricResult recall_at_k(const EmbeddingModel& model,
                                const ColdSplit& split,
                                const RowMatrix& item_features, int k,
                                Mapping mapping,
                                ColdUserRep user_rep_mode = ColdUserRep::kAggregate) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (split.cases.empty()) {
    throw std::invalid_argument("recall_at_k: split has no cases");
  }
  if (!model.feature_encoder) {
    throw std::invalid_argument(
        "recall_at_k: model has no feature encoder for cold items");
  }
  if (item_features.rows() != split.train.num_items()) {
    throw std::invalid_argument("recall_at_k: feature row count mismatch");
  }
  MetricResult res;
  res.metric = "recall";
  res.k = k;
  res.seed = split.seed;
  double acc = 0.0;
  for (const auto& tc : split.cases) {
    if (tc.truth_users.empty()) {
      ++res.num_excluded;
      continue;
    }
    if (static_cast<int>(tc.candidate_users.size()) < k) {
      throw std::invalid_argument(
          "recall_at_k: case for item " + std::to_string(tc.item) +
          " has fewer than k candidate users");
    }
    RowVec zi = encode_item_features(
        *model.feature_encoder,
        item_features.row(tc.item).transpose());
    std::vector<double> scores;
    scores.reserve(tc.candidate_users.size());
    for (int u : tc.candidate_users) {
      RowVec zu;
      if (user_rep_mode == ColdUserRep::kTable) {
        zu = user_rep(model, u);
      } else {
        const auto& history = split.train.user_items(u);
        if (history.empty()) {
          scores.push_back(0.0);
          continue;
        }
        zu = aggregate_user_rep(model, history);
      }
      scores.push_back(predict_score(zu, zi, mapping));
    }
    // Top K candidate indices under (score desc, index asc).
    std::vector<std::size_t> order(scores.size());
    for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
    std::partial_sort(order.begin(),
                      order.begin() + std::min<std::size_t>(
                                          static_cast<std::size_t>(k),
                                          order.size()),
                      order.end(), [&](std::size_t a, std::size_t b) {
                        if (scores[a] != scores[b]) {
                          return scores[a] > scores[b];
                        }
                        return a < b;
                      });
    std::unordered_set<int> truth(tc.truth_users.begin(),
                                  tc.truth_users.end());
    int found = 0;
    for (int t = 0; t < k; ++t) {
      if (truth.count(
              tc.candidate_users[order[static_cast<std::size_t>(t)]])) {
        ++found;
      }
    }
    acc += static_cast<double>(found) /
           static_cast<double>(tc.truth_users.size());
    ++res.num_cases;
  }
  if (res.num_cases == 0) {
    throw std::invalid_argument("recall_at_k: every case lacked truth users");
  }
  res.value = acc / res.num_cases;
  return res;
}

/// Evaluation protocol: which splits to score and at which cutoffs.
struct EvalProtocol {
  const WarmSplit* warm = nullptr;
  std::vector<int> warm_ks;
  const ColdSplit* cold = nullptr;
  const RowMatrix* cold_features = nullptr;
  std::vector<int> cold_ks;
  Mapping mapping = Mapping::kDot;
  ColdUserRep cold_user_rep = ColdUserRep::kAggregate;
};

/// Scores a trained model under every requested metric and cutoff.
inline std::vector<MetricResult> evaluate_run(const EmbeddingModel& model,
                                              const EvalProtocol& protocol) {
  if (!protocol.warm && !protocol.cold) {
    throw std::invalid_argument("evaluate_run: nothing to evaluate");
  }
  std::vector<MetricResult> out;
  if (protocol.warm) {
    for (int k : protocol.warm_ks) {
      out.push_back(hit_ratio_at_k(model, *protocol.warm, k, protocol.mapping));
    }
  }
  if (protocol.cold) {
    if (!protocol.cold_features) {
      throw std::invalid_argument("evaluate_run: cold split without features");
    }
    for (int k : protocol.cold_ks) {
      out.push_back(recall_at_k(model, *protocol.cold, *protocol.cold_features,
                                k, protocol.mapping, protocol.cold_user_rep));
    }
  }
  return out;
}

}  // namespace simpdo
