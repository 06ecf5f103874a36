#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "simpdo/detail/text.hpp"
#include "simpdo/random.hpp"

namespace simpdo {

/// Implicit-feedback interactions between users and items. Only observed
/// (similar) pairs are stored; everything absent is unobserved, never
/// negative. Indices are dense and assigned by first appearance, so a
/// dataset saved and reloaded in the same format reproduces identical
/// index assignments.
class InteractionDataset {
 public:
  int num_users() const { return static_cast<int>(user_ids_.size()); }
  int num_items() const { return static_cast<int>(item_ids_.size()); }
  std::size_t num_pairs() const { return pairs_.size(); }

  /// Observed pairs in insertion order, duplicate-free.
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }

  /// Items interacted with by user `j`, ascending. Valid after finalize().
  const std::vector<int>& user_items(int j) const {
    check_user(j);
    return user_items_[static_cast<std::size_t>(j)];
  }

  /// Users that interacted with item `k`, ascending. Valid after finalize().
  const std::vector<int>& item_users(int k) const {
    check_item(k);
    return item_users_[static_cast<std::size_t>(k)];
  }

  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }

  const std::string& user_id(int j) const {
    check_user(j);
    return user_ids_[static_cast<std::size_t>(j)];
  }
  const std::string& item_id(int k) const {
    check_item(k);
    return item_ids_[static_cast<std::size_t>(k)];
  }

  /// Index for an external user id, or -1 if unknown.
  int user_index(const std::string& id) const {
    auto it = user_index_.find(id);
    return it == user_index_.end() ? -1 : it->second;
  }
  int item_index(const std::string& id) const {
    auto it = item_index_.find(id);
    return it == item_index_.end() ? -1 : it->second;
  }

  /// Fraction of the user-item grid that is unobserved.
  double sparsity() const {
    if (num_users() == 0 || num_items() == 0) return 1.0;
    double cells = static_cast<double>(num_users()) * num_items();
    return 1.0 - static_cast<double>(pairs_.size()) / cells;
  }

  /// True when (j, k) is an observed pair. Valid after finalize().
  bool has_pair(int j, int k) const {
    check_user(j);
    check_item(k);
    const auto& items = user_items_[static_cast<std::size_t>(j)];
    return std::binary_search(items.begin(), items.end(), k);
  }

  int add_user(const std::string& id) {
    auto it = user_index_.find(id);
    if (it != user_index_.end()) return it->second;
    int j = num_users();
    user_index_.emplace(id, j);
    user_ids_.push_back(id);
    user_items_.emplace_back();
    return j;
  }

  int add_item(const std::string& id) {
    auto it = item_index_.find(id);
    if (it != item_index_.end()) return it->second;
    int k = num_items();
    item_index_.emplace(id, k);
    item_ids_.push_back(id);
    item_users_.emplace_back();
    return k;
  }

  /// Records pair (j, k) unless already present. Only usable while building;
  /// finalize() freezes the pair set.
  bool add_pair(int j, int k) {
    check_user(j);
    check_item(k);
    if (finalized_) {
      throw std::logic_error("InteractionDataset: add_pair after finalize");
    }
    std::uint64_t key =
        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(j)) << 32) |
        static_cast<std::uint32_t>(k);
    if (!seen_.insert(key).second) return false;
    pairs_.emplace_back(j, k);
    user_items_[static_cast<std::size_t>(j)].push_back(k);
    item_users_[static_cast<std::size_t>(k)].push_back(j);
    return true;
  }

  /// Sorts adjacency lists and releases build-time state.
  void finalize() {
    for (auto& v : user_items_) std::sort(v.begin(), v.end());
    for (auto& v : item_users_) std::sort(v.begin(), v.end());
    seen_.clear();
    std::unordered_set<std::uint64_t>().swap(seen_);
    finalized_ = true;
  }

  /// Copy of the id maps with no pairs, for building filtered variants that
  /// keep index assignments (and therefore embedding rows) aligned.
  InteractionDataset clone_without_pairs() const {
    InteractionDataset out;
    out.user_ids_ = user_ids_;
    out.item_ids_ = item_ids_;
    out.user_index_ = user_index_;
    out.item_index_ = item_index_;
    out.user_items_.resize(user_ids_.size());
    out.item_users_.resize(item_ids_.size());
    return out;
  }

  friend bool operator==(const InteractionDataset& a,
                         const InteractionDataset& b) {
    return a.user_ids_ == b.user_ids_ && a.item_ids_ == b.item_ids_ &&
           a.pairs_ == b.pairs_;
  }

 private:
  void check_user(int j) const {
    if (j < 0 || j >= num_users()) {
      throw std::invalid_argument("InteractionDataset: user index " +
                                  std::to_string(j) + " out of range");
    }
  }
  void check_item(int k) const {
    if (k < 0 || k >= num_items()) {
      throw std::invalid_argument("InteractionDataset: item index " +
                                  std::to_string(k) + " out of range");
    }
  }

  std::vector<std::pair<int, int>> pairs_;
  std::vector<std::vector<int>> user_items_;
  std::vector<std::vector<int>> item_users_;
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::unordered_map<std::string, int> user_index_;
  std::unordered_map<std::string, int> item_index_;
  std::unordered_set<std::uint64_t> seen_;
  bool finalized_ = false;
};

enum class PairFormat { kPairList, kMatrixRows, kJson };

inline PairFormat parse_pair_format(const std::string& name) {
  if (name == "pairs") return PairFormat::kPairList;
  if (name == "rows") return PairFormat::kMatrixRows;
  if (name == "json") return PairFormat::kJson;
  throw std::invalid_argument("unknown interaction format '" + name +
                              "' (expected pairs, rows or json)");
}

namespace detail {

inline void load_pair_list(std::istream& in, const std::string& path,
                           InteractionDataset& ds) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = strip_comment_and_trim(line);
    if (s.empty()) continue;
    auto toks = split_ws(s);
    if (toks.size() < 2) {
      parse_fail(path, lineno, "expected 'user item', got '" + s + "'");
    }
    // Extra columns (ratings, timestamps) are ignored; only the pair counts.
    int j = ds.add_user(toks[0]);
    int k = ds.add_item(toks[1]);
    ds.add_pair(j, k);
  }
}

inline void load_matrix_rows(std::istream& in, const std::string& path,
                             InteractionDataset& ds) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = strip_comment_and_trim(line);
    if (s.empty()) continue;
    auto colon = s.find(':');
    if (colon == std::string::npos) {
      parse_fail(path, lineno, "expected 'user: item,item,...', got '" + s + "'");
    }
    std::string user = strip_comment_and_trim(s.substr(0, colon));
    if (user.empty()) parse_fail(path, lineno, "empty user id");
    int j = ds.add_user(user);
    std::string rest = s.substr(colon + 1);
    std::istringstream items(rest);
    std::string item;
    while (std::getline(items, item, ',')) {
      item = strip_comment_and_trim(item);
      if (item.empty()) {
        parse_fail(path, lineno, "empty item id in list '" + rest + "'");
      }
      ds.add_pair(j, ds.add_item(item));
    }
  }
}

inline void load_json_dataset(std::istream& in, const std::string& path,
                              InteractionDataset& ds) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("users") || !doc.contains("items") ||
      !doc.contains("pairs")) {
    throw std::runtime_error(path +
                             ": expected object with users, items, pairs");
  }
  for (const auto& u : doc.at("users")) ds.add_user(u.get<std::string>());
  for (const auto& i : doc.at("items")) ds.add_item(i.get<std::string>());
  for (const auto& p : doc.at("pairs")) {
    if (!p.is_array() || p.size() != 2) {
      throw std::runtime_error(path + ": pair entries must be [user, item]");
    }
    int j = p[0].get<int>();
    int k = p[1].get<int>();
    ds.add_pair(j, k);
  }
}

}  // namespace detail

/// Loads interactions from `path`. Supported layouts:
///  - pairs: one "user item" per line, '#' comments, extra columns ignored
///  - rows:  one "user: item,item,..." per line
///  - json:  {"users": [...], "items": [...], "pairs": [[j, k], ...]}
/// Duplicate pairs collapse to one. Empty datasets and malformed lines are
/// errors (malformed lines report file and line number).
inline InteractionDataset load_interactions(const std::string& path,
                                            PairFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interactions file: " + path);
  InteractionDataset ds;
  switch (format) {
    case PairFormat::kPairList:
      detail::load_pair_list(in, path, ds);
      break;
    case PairFormat::kMatrixRows:
      detail::load_matrix_rows(in, path, ds);
      break;
    case PairFormat::kJson:
      detail::load_json_dataset(in, path, ds);
      break;
  }
  if (ds.num_pairs() == 0) {
    throw std::runtime_error(path + ": no interactions found");
  }
  ds.finalize();
  return ds;
}

/// Writes interactions so that load_interactions() reproduces the dataset
/// exactly, including index assignments.
inline void save_interactions(const InteractionDataset& ds,
                              const std::string& path, PairFormat format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write interactions file: " + path);
  switch (format) {
    case PairFormat::kPairList:
      for (const auto& [j, k] : ds.pairs()) {
        out << ds.user_id(j) << ' ' << ds.item_id(k) << '\n';
      }
      break;
    case PairFormat::kMatrixRows: {
      // Row format groups by user, so it preserves indices only when pairs
      // arrive user-grouped; the JSON format is the lossless general one.
      for (int j = 0; j < ds.num_users(); ++j) {
        const auto& items = ds.user_items(j);
        if (items.empty()) continue;
        out << ds.user_id(j) << ": ";
        for (std::size_t t = 0; t < items.size(); ++t) {
          if (t > 0) out << ',';
          out << ds.item_id(items[t]);
        }
        out << '\n';
      }
      break;
    }
    case PairFormat::kJson: {
      nlohmann::ordered_json doc;
      doc["format"] = "simpdo-dataset";
      doc["version"] = 1;
      doc["users"] = ds.user_ids();
      doc["items"] = ds.item_ids();
      auto& pairs = doc["pairs"] = nlohmann::ordered_json::array();
      for (const auto& [j, k] : ds.pairs()) {
        pairs.push_back({j, k});
      }
      out << doc.dump(1, '\t') << '\n';
      break;
    }
  }
  if (!out) throw std::runtime_error("failed writing: " + path);
}

namespace detail {

/// Uniform sample of `count` distinct values from [0, n) excluding
/// `excluded` (sorted, duplicate-free). Draw order is returned; the caller's
/// rng stream fully determines the result.
inline std::vector<int> sample_complement(int n,
                                          const std::vector<int>& excluded,
                                          int count, Rng& rng) {
  if (count < 0) throw std::invalid_argument("sample count must be >= 0");
  const int pool = n - static_cast<int>(excluded.size());
  if (count > pool) {
    throw std::invalid_argument(
        "cannot sample " + std::to_string(count) + " distinct values from " +
        std::to_string(pool) + " unobserved candidates");
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(count));
  if (count == 0) return out;
  if (3 * count >= pool) {
    // Dense case: materialize the complement, partial Fisher-Yates.
    std::vector<int> comp;
    comp.reserve(static_cast<std::size_t>(pool));
    std::size_t e = 0;
    for (int v = 0; v < n; ++v) {
      if (e < excluded.size() && excluded[e] == v) {
        ++e;
        continue;
      }
      comp.push_back(v);
    }
    for (int t = 0; t < count; ++t) {
      std::size_t j = static_cast<std::size_t>(t) +
                      static_cast<std::size_t>(uniform_index(
                          rng, static_cast<std::uint64_t>(pool - t)));
      std::swap(comp[static_cast<std::size_t>(t)], comp[j]);
      out.push_back(comp[static_cast<std::size_t>(t)]);
    }
    return out;
  }
  // Sparse case: rejection against the exclusion list and prior draws.
  std::unordered_set<int> chosen;
  chosen.reserve(static_cast<std::size_t>(count) * 2);
  while (static_cast<int>(out.size()) < count) {
    int v = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    if (std::binary_search(excluded.begin(), excluded.end(), v)) continue;
    if (!chosen.insert(v).second) continue;
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

/// `count` distinct items the user has not interacted with, uniform over
/// that complement. Errors if fewer than `count` such items exist.
inline std::vector<int> sample_unobserved_items(const InteractionDataset& ds,
                                                int user, int count,
                                                Rng& rng) {
  return detail::sample_complement(ds.num_items(), ds.user_items(user), count,
                                   rng);
}

/// `count` distinct users that have not interacted with the item.
inline std::vector<int> sample_unobserved_users(const InteractionDataset& ds,
                                                int item, int count,
                                                Rng& rng) {
  return detail::sample_complement(ds.num_users(), ds.item_users(item), count,
                                   rng);
}

/// One ranking case: score `candidates`, check whether `held_out` lands in
/// the top K. `candidates` contains the held-out item exactly once.
struct WarmTestCase {
  int user = -1;
  int held_out = -1;
  std::vector<int> candidates;
};

/// Leave-one-out protocol: per eligible user, one held-out item plus sampled
/// unobserved distractors. `train` shares index assignments with the source
/// dataset, minus the held-out pairs.
struct WarmSplit {
  InteractionDataset train;
  std::vector<WarmTestCase> cases;
  std::uint64_t seed = 0;
  int candidates_per_case = 0;
};

/// Builds a leave-one-out split. Users with fewer than two interactions keep
/// all their pairs in `train` and get no test case. Each case holds
/// `candidates_per_case` unobserved items plus the held-out one. When
/// `item_components`/`user_components` are given (from a synthetic universe),
/// distractors are restricted to the user's own component.
inline WarmSplit leave_one_out_split(
    const InteractionDataset& ds, int candidates_per_case, std::uint64_t seed,
    const std::vector<int>* item_components = nullptr,
    const std::vector<int>* user_components = nullptr) {
  if (candidates_per_case < 1) {
    throw std::invalid_argument("candidates_per_case must be >= 1");
  }
  if ((item_components == nullptr) != (user_components == nullptr)) {
    throw std::invalid_argument(
        "component restriction needs both item and user labels");
  }
  if (item_components &&
      (static_cast<int>(item_components->size()) != ds.num_items() ||
       static_cast<int>(user_components->size()) != ds.num_users())) {
    throw std::invalid_argument("component label size mismatch");
  }
  Rng rng(seed);
  WarmSplit split;
  split.seed = seed;
  split.candidates_per_case = candidates_per_case;
  std::vector<int> held(static_cast<std::size_t>(ds.num_users()), -1);
  for (int j = 0; j < ds.num_users(); ++j) {
    const auto& items = ds.user_items(j);
    if (items.size() < 2) continue;
    int held_out = items[static_cast<std::size_t>(
        uniform_index(rng, static_cast<std::uint64_t>(items.size())))];
    WarmTestCase tc;
    tc.user = j;
    tc.held_out = held_out;
    if (item_components) {
      // Restrict the pool to unobserved items in the user's component.
      int comp = (*user_components)[static_cast<std::size_t>(j)];
      std::vector<int> pool;
      for (int k = 0; k < ds.num_items(); ++k) {
        if ((*item_components)[static_cast<std::size_t>(k)] != comp) continue;
        if (std::binary_search(items.begin(), items.end(), k)) continue;
        pool.push_back(k);
      }
      if (static_cast<int>(pool.size()) < candidates_per_case) {
        throw std::invalid_argument(
            "user " + ds.user_id(j) + ": component has only " +
            std::to_string(pool.size()) + " unobserved items, need " +
            std::to_string(candidates_per_case));
      }
      for (int t = 0; t < candidates_per_case; ++t) {
        std::size_t r = static_cast<std::size_t>(t) +
                        static_cast<std::size_t>(uniform_index(
                            rng, static_cast<std::uint64_t>(pool.size()) -
                                     static_cast<std::uint64_t>(t)));
        std::swap(pool[static_cast<std::size_t>(t)], pool[r]);
        tc.candidates.push_back(pool[static_cast<std::size_t>(t)]);
      }
    } else {
      tc.candidates = sample_unobserved_items(ds, j, candidates_per_case, rng);
    }
    tc.candidates.push_back(held_out);
    held[static_cast<std::size_t>(j)] = held_out;
    split.cases.push_back(std::move(tc));
  }
  split.train = ds.clone_without_pairs();
  for (const auto& [j, k] : ds.pairs()) {
    if (held[static_cast<std::size_t>(j)] == k) continue;
    split.train.add_pair(j, k);
  }
  split.train.finalize();
  return split;
}

/// One cold-start case: rank `candidate_users` for an unseen item and count
/// how many of `truth_users` appear in the top K.
struct ColdTestCase {
  int item = -1;
  std::vector<int> truth_users;
  std::vector<int> candidate_users;
};

/// Cold-start protocol: the chosen items lose every interaction in `train`
/// and are scored purely from side features at evaluation time.
struct ColdSplit {
  InteractionDataset train;
  std::vector<int> cold_items;
  std::vector<ColdTestCase> cases;
  std::uint64_t seed = 0;
  int sampled_non_interactors = 0;
};

/// Uniform sample of `count` distinct items to treat as cold.
inline std::vector<int> sample_cold_items(const InteractionDataset& ds,
                                          int count, std::uint64_t seed) {
  if (count < 1 || count > ds.num_items()) {
    throw std::invalid_argument("cold item count out of range");
  }
  Rng rng(seed);
  return detail::sample_complement(ds.num_items(), {}, count, rng);
}

/// Removes all pairs touching `cold_items` from training and builds one test
/// case per cold item: candidates are its true users plus up to
/// `sampled_non_interactors` users that never interacted with it.
inline ColdSplit build_cold_split(const InteractionDataset& ds,
                                  const std::vector<int>& cold_items,
                                  int sampled_non_interactors,
                                  std::uint64_t seed) {
  if (cold_items.empty()) {
    throw std::invalid_argument("cold split needs at least one cold item");
  }
  if (sampled_non_interactors < 0) {
    throw std::invalid_argument("sampled_non_interactors must be >= 0");
  }
  std::unordered_set<int> cold(cold_items.begin(), cold_items.end());
  if (cold.size() != cold_items.size()) {
    throw std::invalid_argument("duplicate cold item");
  }
  Rng rng(seed);
  ColdSplit split;
  split.seed = seed;
  split.sampled_non_interactors = sampled_non_interactors;
  split.cold_items = cold_items;
  for (int k : cold_items) {
    ColdTestCase tc;
    tc.item = k;
    tc.truth_users = ds.item_users(k);
    int pool = ds.num_users() - static_cast<int>(tc.truth_users.size());
    int want = std::min(sampled_non_interactors, pool);
    tc.candidate_users = tc.truth_users;
    auto sampled = detail::sample_complement(ds.num_users(), tc.truth_users,
                                             want, rng);
    tc.candidate_users.insert(tc.candidate_users.end(), sampled.begin(),
                              sampled.end());
    split.cases.push_back(std::move(tc));
  }
  split.train = ds.clone_without_pairs();
  for (const auto& [j, k] : ds.pairs()) {
    if (cold.count(k)) continue;
    split.train.add_pair(j, k);
  }
  split.train.finalize();
  return split;
}

/// Mini-batch of similar pairs with the deduplicated row sets that form the
/// stacked representation block. `unique_users`/`unique_items` are ascending.
struct Batch {
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> unique_users;
  std::vector<int> unique_items;
};

/// Shuffles all observed pairs and cuts them into batches of `batch_size`
/// (the last one may be short). Every pair appears in exactly one batch.
inline std::vector<Batch> make_batches(const InteractionDataset& ds,
                                       int batch_size, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (ds.num_pairs() == 0) {
    throw std::invalid_argument("cannot batch an empty dataset");
  }
  std::vector<std::pair<int, int>> order = ds.pairs();
  shuffle(order, rng);
  std::vector<Batch> batches;
  const std::size_t bs = static_cast<std::size_t>(batch_size);
  batches.reserve((order.size() + bs - 1) / bs);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    Batch b;
    std::size_t end = std::min(order.size(), start + bs);
    b.pairs.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(end));
    for (const auto& [j, k] : b.pairs) {
      b.unique_users.push_back(j);
      b.unique_items.push_back(k);
    }
    auto dedup = [](std::vector<int>& v) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    dedup(b.unique_users);
    dedup(b.unique_items);
    batches.push_back(std::move(b));
  }
  return batches;
}

/// Synthetic universe of disjoint bipartite components plus the ground-truth
/// component label of every user and item.
struct SyntheticDataset {
  InteractionDataset data;
  std::vector<int> user_components;
  std::vector<int> item_components;
  int num_components = 0;
};

/// Generates `num_components` disjoint bipartite blocks. Within a block each
/// of the users_per x items_per edges is kept with probability edge_prob;
/// blocks are resampled until connected (every user and item reachable from
/// every other), so no cross-component similarity exists and each component
/// is internally one similarity cluster.
inline SyntheticDataset gen_synthetic_components(int num_components,
                                                 int users_per, int items_per,
                                                 double edge_prob,
                                                 std::uint64_t seed) {
  if (num_components < 1) {
    throw std::invalid_argument("num_components must be >= 1");
  }
  if (users_per < 1 || items_per < 1) {
    throw std::invalid_argument("component sizes must be >= 1");
  }
  if (!(edge_prob > 0.0) || edge_prob > 1.0) {
    throw std::invalid_argument("edge_prob must be in (0, 1]");
  }
  constexpr int kMaxAttempts = 1000;
  Rng rng(seed);
  SyntheticDataset syn;
  syn.num_components = num_components;
  for (int c = 0; c < num_components; ++c) {
    for (int u = 0; u < users_per; ++u) {
      syn.data.add_user("u" + std::to_string(c * users_per + u));
      syn.user_components.push_back(c);
    }
    for (int i = 0; i < items_per; ++i) {
      syn.data.add_item("i" + std::to_string(c * items_per + i));
      syn.item_components.push_back(c);
    }
  }
  for (int c = 0; c < num_components; ++c) {
    const int ubase = c * users_per;
    const int ibase = c * items_per;
    std::vector<std::pair<int, int>> edges;
    bool connected = false;
    for (int attempt = 0; attempt < kMaxAttempts && !connected; ++attempt) {
      edges.clear();
      for (int u = 0; u < users_per; ++u) {
        for (int i = 0; i < items_per; ++i) {
          if (uniform01(rng) < edge_prob) edges.emplace_back(u, i);
        }
      }
      if (edges.empty()) continue;
      // BFS over the bipartite block; nodes 0..users_per-1 are users,
      // users_per..users_per+items_per-1 are items.
      std::vector<std::vector<int>> adj(
          static_cast<std::size_t>(users_per + items_per));
      for (const auto& [u, i] : edges) {
        adj[static_cast<std::size_t>(u)].push_back(users_per + i);
        adj[static_cast<std::size_t>(users_per + i)].push_back(u);
      }
      std::vector<char> vis(adj.size(), 0);
      std::vector<int> queue{0};
      vis[0] = 1;
      std::size_t reached = 1;
      while (!queue.empty()) {
        int v = queue.back();
        queue.pop_back();
        for (int w : adj[static_cast<std::size_t>(v)]) {
          if (!vis[static_cast<std::size_t>(w)]) {
            vis[static_cast<std::size_t>(w)] = 1;
            ++reached;
            queue.push_back(w);
          }
        }
      }
      connected = reached == adj.size();
    }
    if (!connected) {
      throw std::runtime_error(
          "component " + std::to_string(c) + " not connected after " +
          std::to_string(kMaxAttempts) +
          " attempts; raise edge_prob or component sizes");
    }
    for (const auto& [u, i] : edges) {
      syn.data.add_pair(ubase + u, ibase + i);
    }
  }
  syn.data.finalize();
  return syn;
}

/// Serializes a warm split (cases and seed only; `train` is reconstructed
/// from the source dataset on load).
inline void save_warm_split(const WarmSplit& split, const std::string& path) {
  nlohmann::ordered_json doc;
  doc["format"] = "simpdo-warm-split";
  doc["version"] = 1;
  doc["seed"] = split.seed;
  doc["candidates_per_case"] = split.candidates_per_case;
  doc["num_users"] = split.train.num_users();
  doc["num_items"] = split.train.num_items();
  auto& cases = doc["cases"] = nlohmann::ordered_json::array();
  for (const auto& tc : split.cases) {
    cases.push_back({{"user", tc.user},
                     {"held_out", tc.held_out},
                     {"candidates", tc.candidates}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split file: " + path);
  out << doc.dump(1, '\t') << '\n';
}

inline WarmSplit load_warm_split(const InteractionDataset& ds,
                                 const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }
  if (doc.value("format", "") != "simpdo-warm-split") {
    throw std::runtime_error(path + ": not a warm split file");
  }
  if (doc.value("num_users", -1) != ds.num_users() ||
      doc.value("num_items", -1) != ds.num_items()) {
    throw std::runtime_error(path + ": split does not match this dataset");
  }
  WarmSplit split;
  split.seed = doc.value("seed", std::uint64_t{0});
  split.candidates_per_case = doc.value("candidates_per_case", 0);
  std::vector<int> held(static_cast<std::size_t>(ds.num_users()), -1);
  for (const auto& c : doc.at("cases")) {
    WarmTestCase tc;
    tc.user = c.at("user").get<int>();
    tc.held_out = c.at("held_out").get<int>();
    tc.candidates = c.at("candidates").get<std::vector<int>>();
    if (tc.user < 0 || tc.user >= ds.num_users() || tc.held_out < 0 ||
        tc.held_out >= ds.num_items()) {
      throw std::runtime_error(path + ": case index out of range");
    }
    held[static_cast<std::size_t>(tc.user)] = tc.held_out;
    split.cases.push_back(std::move(tc));
  }
  split.train = ds.clone_without_pairs();
  for (const auto& [j, k] : ds.pairs()) {
    if (held[static_cast<std::size_t>(j)] == k) continue;
    split.train.add_pair(j, k);
  }
  split.train.finalize();
  return split;
}

inline void save_cold_split(const ColdSplit& split, const std::string& path) {
  nlohmann::ordered_json doc;
  doc["format"] = "simpdo-cold-split";
  doc["version"] = 1;
  doc["seed"] = split.seed;
  doc["sampled_non_interactors"] = split.sampled_non_interactors;
  doc["num_users"] = split.train.num_users();
  doc["num_items"] = split.train.num_items();
  doc["cold_items"] = split.cold_items;
  auto& cases = doc["cases"] = nlohmann::ordered_json::array();
  for (const auto& tc : split.cases) {
    cases.push_back({{"item", tc.item},
                     {"truth_users", tc.truth_users},
                     {"candidate_users", tc.candidate_users}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split file: " + path);
  out << doc.dump(1, '\t') << '\n';
}

inline ColdSplit load_cold_split(const InteractionDataset& ds,
                                 const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }
  if (doc.value("format", "") != "simpdo-cold-split") {
    throw std::runtime_error(path + ": not a cold split file");
  }
  if (doc.value("num_users", -1) != ds.num_users() ||
      doc.value("num_items", -1) != ds.num_items()) {
    throw std::runtime_error(path + ": split does not match this dataset");
  }
  ColdSplit split;
  split.seed = doc.value("seed", std::uint64_t{0});
  split.sampled_non_interactors = doc.value("sampled_non_interactors", 0);
  split.cold_items = doc.at("cold_items").get<std::vector<int>>();
  std::unordered_set<int> cold(split.cold_items.begin(),
                               split.cold_items.end());
  for (const auto& c : doc.at("cases")) {
    ColdTestCase tc;
    tc.item = c.at("item").get<int>();
    tc.truth_users = c.at("truth_users").get<std::vector<int>>();
    tc.candidate_users = c.at("candidate_users").get<std::vector<int>>();
    if (tc.item < 0 || tc.item >= ds.num_items()) {
      throw std::runtime_error(path + ": case index out of range");
    }
    split.cases.push_back(std::move(tc));
  }
  split.train = ds.clone_without_pairs();
  for (const auto& [j, k] : ds.pairs()) {
    if (cold.count(k)) continue;
    split.train.add_pair(j, k);
  }
  split.train.finalize();
  return split;
}

/// Loads a pre-sampled evaluation protocol stored as two aligned files:
/// `rating_path` holds one "user item ..." test pair per line and
/// `negative_path` holds "(user,item)\tneg1\tneg2..." with the same line
/// order. Ids are resolved through the training dataset's maps; unknown ids
/// are errors. `train` is the dataset as given (the held-out pairs are
/// already absent from it in this layout).
inline WarmSplit load_paired_negative_split(const InteractionDataset& ds,
                                            const std::string& rating_path,
                                            const std::string& negative_path) {
  std::ifstream ratings(rating_path);
  if (!ratings) {
    throw std::runtime_error("cannot open ratings file: " + rating_path);
  }
  std::ifstream negatives(negative_path);
  if (!negatives) {
    throw std::runtime_error("cannot open negatives file: " + negative_path);
  }
  WarmSplit split;
  split.train = ds;
  std::string rline, nline;
  std::size_t lineno = 0;
  while (std::getline(ratings, rline)) {
    ++lineno;
    if (!std::getline(negatives, nline)) {
      detail::parse_fail(negative_path, lineno, "fewer lines than ratings");
    }
    std::string rs = detail::strip_comment_and_trim(rline);
    if (rs.empty()) continue;
    auto rtoks = detail::split_ws(rs);
    if (rtoks.size() < 2) {
      detail::parse_fail(rating_path, lineno, "expected 'user item ...'");
    }
    WarmTestCase tc;
    tc.user = ds.user_index(rtoks[0]);
    tc.held_out = ds.item_index(rtoks[1]);
    if (tc.user < 0) {
      detail::parse_fail(rating_path, lineno, "unknown user '" + rtoks[0] + "'");
    }
    if (tc.held_out < 0) {
      detail::parse_fail(rating_path, lineno, "unknown item '" + rtoks[1] + "'");
    }
    auto ntoks = detail::split_ws(detail::strip_comment_and_trim(nline));
    if (ntoks.empty()) {
      detail::parse_fail(negative_path, lineno, "empty negatives line");
    }
    for (std::size_t t = 1; t < ntoks.size(); ++t) {
      int k = ds.item_index(ntoks[t]);
      if (k < 0) {
        detail::parse_fail(negative_path, lineno,
                           "unknown item '" + ntoks[t] + "'");
      }
      tc.candidates.push_back(k);
    }
    tc.candidates.push_back(tc.held_out);
    split.cases.push_back(std::move(tc));
  }
  if (!split.cases.empty()) {
    split.candidates_per_case =
        static_cast<int>(split.cases.front().candidates.size()) - 1;
  }
  return split;
}

}  // namespace simpdo
