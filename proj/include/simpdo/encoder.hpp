#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "simpdo/detail/text.hpp"
#include "simpdo/random.hpp"

namespace simpdo {

using Matrix = Eigen::MatrixXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

enum class Mapping { kDot, kCosine };

inline Mapping parse_mapping(const std::string& name) {
  if (name == "dot") return Mapping::kDot;
  if (name == "cosine") return Mapping::kCosine;
  throw std::invalid_argument("unknown mapping '" + name +
                              "' (expected dot or cosine)");
}

/// Linear map from item side features to the representation space:
/// encode(x) = W' x + b. Trained after the fact against learned item rows,
/// so unseen items with features can be placed in the same space.
struct FeatureEncoder {
  Matrix weight;  // feature_dim x dim
  RowVec bias;    // dim

  int feature_dim() const { return static_cast<int>(weight.rows()); }
  int dim() const { return static_cast<int>(weight.cols()); }
};

/// Free embeddings, one row per user and item, plus an optional feature
/// encoder for cold items.
struct EmbeddingModel {
  RowMatrix users;  // num_users x dim
  RowMatrix items;  // num_items x dim
  std::optional<FeatureEncoder> feature_encoder;

  int num_users() const { return static_cast<int>(users.rows()); }
  int num_items() const { return static_cast<int>(items.rows()); }
  int dim() const { return static_cast<int>(users.cols()); }
  bool all_finite() const {
    return users.allFinite() && items.allFinite() &&
           (!feature_encoder || (feature_encoder->weight.allFinite() &&
                                 feature_encoder->bias.allFinite()));
  }
};

/// Fresh model with entries i.i.d. uniform in [-init_scale, init_scale].
/// Users fill first, then items, so the same seed always yields the same
/// tables for fixed shapes.
inline EmbeddingModel init_model(int num_users, int num_items, int dim,
                                 double init_scale, std::uint64_t seed) {
  if (num_users < 1 || num_items < 1) {
    throw std::invalid_argument("model needs at least one user and item");
  }
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (!(init_scale > 0.0) || !std::isfinite(init_scale)) {
    throw std::invalid_argument("init_scale must be positive and finite");
  }
  Rng rng(seed);
  EmbeddingModel m;
  m.users.resize(num_users, dim);
  m.items.resize(num_items, dim);
  for (int j = 0; j < num_users; ++j) {
    for (int q = 0; q < dim; ++q) {
      m.users(j, q) = uniform_real(rng, -init_scale, init_scale);
    }
  }
  for (int k = 0; k < num_items; ++k) {
    for (int q = 0; q < dim; ++q) {
      m.items(k, q) = uniform_real(rng, -init_scale, init_scale);
    }
  }
  return m;
}

/// Row view of user j's representation.
inline Eigen::Ref<const RowVec> user_rep(const EmbeddingModel& m, int j) {
  if (j < 0 || j >= m.num_users()) {
    throw std::invalid_argument("user index " + std::to_string(j) +
                                " out of range");
  }
  return m.users.row(j);
}

/// Row view of item k's representation.
inline Eigen::Ref<const RowVec> item_rep(const EmbeddingModel& m, int k) {
  if (k < 0 || k >= m.num_items()) {
    throw std::invalid_argument("item index " + std::to_string(k) +
                                " out of range");
  }
  return m.items.row(k);
}

/// History-based user representation: the mean of the item rows the user
/// interacted with. Used when ranking users for a cold item, so users and
/// items live in one space regardless of how the user table drifted.
inline RowVec aggregate_user_rep(const EmbeddingModel& m,
                                 const std::vector<int>& history) {
  if (history.empty()) {
    throw std::invalid_argument(
        "aggregate_user_rep: empty history (caller decides the fallback)");
  }
  RowVec acc = RowVec::Zero(m.dim());
  for (int k : history) {
    acc += item_rep(m, k);
  }
  return acc / static_cast<double>(history.size());
}

/// Places an item with side features into the representation space.
inline RowVec encode_item_features(const FeatureEncoder& enc,
                                   const Vector& features) {
  if (static_cast<int>(features.size()) != enc.feature_dim()) {
    throw std::invalid_argument(
        "feature size " + std::to_string(features.size()) +
        " does not match encoder input " + std::to_string(enc.feature_dim()));
  }
  return (enc.weight.transpose() * features).transpose() + enc.bias;
}

/// Similarity of two representations. Cosine requires both norms nonzero.
template <typename U, typename I>
double predict_score(const U& zu, const I& zi, Mapping mapping) {
  double dot = zu.dot(zi);
  if (mapping == Mapping::kDot) return dot;
  double nu = zu.norm();
  double ni = zi.norm();
  if (nu == 0.0 || ni == 0.0) {
    throw std::invalid_argument("cosine mapping: zero-norm representation");
  }
  return dot / (nu * ni);
}

/// Ridge regression of representation targets onto features, fitted on
/// centered data so the intercept absorbs the means:
///   W = (Xc'Xc + ridge I)^-1 Xc'Tc,  b = mean(T) - mean(X)' W.
inline FeatureEncoder fit_feature_encoder(const RowMatrix& features,
                                          const RowMatrix& targets,
                                          double ridge) {
  if (features.rows() != targets.rows()) {
    throw std::invalid_argument("feature and target row counts differ");
  }
  if (features.rows() < 1) {
    throw std::invalid_argument("feature encoder needs at least one row");
  }
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
    throw std::invalid_argument("ridge must be >= 0 and finite");
  }
  const auto f = features.cols();
  RowVec mean_x = features.colwise().mean();
  RowVec mean_t = targets.colwise().mean();
  Matrix xc = features.rowwise() - mean_x;
  Matrix tc = targets.rowwise() - mean_t;
  Matrix gram = xc.transpose() * xc;
  gram.diagonal().array() += ridge;
  FeatureEncoder enc;
  enc.weight = gram.ldlt().solve(xc.transpose() * tc);
  enc.bias = mean_t - mean_x * enc.weight;
  return enc;
}

/// Dense item feature matrix aligned to dataset item indices. Each line is
/// "item_id v1 v2 ... vf"; every item must appear exactly once with a
/// consistent width. Unknown item ids are errors.
inline RowMatrix load_item_features(const std::string& path, int num_items,
                                    const std::vector<std::string>& item_ids) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file: " + path);
  std::unordered_map<std::string, int> index;
  index.reserve(item_ids.size());
  for (int k = 0; k < num_items; ++k) {
    index.emplace(item_ids[static_cast<std::size_t>(k)], k);
  }
  RowMatrix features;
  std::vector<char> seen(static_cast<std::size_t>(num_items), 0);
  std::string line;
  std::size_t lineno = 0;
  int width = -1;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::strip_comment_and_trim(line);
    if (s.empty()) continue;
    std::istringstream row(s);
    std::string id;
    row >> id;
    auto it = index.find(id);
    if (it == index.end()) {
      detail::parse_fail(path, lineno, "unknown item '" + id + "'");
    }
    std::vector<double> values;
    double v = 0.0;
    while (row >> v) values.push_back(v);
    if (!row.eof()) {
      detail::parse_fail(path, lineno, "non-numeric feature value");
    }
    if (values.empty()) {
      detail::parse_fail(path, lineno, "no feature values for '" + id + "'");
    }
    if (width < 0) {
      width = static_cast<int>(values.size());
      features = RowMatrix::Zero(num_items, width);
    } else if (static_cast<int>(values.size()) != width) {
      detail::parse_fail(path, lineno, "inconsistent feature width");
    }
    if (seen[static_cast<std::size_t>(it->second)]) {
      detail::parse_fail(path, lineno, "duplicate features for '" + id + "'");
    }
    seen[static_cast<std::size_t>(it->second)] = 1;
    for (int q = 0; q < width; ++q) {
      features(it->second, q) = values[static_cast<std::size_t>(q)];
    }
  }
  for (int k = 0; k < num_items; ++k) {
    if (!seen[static_cast<std::size_t>(k)]) {
      throw std::runtime_error(path + ": no features for item '" +
                               item_ids[static_cast<std::size_t>(k)] + "'");
    }
  }
  if (width < 1) throw std::runtime_error(path + ": no feature rows found");
  return features;
}

/// Seed lineage recorded with a checkpoint: the master seed of the run and
/// how many epochs were applied to reach this state.
struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
};

namespace detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint64_t read_u64(std::istream& in, const std::string& path) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error(path + ": truncated checkpoint");
  return v;
}

inline void write_doubles(std::ostream& out, const double* data,
                          std::size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
}

inline void read_doubles(std::istream& in, double* data, std::size_t count,
                         const std::string& path) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error(path + ": truncated checkpoint");
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'D', 'O',
                                             'C', 'K', 'P', '1'};

/// Binary checkpoint: shapes, seed lineage and raw row-major tables. Exact
/// to the bit, so reloading reproduces scores and training continuations.
inline void save_checkpoint(const EmbeddingModel& m, const CheckpointMeta& meta,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_u64(out, static_cast<std::uint64_t>(m.num_users()));
  detail::write_u64(out, static_cast<std::uint64_t>(m.num_items()));
  detail::write_u64(out, static_cast<std::uint64_t>(m.dim()));
  const std::uint64_t f =
      m.feature_encoder
          ? static_cast<std::uint64_t>(m.feature_encoder->feature_dim())
          : 0;
  detail::write_u64(out, f);
  detail::write_u64(out, meta.seed);
  detail::write_u64(out, meta.epoch);
  detail::write_doubles(out, m.users.data(),
                        static_cast<std::size_t>(m.users.size()));
  detail::write_doubles(out, m.items.data(),
                        static_cast<std::size_t>(m.items.size()));
  if (m.feature_encoder) {
    RowMatrix w = m.feature_encoder->weight;  // store row-major
    detail::write_doubles(out, w.data(), static_cast<std::size_t>(w.size()));
    detail::write_doubles(
        out, m.feature_encoder->bias.data(),
        static_cast<std::size_t>(m.feature_encoder->bias.size()));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

inline EmbeddingModel load_checkpoint(const std::string& path,
                                      CheckpointMeta* meta = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error(path + ": not a checkpoint file");
  }
  const auto m = detail::read_u64(in, path);
  const auto n = detail::read_u64(in, path);
  const auto d = detail::read_u64(in, path);
  const auto f = detail::read_u64(in, path);
  CheckpointMeta local;
  local.seed = detail::read_u64(in, path);
  local.epoch = detail::read_u64(in, path);
  if (m == 0 || n == 0 || d == 0) {
    throw std::runtime_error(path + ": invalid checkpoint shape");
  }
  EmbeddingModel model;
  model.users.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  model.items.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  detail::read_doubles(in, model.users.data(),
                       static_cast<std::size_t>(model.users.size()), path);
  detail::read_doubles(in, model.items.data(),
                       static_cast<std::size_t>(model.items.size()), path);
  if (f > 0) {
    RowMatrix w(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(d));
    detail::read_doubles(in, w.data(), static_cast<std::size_t>(w.size()),
                         path);
    FeatureEncoder enc;
    enc.weight = w;
    enc.bias.resize(static_cast<Eigen::Index>(d));
    detail::read_doubles(in, enc.bias.data(),
                         static_cast<std::size_t>(enc.bias.size()), path);
    model.feature_encoder = std::move(enc);
  }
  char extra = 0;
  if (in.read(&extra, 1)) {
    throw std::runtime_error(path + ": trailing bytes in checkpoint");
  }
  if (meta) *meta = local;
  return model;
}

}  // namespace simpdo
