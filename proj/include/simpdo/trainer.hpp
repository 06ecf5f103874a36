#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "simpdo/diagnostics.hpp"
#include "simpdo/objective.hpp"

namespace simpdo {

struct EpochReport {
  int epoch = 0;                     // 1-based
  LossBreakdown mean_loss;           // averaged over the epoch's batches
  double mean_dim_variance = 0.0;    // full stacked tables, end of epoch
  double mean_abs_correlation = 0.0; // 0 when dim < 2
  double d_p = 0.0;
  std::optional<double> val_metric;
};

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 0.5;
  int batch_size = 128;
  int dim = 100;
  double init_scale = 0.1;
  std::uint64_t seed = 1;
  int snapshot_every = 0;  // 0: no periodic snapshots
  ObjectiveConfig objective;

  /// Optional hooks, all called after an epoch completes. epoch_eval may
  /// return nothing on epochs it chooses to skip.
  std::function<std::optional<double>(const EmbeddingModel&, int)> epoch_eval;
  std::function<void(const EmbeddingModel&, int)> snapshot_sink;
  std::function<void(const EpochReport&)> report_sink;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
      throw std::invalid_argument("learning_rate must be positive");
    }
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
    if (snapshot_every < 0) {
      throw std::invalid_argument("snapshot_every must be >= 0");
    }
    objective.validate();
  }
};

struct TrainState {
  EmbeddingModel model;
  int epoch = 0;
  std::vector<EpochReport> history;
  Rng batch_rng;
};

inline TrainState init_train_state(const InteractionDataset& ds,
                                   const TrainConfig& cfg) {
  TrainState state;
  state.model = init_model(ds.num_users(), ds.num_items(), cfg.dim,
                           cfg.init_scale, cfg.seed);
  state.batch_rng.seed(derive_seed(cfg.seed, 1));
  return state;
}

/// One SGD pass over all observed pairs in shuffled mini-batches. Each batch
/// evaluates the full objective once and applies plain SGD row updates to
/// exactly the rows it touched. Ends with a diagnostics sweep over the full
/// stacked tables. Non-finite losses or gradients abort with the batch index
/// rather than training on.
inline EpochReport train_epoch(TrainState& state, const InteractionDataset& ds,
                               const TrainConfig& cfg) {
  if (ds.num_users() != state.model.num_users() ||
      ds.num_items() != state.model.num_items()) {
    throw std::invalid_argument("train_epoch: model does not match dataset");
  }
  auto batches = make_batches(ds, cfg.batch_size, state.batch_rng);
  EpochReport rep;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    auto [lb, grads] = total_objective(cfg.objective, batches[bi], state.model);
    if (!std::isfinite(lb.total) || !grads.all_finite()) {
      throw std::runtime_error("non-finite loss or gradient at epoch " +
                               std::to_string(state.epoch + 1) + ", batch " +
                               std::to_string(bi));
    }
    for (std::size_t r = 0; r < grads.users.size(); ++r) {
      state.model.users.row(grads.users[r]) -=
          cfg.learning_rate * grads.user_grads.row(static_cast<int>(r));
    }
    for (std::size_t r = 0; r < grads.items.size(); ++r) {
      state.model.items.row(grads.items[r]) -=
          cfg.learning_rate * grads.item_grads.row(static_cast<int>(r));
    }
    rep.mean_loss.cont += lb.cont;
    rep.mean_loss.base += lb.base;
    rep.mean_loss.hinge += lb.hinge;
    rep.mean_loss.orth += lb.orth;
    rep.mean_loss.total += lb.total;
    rep.mean_loss.d_p += lb.d_p;
  }
  const double nb = static_cast<double>(batches.size());
  rep.mean_loss.cont /= nb;
  rep.mean_loss.base /= nb;
  rep.mean_loss.hinge /= nb;
  rep.mean_loss.orth /= nb;
  rep.mean_loss.total /= nb;
  rep.mean_loss.d_p /= nb;

  Matrix z = stacked_reps(state.model);
  rep.mean_dim_variance = mean_dim_variance(z);
  rep.mean_abs_correlation =
      state.model.dim() >= 2 ? mean_abs_correlation(z) : 0.0;
  rep.d_p = 2.0 * rep.mean_dim_variance * static_cast<double>(state.model.dim());

  state.epoch += 1;
  rep.epoch = state.epoch;
  if (cfg.epoch_eval) {
    rep.val_metric = cfg.epoch_eval(state.model, state.epoch);
  }
  state.history.push_back(rep);
  return rep;
}

/// Initializes a model from the config seed and trains for the configured
/// number of epochs. Every randomized step (init, shuffling) derives from
/// the one seed, so equal configs give bit-identical models.
inline TrainState fit(const InteractionDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.num_pairs() == 0) {
    throw std::invalid_argument("fit: dataset has no interactions");
  }
  TrainState state = init_train_state(ds, cfg);
  for (int e = 0; e < cfg.epochs; ++e) {
    EpochReport rep = train_epoch(state, ds, cfg);
    if (cfg.report_sink) cfg.report_sink(rep);
    if (cfg.snapshot_sink && cfg.snapshot_every > 0 &&
        state.epoch % cfg.snapshot_every == 0) {
      cfg.snapshot_sink(state.model, state.epoch);
    }
  }
  return state;
}

/// Header matching format_epoch_csv_row.
inline std::string epoch_csv_header() {
  return "epoch,base,cont,hinge,orth,total,d_p,mean_dim_variance,"
         "mean_abs_correlation,val_metric";
}

inline std::string format_epoch_csv_row(const EpochReport& rep) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                rep.epoch, rep.mean_loss.base, rep.mean_loss.cont,
                rep.mean_loss.hinge, rep.mean_loss.orth, rep.mean_loss.total,
                rep.d_p, rep.mean_dim_variance, rep.mean_abs_correlation);
  std::string row(buf);
  row.push_back(',');
  if (rep.val_metric) {
    std::snprintf(buf, sizeof(buf), "%.17g", *rep.val_metric);
    row += buf;
  }
  return row;
}

}  // namespace simpdo
