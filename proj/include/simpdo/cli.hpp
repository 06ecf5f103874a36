#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "simpdo/evaluation.hpp"
#include "simpdo/gradcheck.hpp"
#include "simpdo/manifest.hpp"
#include "simpdo/trainer.hpp"

namespace simpdo {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline void check_known_keys(const Options& opt,
                             const std::set<std::string>& known) {
  for (const auto& [k, v] : opt.map()) {
    (void)v;
    if (!known.count(k)) {
      throw std::invalid_argument("unknown option '" + k + "'");
    }
  }
}

/// Everything that identifies the run; out_dir is where it lands, not what
/// it is, so it stays out of the manifest and the run id.
inline KeyValues manifest_config(const Options& opt) {
  KeyValues cfg = opt.map();
  cfg.erase("out_dir");
  return cfg;
}

inline void append_metric(std::ostream& out, const std::string& run_id,
                          int epoch, const MetricResult& m) {
  nlohmann::ordered_json row;
  row["run_id"] = run_id;
  row["epoch"] = epoch;
  row["metric"] = m.metric;
  row["k"] = m.k;
  row["value"] = m.value;
  row["num_cases"] = m.num_cases;
  if (m.num_excluded > 0) row["num_excluded"] = m.num_excluded;
  row["seed"] = m.seed;
  out << row.dump() << '\n';
}

inline void write_collapse_json(const CollapseReport& rep,
                                const std::string& path) {
  nlohmann::ordered_json doc;
  doc["mean_dim_variance"] = rep.mean_dim_variance;
  doc["mean_abs_correlation"] = rep.mean_abs_correlation;
  doc["d_p"] = rep.d_p;
  doc["unique_rep_estimate"] = rep.unique_rep_estimate;
  doc["verdict"] = to_string(rep.verdict);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << doc.dump(1, '\t') << '\n';
}

inline ObjectiveConfig objective_from(const Options& opt) {
  ObjectiveConfig obj;
  obj.base_loss = parse_base_loss(opt.gets("base"));
  obj.lambda1 = opt.getd("lambda1");
  obj.lambda2 = opt.getd("lambda2");
  obj.lambda3 = opt.getd("lambda3");
  obj.margin_p = opt.getd("margin_p");
  obj.margin_d = opt.getd("margin_d");
  obj.mapping = parse_mapping(opt.gets("mapping"));
  obj.orth_mode = parse_orth_mode(opt.gets("orth_mode"));

  const std::string ablate = opt.gets("ablate");
  if (ablate == "no-orth") {
    obj.lambda3 = 0.0;
  } else if (ablate == "no-hinge") {
    obj.lambda2 = 0.0;
  } else if (ablate == "only-cont") {
    obj.base_loss = BaseLoss::kCont;
    obj.lambda2 = 0.0;
    obj.lambda3 = 0.0;
  } else if (ablate != "none") {
    throw std::invalid_argument(
        "unknown ablation '" + ablate +
        "' (expected none, no-orth, no-hinge or only-cont)");
  }
  return obj;
}

inline TrainConfig train_config_from(const Options& opt) {
  TrainConfig cfg;
  cfg.epochs = opt.geti("epochs");
  cfg.learning_rate = opt.getd("lr");
  cfg.batch_size = opt.geti("batch");
  cfg.dim = opt.geti("dim");
  cfg.init_scale = opt.getd("init_scale");
  cfg.seed = opt.getu("seed");
  cfg.snapshot_every = opt.geti("snapshot_every");
  cfg.objective = objective_from(opt);
  return cfg;
}

}  // namespace detail

inline const KeyValues& train_defaults() {
  static const KeyValues defaults = {
      {"format", "pairs"},   {"dim", "100"},
      {"batch", "128"},      {"lr", "0.5"},
      {"epochs", "50"},      {"lambda1", "0.01"},
      {"lambda2", "1"},      {"lambda3", "1"},
      {"margin_p", "0.01"},  {"margin_d", "1"},
      {"base", "cont"},      {"mapping", "dot"},
      {"orth_mode", "squared"}, {"seed", "1"},
      {"init_scale", "0.1"}, {"snapshot_every", "0"},
      {"ablate", "none"},    {"holdout", "0"},
      {"eval_k", "10"},      {"eval_every", "0"},
      {"cold_count", "0"},   {"cold_pool", "1000"},
      {"encoder_ridge", "0.001"},
  };
  return defaults;
}

/// Trains a model on an interaction file and writes the run's artifacts
/// (manifest, per-epoch diagnostics CSV, checkpoint, collapse report and,
/// when a holdout is configured, ranking metrics) under out_dir.
inline int cmd_train(const KeyValues& cli) {
  try {
    Options opt = resolve_options(train_defaults(), cli);
    std::set<std::string> known = {"data", "out_dir", "item_features",
                                   "run_id"};
    for (const auto& [k, v] : train_defaults()) {
      (void)v;
      known.insert(k);
    }
    detail::check_known_keys(opt, known);

    const std::string data_path = opt.gets("data");
    const std::string out_dir = opt.gets("out_dir");
    TrainConfig cfg = detail::train_config_from(opt);
    cfg.validate();
    const int holdout = opt.geti("holdout");
    const int cold_count = opt.geti("cold_count");
    const std::vector<int> eval_ks = opt.get_int_list("eval_k");
    const int eval_every = opt.geti("eval_every");
    if (holdout < 0 || cold_count < 0 || eval_every < 0) {
      throw std::invalid_argument("holdout, cold_count and eval_every must be >= 0");
    }
    if (holdout > 0 && cold_count > 0) {
      throw std::invalid_argument("choose one of holdout and cold_count");
    }

    InteractionDataset ds =
        load_interactions(data_path, parse_pair_format(opt.gets("format")));
    std::printf("loaded %s: %d users, %d items, %zu pairs, sparsity %.6f\n",
                data_path.c_str(), ds.num_users(), ds.num_items(),
                ds.num_pairs(), ds.sparsity());

    RowMatrix features;
    const bool with_features = opt.has("item_features");
    if (with_features) {
      features = load_item_features(opt.gets("item_features"), ds.num_items(),
                                    ds.item_ids());
    }
    if (cold_count > 0 && !with_features) {
      throw std::invalid_argument("cold evaluation requires item_features");
    }

    std::optional<WarmSplit> warm;
    std::optional<ColdSplit> cold;
    const InteractionDataset* train_ds = &ds;
    if (holdout > 0) {
      warm = leave_one_out_split(ds, holdout, derive_seed(cfg.seed, 2));
      train_ds = &warm->train;
    } else if (cold_count > 0) {
      cold = build_cold_split(
          ds, sample_cold_items(ds, cold_count, derive_seed(cfg.seed, 3)),
          opt.geti("cold_pool"), derive_seed(cfg.seed, 2));
      train_ds = &cold->train;
    }

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.command = "train";
    manifest.config = detail::manifest_config(opt);
    manifest.run_id = opt.has("run_id")
                          ? opt.gets("run_id")
                          : config_hash_id("train", manifest.config);
    manifest.artifacts = {{"diagnostics", "diagnostics.csv"},
                          {"checkpoint", "checkpoint.ckpt"},
                          {"collapse", "collapse.json"}};
    if (warm || cold) {
      manifest.artifacts["split"] = "split.json";
      manifest.artifacts["metrics"] = "metrics.jsonl";
    }
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());

    std::ofstream csv((fs::path(out_dir) / "diagnostics.csv").string());
    if (!csv) throw std::runtime_error("cannot write diagnostics.csv");
    csv << epoch_csv_header() << '\n';
    cfg.report_sink = [&csv](const EpochReport& rep) {
      csv << format_epoch_csv_row(rep) << '\n';
    };

    std::ofstream metrics;
    if (warm || cold) {
      metrics.open((fs::path(out_dir) / "metrics.jsonl").string());
      if (!metrics) throw std::runtime_error("cannot write metrics.jsonl");
    }

    // Cold evaluation needs the feature encoder, which is fitted after
    // training; only warm ranking can run inside the loop.
    if (warm && eval_every > 0) {
      cfg.epoch_eval = [&](const EmbeddingModel& model,
                           int epoch) -> std::optional<double> {
        if (epoch % eval_every != 0 && epoch != cfg.epochs) return std::nullopt;
        std::optional<double> first;
        for (int k : eval_ks) {
          MetricResult m = hit_ratio_at_k(model, *warm, k, cfg.objective.mapping);
          if (!first) first = m.value;
          detail::append_metric(metrics, manifest.run_id, epoch, m);
        }
        return first;
      };
    }

    if (cfg.snapshot_every > 0) {
      cfg.snapshot_sink = [&](const EmbeddingModel& model, int epoch) {
        CheckpointMeta meta{cfg.seed, static_cast<std::uint64_t>(epoch)};
        save_checkpoint(model, meta,
                        (fs::path(out_dir) /
                         ("checkpoint_" + std::to_string(epoch) + ".ckpt"))
                            .string());
      };
    }

    TrainState state = fit(*train_ds, cfg);

    if (with_features) {
      // Fit the feature encoder on items the model actually trained, then
      // attach it so cold items can be scored from features alone.
      std::vector<int> warm_items;
      for (int k = 0; k < train_ds->num_items(); ++k) {
        if (!train_ds->item_users(k).empty()) warm_items.push_back(k);
      }
      if (warm_items.empty()) {
        throw std::runtime_error("no trained items to fit the encoder on");
      }
      RowMatrix x(static_cast<Eigen::Index>(warm_items.size()),
                  features.cols());
      RowMatrix t(static_cast<Eigen::Index>(warm_items.size()),
                  state.model.dim());
      for (std::size_t r = 0; r < warm_items.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = features.row(warm_items[r]);
        t.row(static_cast<Eigen::Index>(r)) =
            state.model.items.row(warm_items[r]);
      }
      state.model.feature_encoder =
          fit_feature_encoder(x, t, opt.getd("encoder_ridge"));
    }

    CheckpointMeta meta{cfg.seed, static_cast<std::uint64_t>(state.epoch)};
    save_checkpoint(state.model, meta,
                    (fs::path(out_dir) / "checkpoint.ckpt").string());

    CollapseReport verdict = collapse_report(stacked_reps(state.model));
    detail::write_collapse_json(verdict,
                                (fs::path(out_dir) / "collapse.json").string());
    std::printf("final verdict: %s (var %.3g, |corr| %.3g, d_p %.3g)\n",
                to_string(verdict.verdict).c_str(), verdict.mean_dim_variance,
                verdict.mean_abs_correlation, verdict.d_p);

    if (warm) {
      save_warm_split(*warm, (fs::path(out_dir) / "split.json").string());
      if (eval_every <= 0) {
        for (int k : eval_ks) {
          MetricResult m =
              hit_ratio_at_k(state.model, *warm, k, cfg.objective.mapping);
          detail::append_metric(metrics, manifest.run_id, state.epoch, m);
          std::printf("hr@%d = %.4f over %d cases\n", k, m.value, m.num_cases);
        }
      }
    }
    if (cold) {
      save_cold_split(*cold, (fs::path(out_dir) / "split.json").string());
      for (int k : eval_ks) {
        MetricResult m = recall_at_k(state.model, *cold, features, k,
                                     cfg.objective.mapping);
        detail::append_metric(metrics, manifest.run_id, state.epoch, m);
        std::printf("recall@%d = %.4f over %d cases\n", k, m.value,
                    m.num_cases);
      }
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

inline const KeyValues& eval_defaults() {
  static const KeyValues defaults = {
      {"format", "pairs"},
      {"mapping", "dot"},
      {"k", "10"},
      {"user_rep", "aggregate"},
  };
  return defaults;
}

/// Scores an existing checkpoint against a stored split (warm or cold) or a
/// pre-sampled rating/negative file pair, writing metrics under out_dir.
inline int cmd_eval(const KeyValues& cli) {
  try {
    Options opt = resolve_options(eval_defaults(), cli);
    std::set<std::string> known = {"data",        "out_dir",  "checkpoint",
                                   "split",       "run_id",   "item_features",
                                   "test_rating", "test_negative"};
    for (const auto& [k, v] : eval_defaults()) {
      (void)v;
      known.insert(k);
    }
    detail::check_known_keys(opt, known);

    const std::string out_dir = opt.gets("out_dir");
    const std::vector<int> ks = opt.get_int_list("k");
    const Mapping mapping = parse_mapping(opt.gets("mapping"));

    InteractionDataset ds = load_interactions(
        opt.gets("data"), parse_pair_format(opt.gets("format")));
    CheckpointMeta meta;
    EmbeddingModel model = load_checkpoint(opt.gets("checkpoint"), &meta);
    if (model.num_users() != ds.num_users() ||
        model.num_items() != ds.num_items()) {
      throw std::invalid_argument(
          "checkpoint shape does not match the dataset (" +
          std::to_string(model.num_users()) + "x" +
          std::to_string(model.num_items()) + " vs " +
          std::to_string(ds.num_users()) + "x" +
          std::to_string(ds.num_items()) + ")");
    }

    std::optional<WarmSplit> warm;
    std::optional<ColdSplit> cold;
    if (opt.has("split")) {
      // Sniff the split flavor from its format tag.
      std::ifstream probe(opt.gets("split"));
      if (!probe) {
        throw std::runtime_error("cannot open split file: " + opt.gets("split"));
      }
      nlohmann::json doc;
      probe >> doc;
      const std::string format = doc.value("format", "");
      if (format == "simpdo-warm-split") {
        warm = load_warm_split(ds, opt.gets("split"));
      } else if (format == "simpdo-cold-split") {
        cold = load_cold_split(ds, opt.gets("split"));
      } else {
        throw std::runtime_error(opt.gets("split") + ": unknown split format");
      }
    } else if (opt.has("test_rating") && opt.has("test_negative")) {
      warm = load_paired_negative_split(ds, opt.gets("test_rating"),
                                        opt.gets("test_negative"));
    } else {
      throw std::invalid_argument(
          "need --split or --test-rating/--test-negative");
    }

    RowMatrix features;
    if (cold) {
      if (!opt.has("item_features")) {
        throw std::invalid_argument("cold evaluation requires item_features");
      }
      features = load_item_features(opt.gets("item_features"), ds.num_items(),
                                    ds.item_ids());
    }

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.command = "eval";
    manifest.config = detail::manifest_config(opt);
    manifest.run_id = opt.has("run_id")
                          ? opt.gets("run_id")
                          : config_hash_id("eval", manifest.config);
    manifest.artifacts = {{"metrics", "metrics.jsonl"}};
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());

    std::ofstream metrics((fs::path(out_dir) / "metrics.jsonl").string());
    if (!metrics) throw std::runtime_error("cannot write metrics.jsonl");

    EvalProtocol protocol;
    protocol.mapping = mapping;
    if (warm) {
      protocol.warm = &*warm;
      protocol.warm_ks = ks;
    }
    if (cold) {
      protocol.cold = &*cold;
      protocol.cold_features = &features;
      protocol.cold_ks = ks;
      protocol.cold_user_rep = parse_cold_user_rep(opt.gets("user_rep"));
    }
    for (const MetricResult& m : evaluate_run(model, protocol)) {
      detail::append_metric(metrics, manifest.run_id,
                            static_cast<int>(meta.epoch), m);
      std::printf("%s@%d = %.4f over %d cases\n", m.metric.c_str(), m.k,
                  m.value, m.num_cases);
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

/// Defaults for the synthetic chain: four small components train in seconds.
/// At 50 epochs the full objective stays healthy, `--ablate no-hinge` and
/// `--ablate only-cont` collapse outright, and `--ablate no-orth` inflates
/// the mean inter-dimension correlation an order of magnitude.
inline const KeyValues& synth_defaults() {
  static const KeyValues defaults = {
      {"components", "4"},  {"users_per", "50"},
      {"items_per", "50"},  {"edge_prob", "0.1"},
      {"seed", "1"},        {"train", "1"},
      {"ablate", "none"},   {"dim", "8"},
      {"batch", "32"},      {"lr", "0.5"},
      {"epochs", "50"},     {"lambda1", "1"},
      {"lambda2", "1"},     {"lambda3", "1"},
      {"margin_p", "1"},    {"margin_d", "1"},
      {"base", "cont"},     {"mapping", "dot"},
      {"orth_mode", "squared"}, {"init_scale", "0.1"},
      {"snapshot_every", "0"},
  };
  return defaults;
}

/// Generates a disjoint-component universe, optionally trains on it with
/// the chosen ablation, and reports the collapse verdict of the result.
inline int cmd_synth(const KeyValues& cli) {
  try {
    Options opt = resolve_options(synth_defaults(), cli);
    std::set<std::string> known = {"out_dir", "run_id"};
    for (const auto& [k, v] : synth_defaults()) {
      (void)v;
      known.insert(k);
    }
    detail::check_known_keys(opt, known);

    const std::string out_dir = opt.gets("out_dir");
    SyntheticDataset syn = gen_synthetic_components(
        opt.geti("components"), opt.geti("users_per"), opt.geti("items_per"),
        opt.getd("edge_prob"), opt.getu("seed"));
    std::printf("generated %d components: %d users, %d items, %zu pairs\n",
                syn.num_components, syn.data.num_users(), syn.data.num_items(),
                syn.data.num_pairs());

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.command = "synth";
    manifest.config = detail::manifest_config(opt);
    manifest.run_id = opt.has("run_id")
                          ? opt.gets("run_id")
                          : config_hash_id("synth", manifest.config);
    manifest.artifacts = {{"pairs", "pairs.txt"}, {"labels", "labels.txt"}};

    save_interactions(syn.data, (fs::path(out_dir) / "pairs.txt").string(),
                      PairFormat::kPairList);
    {
      std::ofstream labels((fs::path(out_dir) / "labels.txt").string());
      if (!labels) throw std::runtime_error("cannot write labels.txt");
      for (int j = 0; j < syn.data.num_users(); ++j) {
        labels << "u " << syn.data.user_id(j) << ' '
               << syn.user_components[static_cast<std::size_t>(j)] << '\n';
      }
      for (int k = 0; k < syn.data.num_items(); ++k) {
        labels << "i " << syn.data.item_id(k) << ' '
               << syn.item_components[static_cast<std::size_t>(k)] << '\n';
      }
    }

    if (opt.geti("train") != 0) {
      TrainConfig cfg = detail::train_config_from(opt);
      cfg.validate();
      std::ofstream csv((fs::path(out_dir) / "diagnostics.csv").string());
      if (!csv) throw std::runtime_error("cannot write diagnostics.csv");
      csv << epoch_csv_header() << '\n';
      cfg.report_sink = [&csv](const EpochReport& rep) {
        csv << format_epoch_csv_row(rep) << '\n';
      };
      TrainState state = fit(syn.data, cfg);
      CheckpointMeta meta{cfg.seed, static_cast<std::uint64_t>(state.epoch)};
      save_checkpoint(state.model, meta,
                      (fs::path(out_dir) / "checkpoint.ckpt").string());
      CollapseReport verdict = collapse_report(stacked_reps(state.model));
      detail::write_collapse_json(
          verdict, (fs::path(out_dir) / "collapse.json").string());
      std::printf("final verdict: %s (var %.3g, |corr| %.3g, d_p %.3g)\n",
                  to_string(verdict.verdict).c_str(),
                  verdict.mean_dim_variance, verdict.mean_abs_correlation,
                  verdict.d_p);
      manifest.artifacts["diagnostics"] = "diagnostics.csv";
      manifest.artifacts["checkpoint"] = "checkpoint.ckpt";
      manifest.artifacts["collapse"] = "collapse.json";
    }
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

inline const KeyValues& gradcheck_defaults() {
  static const KeyValues defaults = {
      {"users", "6"},      {"items", "6"},    {"dim", "5"},
      {"eps", "1e-5"},     {"seed", "414243"}, {"margin_p", "2"},
      {"margin_d", "1"},   {"rel_tol", "1e-4"},
  };
  return defaults;
}

/// Checks every loss term's analytic gradient against central finite
/// differences on a toy problem. Exits nonzero if any term disagrees.
inline int cmd_gradcheck(const KeyValues& cli) {
  try {
    Options opt = resolve_options(gradcheck_defaults(), cli);
    std::set<std::string> known = {"corrupt"};
    for (const auto& [k, v] : gradcheck_defaults()) {
      (void)v;
      known.insert(k);
    }
    detail::check_known_keys(opt, known);

    GradCheckOptions gopt;
    gopt.num_users = opt.geti("users");
    gopt.num_items = opt.geti("items");
    gopt.dim = opt.geti("dim");
    gopt.eps = opt.getd("eps");
    gopt.seed = opt.getu("seed");
    gopt.margin_p = opt.getd("margin_p");
    gopt.margin_d = opt.getd("margin_d");
    gopt.rel_tol = opt.getd("rel_tol");
    if (opt.has("corrupt")) gopt.corrupt_term = opt.gets("corrupt");

    bool ok = true;
    for (const TermCheck& tc : run_gradient_checks(gopt)) {
      std::printf("%-13s max_rel_err=%.3e coords=%d skipped=%d %s\n",
                  tc.term.c_str(), tc.report.max_rel_err,
                  tc.report.coords_checked, tc.report.coords_skipped,
                  tc.pass ? "PASS" : "FAIL");
      ok = ok && tc.pass;
    }
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace simpdo
