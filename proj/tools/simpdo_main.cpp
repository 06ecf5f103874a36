// Command line front end. Flags are collected verbatim into a key=value map
// and resolved against per-command defaults (and an optional --config file)
// inside the library, so programmatic runs and shell runs share one path.

#include <map>
#include <string>

#include <CLI11.hpp>

#include "simpdo/cli.hpp"

namespace {

using simpdo::KeyValues;

void add_opt(CLI::App* cmd, KeyValues& kv, const std::string& flag,
             const std::string& key, const std::string& desc) {
  cmd->add_option_function<std::string>(
      flag, [&kv, key](const std::string& v) { kv[key] = v; }, desc);
}

void add_shared_train_opts(CLI::App* cmd, KeyValues& kv) {
  add_opt(cmd, kv, "--dim", "dim", "representation width");
  add_opt(cmd, kv, "--batch", "batch", "pairs per mini-batch");
  add_opt(cmd, kv, "--lr", "lr", "SGD learning rate");
  add_opt(cmd, kv, "--epochs", "epochs", "training epochs");
  add_opt(cmd, kv, "--lambda1", "lambda1", "base similarity loss weight");
  add_opt(cmd, kv, "--lambda2", "lambda2", "pairwise-distance hinge weight");
  add_opt(cmd, kv, "--lambda3", "lambda3", "orthogonality weight");
  add_opt(cmd, kv, "--margin-p", "margin_p",
          "floor on the batch mean squared pairwise distance");
  add_opt(cmd, kv, "--margin-d", "margin_d",
          "contrastive baseline dissimilarity margin");
  add_opt(cmd, kv, "--base", "base", "base loss: cont or mse");
  add_opt(cmd, kv, "--mapping", "mapping", "similarity: dot or cosine");
  add_opt(cmd, kv, "--orth-mode", "orth_mode",
          "orthogonality penalty: squared or raw");
  add_opt(cmd, kv, "--seed", "seed", "master seed");
  add_opt(cmd, kv, "--init-scale", "init_scale",
          "uniform init half-width");
  add_opt(cmd, kv, "--snapshot-every", "snapshot_every",
          "checkpoint every N epochs (0: final only)");
  add_opt(cmd, kv, "--ablate", "ablate",
          "none, no-orth, no-hinge or only-cont");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"similar-pair recommender with collapse-resistant training"};
  app.require_subcommand(1);

  KeyValues train_kv, eval_kv, synth_kv, grad_kv;

  CLI::App* train = app.add_subcommand("train", "train on an interaction file");
  add_opt(train, train_kv, "--data", "data", "interaction file");
  add_opt(train, train_kv, "--format", "format", "pairs, rows or json");
  add_opt(train, train_kv, "--out-dir", "out_dir", "artifact directory");
  add_opt(train, train_kv, "--config", "config", "key=value config file");
  add_opt(train, train_kv, "--run-id", "run_id", "override the derived run id");
  add_opt(train, train_kv, "--holdout", "holdout",
          "leave-one-out distractors per user (0: no holdout)");
  add_opt(train, train_kv, "--eval-k", "eval_k", "comma list of cutoffs");
  add_opt(train, train_kv, "--eval-every", "eval_every",
          "evaluate every N epochs (0: final only)");
  add_opt(train, train_kv, "--item-features", "item_features",
          "side feature file for the item encoder");
  add_opt(train, train_kv, "--encoder-ridge", "encoder_ridge",
          "ridge strength of the feature encoder fit");
  add_opt(train, train_kv, "--cold-count", "cold_count",
          "hold out N random items entirely (0: off)");
  add_opt(train, train_kv, "--cold-pool", "cold_pool",
          "sampled non-interacting users per cold case");
  add_shared_train_opts(train, train_kv);

  CLI::App* eval = app.add_subcommand("eval", "score an existing checkpoint");
  add_opt(eval, eval_kv, "--data", "data", "interaction file");
  add_opt(eval, eval_kv, "--format", "format", "pairs, rows or json");
  add_opt(eval, eval_kv, "--checkpoint", "checkpoint", "model checkpoint");
  add_opt(eval, eval_kv, "--split", "split", "stored split file");
  add_opt(eval, eval_kv, "--test-rating", "test_rating",
          "pre-sampled test pairs, one per line");
  add_opt(eval, eval_kv, "--test-negative", "test_negative",
          "pre-sampled negatives aligned with --test-rating");
  add_opt(eval, eval_kv, "--item-features", "item_features",
          "side feature file (cold splits)");
  add_opt(eval, eval_kv, "--user-rep", "user_rep",
          "user side for cold ranking: aggregate or table");
  add_opt(eval, eval_kv, "--k", "k", "comma list of cutoffs");
  add_opt(eval, eval_kv, "--mapping", "mapping", "similarity: dot or cosine");
  add_opt(eval, eval_kv, "--out-dir", "out_dir", "artifact directory");
  add_opt(eval, eval_kv, "--config", "config", "key=value config file");
  add_opt(eval, eval_kv, "--run-id", "run_id", "override the derived run id");

  CLI::App* synth = app.add_subcommand(
      "synth", "generate a disjoint-component universe and train on it");
  add_opt(synth, synth_kv, "--components", "components", "component count");
  add_opt(synth, synth_kv, "--users-per", "users_per", "users per component");
  add_opt(synth, synth_kv, "--items-per", "items_per", "items per component");
  add_opt(synth, synth_kv, "--edge-prob", "edge_prob",
          "within-component interaction probability");
  add_opt(synth, synth_kv, "--out-dir", "out_dir", "artifact directory");
  add_opt(synth, synth_kv, "--config", "config", "key=value config file");
  add_opt(synth, synth_kv, "--run-id", "run_id", "override the derived run id");
  add_opt(synth, synth_kv, "--train", "train",
          "1: train and diagnose after generating (default), 0: generate only");
  add_shared_train_opts(synth, synth_kv);

  CLI::App* grad = app.add_subcommand(
      "gradcheck", "compare analytic gradients against finite differences");
  add_opt(grad, grad_kv, "--users", "users", "toy user count");
  add_opt(grad, grad_kv, "--items", "items", "toy item count");
  add_opt(grad, grad_kv, "--dim", "dim", "toy representation width");
  add_opt(grad, grad_kv, "--eps", "eps", "finite difference step");
  add_opt(grad, grad_kv, "--seed", "seed", "toy seed");
  add_opt(grad, grad_kv, "--margin-p", "margin_p", "hinge margin");
  add_opt(grad, grad_kv, "--margin-d", "margin_d", "contrastive margin");
  add_opt(grad, grad_kv, "--rel-tol", "rel_tol", "pass threshold");
  add_opt(grad, grad_kv, "--corrupt", "corrupt",
          "deliberately break one term's gradient (harness self-test)");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return simpdo::cmd_train(train_kv);
  if (eval->parsed()) return simpdo::cmd_eval(eval_kv);
  if (synth->parsed()) return simpdo::cmd_synth(synth_kv);
  if (grad->parsed()) return simpdo::cmd_gradcheck(grad_kv);
  return 1;
}
