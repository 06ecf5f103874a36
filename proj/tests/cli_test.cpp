#include "simpdo/cli.hpp"

#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "test_util.hpp"

namespace simpdo {
namespace {

namespace fs = std::filesystem;

int count_lines(const fs::path& p) {
  std::string text = testutil::read_file(p);
  return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

TEST(ConfigFile, ParsesCommentsAndRejectsDuplicates) {
  auto dir = testutil::scratch_dir("configfile");
  testutil::write_file(dir / "run.conf",
                       "# training knobs\n"
                       "dim = 4\n"
                       "lr=0.25   # inline comment\n"
                       "\n"
                       "base = cont\n");
  auto kv = parse_config_file((dir / "run.conf").string());
  EXPECT_EQ(kv.at("dim"), "4");
  EXPECT_EQ(kv.at("lr"), "0.25");
  EXPECT_EQ(kv.at("base"), "cont");
  EXPECT_EQ(kv.size(), 3u);

  testutil::write_file(dir / "dup.conf", "a=1\na=2\n");
  EXPECT_THROW(parse_config_file((dir / "dup.conf").string()),
               std::runtime_error);
  testutil::write_file(dir / "noeq.conf", "just words\n");
  EXPECT_THROW(parse_config_file((dir / "noeq.conf").string()),
               std::runtime_error);
  EXPECT_THROW(parse_config_file((dir / "missing.conf").string()),
               std::runtime_error);
}

TEST(ResolveOptions, CommandLineBeatsFileBeatsDefaults) {
  auto dir = testutil::scratch_dir("resolve");
  testutil::write_file(dir / "run.conf", "lr = 0.25\ndim = 7\n");
  KeyValues defaults = {{"lr", "0.5"}, {"dim", "100"}, {"batch", "128"}};
  KeyValues cli = {{"config", (dir / "run.conf").string()}, {"dim", "9"}};
  Options opt = resolve_options(defaults, cli);
  EXPECT_EQ(opt.gets("lr"), "0.25");    // file overrides default
  EXPECT_EQ(opt.gets("dim"), "9");      // command line overrides file
  EXPECT_EQ(opt.gets("batch"), "128");  // untouched default
  EXPECT_FALSE(opt.has("config"));      // the file pointer is not a knob
}

TEST(Options, TypedAccessorsValidateWholeTokens) {
  Options opt({{"n", "42"},
               {"x", "2.5"},
               {"bad_int", "12abc"},
               {"bad_num", "1e"},
               {"ks", "1, 5,10"},
               {"bad_ks", "1,two"}});
  EXPECT_EQ(opt.geti("n"), 42);
  EXPECT_DOUBLE_EQ(opt.getd("x"), 2.5);
  EXPECT_EQ(opt.getu("n"), 42u);
  EXPECT_EQ(opt.get_int_list("ks"), (std::vector<int>{1, 5, 10}));
  EXPECT_EQ(opt.get_int_list("n"), (std::vector<int>{42}));
  EXPECT_THROW(opt.geti("bad_int"), std::invalid_argument);
  EXPECT_THROW(opt.getd("bad_num"), std::invalid_argument);
  EXPECT_THROW(opt.get_int_list("bad_ks"), std::invalid_argument);
  EXPECT_THROW(opt.gets("absent"), std::invalid_argument);
}

TEST(Manifest, RoundTripsAndRejectsForeignFiles) {
  auto dir = testutil::scratch_dir("manifest");
  RunManifest m;
  m.run_id = "abc123";
  m.command = "train";
  m.config = {{"dim", "4"}, {"lr", "0.5"}};
  m.artifacts = {{"checkpoint", "checkpoint.ckpt"}};
  const std::string path = (dir / "manifest.json").string();
  save_manifest(m, path);
  RunManifest back = load_manifest(path);
  EXPECT_EQ(back.run_id, m.run_id);
  EXPECT_EQ(back.command, m.command);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.artifacts, m.artifacts);

  testutil::write_file(dir / "foreign.json", "{\"format\": \"something\"}");
  EXPECT_THROW(load_manifest((dir / "foreign.json").string()),
               std::runtime_error);
  testutil::write_file(dir / "broken.json", "{not json");
  EXPECT_THROW(load_manifest((dir / "broken.json").string()),
               std::runtime_error);
}

TEST(Manifest, HashIdIsStableAndSensitive) {
  std::map<std::string, std::string> cfg = {{"dim", "4"}, {"lr", "0.5"}};
  std::string a = config_hash_id("train", cfg);
  std::string b = config_hash_id("train", cfg);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 16u);
  cfg["lr"] = "0.6";
  EXPECT_NE(config_hash_id("train", cfg), a);
  cfg["lr"] = "0.5";
  EXPECT_NE(config_hash_id("eval", cfg), a);
}

// Writes a small connected interaction file and returns its path.
std::string write_small_dataset(const fs::path& dir) {
  SyntheticDataset syn = gen_synthetic_components(1, 20, 20, 0.3, 77);
  const std::string path = (dir / "pairs.txt").string();
  save_interactions(syn.data, path, PairFormat::kPairList);
  return path;
}

KeyValues small_train_args(const std::string& data, const std::string& out) {
  return {{"data", data},   {"out_dir", out}, {"dim", "4"},
          {"epochs", "5"},  {"batch", "16"},  {"lr", "0.3"},
          {"seed", "3"},    {"margin_p", "1"}};
}

TEST(CmdTrain, WritesTheDeclaredArtifacts) {
  auto dir = testutil::scratch_dir("cmd_train");
  std::string data = write_small_dataset(dir);
  std::string out = (dir / "run").string();
  ASSERT_EQ(cmd_train(small_train_args(data, out)), 0);

  RunManifest m = load_manifest((fs::path(out) / "manifest.json").string());
  EXPECT_EQ(m.command, "train");
  EXPECT_EQ(m.run_id, config_hash_id("train", m.config));
  EXPECT_EQ(m.config.count("out_dir"), 0u);  // location is not identity
  EXPECT_EQ(m.config.at("dim"), "4");
  EXPECT_EQ(m.config.at("batch"), "16");  // resolved defaults are recorded

  EXPECT_EQ(count_lines(fs::path(out) / "diagnostics.csv"), 6);  // header + 5
  CheckpointMeta meta;
  EmbeddingModel model =
      load_checkpoint((fs::path(out) / "checkpoint.ckpt").string(), &meta);
  EXPECT_EQ(model.num_users(), 20);
  EXPECT_EQ(model.num_items(), 20);
  EXPECT_EQ(model.dim(), 4);
  EXPECT_EQ(meta.seed, 3u);
  EXPECT_EQ(meta.epoch, 5u);

  auto collapse = nlohmann::json::parse(
      testutil::read_file(fs::path(out) / "collapse.json"));
  EXPECT_TRUE(collapse.contains("verdict"));
  EXPECT_TRUE(collapse.contains("d_p"));
  // No holdout: no split or metrics artifacts.
  EXPECT_FALSE(fs::exists(fs::path(out) / "split.json"));
  EXPECT_FALSE(fs::exists(fs::path(out) / "metrics.jsonl"));
}

TEST(CmdTrain, IdenticalConfigsProduceIdenticalBytes) {
  auto dir = testutil::scratch_dir("cmd_train_det");
  std::string data = write_small_dataset(dir);
  KeyValues args = small_train_args(data, (dir / "a").string());
  args["holdout"] = "5";
  args["eval_k"] = "5";
  ASSERT_EQ(cmd_train(args), 0);
  args["out_dir"] = (dir / "b").string();
  ASSERT_EQ(cmd_train(args), 0);
  for (const char* name :
       {"manifest.json", "diagnostics.csv", "checkpoint.ckpt", "split.json",
        "metrics.jsonl", "collapse.json"}) {
    EXPECT_EQ(testutil::read_file(dir / "a" / name),
              testutil::read_file(dir / "b" / name))
        << name << " differs between identical runs";
  }
}

TEST(CmdTrain, HoldoutProducesMetricsAndASplit) {
  auto dir = testutil::scratch_dir("cmd_train_holdout");
  std::string data = write_small_dataset(dir);
  std::string out = (dir / "run").string();
  KeyValues args = small_train_args(data, out);
  args["holdout"] = "5";
  args["eval_k"] = "1,5";
  ASSERT_EQ(cmd_train(args), 0);

  // One metrics row per requested cutoff, all valid JSON.
  std::ifstream metrics(fs::path(out) / "metrics.jsonl");
  std::string line;
  int rows = 0;
  while (std::getline(metrics, line)) {
    auto row = nlohmann::json::parse(line);
    EXPECT_EQ(row.at("metric"), "hr");
    EXPECT_EQ(row.at("epoch"), 5);
    EXPECT_GE(row.at("value").get<double>(), 0.0);
    EXPECT_LE(row.at("value").get<double>(), 1.0);
    ++rows;
  }
  EXPECT_EQ(rows, 2);

  // The split reloads against the source dataset.
  InteractionDataset ds = load_interactions(data, PairFormat::kPairList);
  WarmSplit split =
      load_warm_split(ds, (fs::path(out) / "split.json").string());
  EXPECT_EQ(split.candidates_per_case, 5);
  EXPECT_GT(split.cases.size(), 0u);
}

TEST(CmdTrain, ScheduledEvaluationWritesRowsPerEpoch) {
  auto dir = testutil::scratch_dir("cmd_train_evalevery");
  std::string data = write_small_dataset(dir);
  std::string out = (dir / "run").string();
  KeyValues args = small_train_args(data, out);
  args["holdout"] = "5";
  args["eval_k"] = "5";
  args["eval_every"] = "2";
  ASSERT_EQ(cmd_train(args), 0);
  // Epochs 2, 4 and the forced final epoch 5.
  EXPECT_EQ(count_lines(fs::path(out) / "metrics.jsonl"), 3);
}

TEST(CmdTrain, FailsCleanlyWithoutTouchingTheOutputDir) {
  auto dir = testutil::scratch_dir("cmd_train_fail");
  std::string out = (dir / "run").string();
  KeyValues args = small_train_args((dir / "nope.txt").string(), out);
  EXPECT_EQ(cmd_train(args), 1);
  EXPECT_FALSE(fs::exists(out));

  std::string data = write_small_dataset(dir);
  KeyValues bogus = small_train_args(data, out);
  bogus["bogus_knob"] = "1";
  EXPECT_EQ(cmd_train(bogus), 1);
  EXPECT_FALSE(fs::exists(out));

  KeyValues bad = small_train_args(data, out);
  bad["lambda1"] = "-1";
  EXPECT_EQ(cmd_train(bad), 1);
  EXPECT_FALSE(fs::exists(out));
}

TEST(CmdTrain, ColdRunFitsAnEncoderAndReportsRecall) {
  auto dir = testutil::scratch_dir("cmd_train_cold");
  SyntheticDataset syn = gen_synthetic_components(1, 25, 25, 0.3, 5);
  std::string data = (dir / "pairs.txt").string();
  save_interactions(syn.data, data, PairFormat::kPairList);
  // Random but fixed side features, one row per item.
  std::ofstream feat(dir / "features.txt");
  Rng rng(8);
  for (int k = 0; k < 25; ++k) {
    feat << syn.data.item_id(k);
    for (int c = 0; c < 3; ++c) feat << ' ' << uniform_real(rng, -1, 1);
    feat << '\n';
  }
  feat.close();

  std::string out = (dir / "run").string();
  KeyValues args = small_train_args(data, out);
  args["cold_count"] = "3";
  args["cold_pool"] = "10";
  args["eval_k"] = "5";
  args["item_features"] = (dir / "features.txt").string();
  ASSERT_EQ(cmd_train(args), 0);

  CheckpointMeta meta;
  EmbeddingModel model =
      load_checkpoint((fs::path(out) / "checkpoint.ckpt").string(), &meta);
  ASSERT_TRUE(model.feature_encoder.has_value());
  EXPECT_EQ(model.feature_encoder->weight.rows(), 3);
  EXPECT_EQ(model.feature_encoder->weight.cols(), 4);

  InteractionDataset ds = load_interactions(data, PairFormat::kPairList);
  ColdSplit split = load_cold_split(ds, (fs::path(out) / "split.json").string());
  EXPECT_EQ(split.cold_items.size(), 3u);
  EXPECT_GE(count_lines(fs::path(out) / "metrics.jsonl"), 1);

  // Cold training data must not contain the cold items' pairs.
  for (int k : split.cold_items) {
    EXPECT_TRUE(split.train.item_users(k).empty());
  }
}

TEST(CmdEval, ScoresACheckpointAgainstASavedSplit) {
  auto dir = testutil::scratch_dir("cmd_eval");
  std::string data = write_small_dataset(dir);
  std::string train_out = (dir / "train").string();
  KeyValues targs = small_train_args(data, train_out);
  targs["holdout"] = "5";
  targs["eval_k"] = "5";
  ASSERT_EQ(cmd_train(targs), 0);

  std::string eval_out = (dir / "eval").string();
  KeyValues eargs = {{"data", data},
                     {"checkpoint", train_out + "/checkpoint.ckpt"},
                     {"split", train_out + "/split.json"},
                     {"out_dir", eval_out},
                     {"k", "5"}};
  ASSERT_EQ(cmd_eval(eargs), 0);

  // The eval rerun reproduces the training run's final metric exactly.
  auto last_train_row = [&] {
    std::ifstream in(fs::path(train_out) / "metrics.jsonl");
    std::string line, last;
    while (std::getline(in, line)) last = line;
    return nlohmann::json::parse(last);
  }();
  auto eval_row = nlohmann::json::parse(
      testutil::read_file(fs::path(eval_out) / "metrics.jsonl"));
  EXPECT_EQ(eval_row.at("value"), last_train_row.at("value"));
  EXPECT_EQ(eval_row.at("num_cases"), last_train_row.at("num_cases"));

  // Shape mismatch is refused.
  auto other = init_model(5, 5, 4, 0.1, 1);
  save_checkpoint(other, CheckpointMeta{}, (dir / "other.ckpt").string());
  eargs["checkpoint"] = (dir / "other.ckpt").string();
  EXPECT_EQ(cmd_eval(eargs), 1);

  // No split source at all is an error.
  eargs["checkpoint"] = train_out + "/checkpoint.ckpt";
  eargs.erase("split");
  EXPECT_EQ(cmd_eval(eargs), 1);
}

TEST(CmdEval, ReadsPairedRatingAndNegativeFiles) {
  auto dir = testutil::scratch_dir("cmd_eval_paired");
  testutil::write_file(dir / "data.txt",
                       "u0 i0\nu1 i1\nu2 i2\nu0 i3\n");
  testutil::write_file(dir / "test.rating", "u1 i3\n");
  testutil::write_file(dir / "test.negative", "(u1,i3)\ti0\ti1\n");

  // Items score by index against every user: i3 beats its negatives.
  EmbeddingModel m;
  m.users = RowMatrix::Zero(3, 2);
  m.users.col(0).setOnes();
  m.items = RowMatrix::Zero(4, 2);
  for (int k = 0; k < 4; ++k) m.items(k, 0) = k;
  save_checkpoint(m, CheckpointMeta{1, 1}, (dir / "model.ckpt").string());

  KeyValues args = {{"data", (dir / "data.txt").string()},
                    {"checkpoint", (dir / "model.ckpt").string()},
                    {"test_rating", (dir / "test.rating").string()},
                    {"test_negative", (dir / "test.negative").string()},
                    {"out_dir", (dir / "out").string()},
                    {"k", "1"}};
  ASSERT_EQ(cmd_eval(args), 0);
  auto row = nlohmann::json::parse(
      testutil::read_file(dir / "out" / "metrics.jsonl"));
  EXPECT_EQ(row.at("metric"), "hr");
  EXPECT_DOUBLE_EQ(row.at("value").get<double>(), 1.0);
  EXPECT_EQ(row.at("num_cases"), 1);
}

TEST(CmdSynth, WritesLabeledUniverseWithoutTraining) {
  auto dir = testutil::scratch_dir("cmd_synth");
  std::string out = (dir / "synth").string();
  KeyValues args = {{"components", "3"}, {"users_per", "8"},
                    {"items_per", "9"},  {"edge_prob", "0.4"},
                    {"seed", "5"},       {"train", "0"},
                    {"out_dir", out}};
  ASSERT_EQ(cmd_synth(args), 0);
  EXPECT_FALSE(fs::exists(fs::path(out) / "checkpoint.ckpt"));

  InteractionDataset ds = load_interactions(
      (fs::path(out) / "pairs.txt").string(), PairFormat::kPairList);
  EXPECT_EQ(ds.num_users(), 24);
  EXPECT_EQ(ds.num_items(), 27);
  EXPECT_EQ(count_lines(fs::path(out) / "labels.txt"), 24 + 27);

  // Labels partition ids by component prefix used in generated names.
  std::ifstream labels(fs::path(out) / "labels.txt");
  std::string kind, id;
  int comp;
  while (labels >> kind >> id >> comp) {
    ASSERT_TRUE(kind == "u" || kind == "i");
    EXPECT_GE(comp, 0);
    EXPECT_LT(comp, 3);
  }
}

TEST(CmdSynth, TrainedChainEmitsVerdictArtifacts) {
  auto dir = testutil::scratch_dir("cmd_synth_train");
  std::string out = (dir / "synth").string();
  KeyValues args = {{"components", "2"}, {"users_per", "10"},
                    {"items_per", "10"}, {"edge_prob", "0.4"},
                    {"seed", "6"},       {"epochs", "5"},
                    {"dim", "4"},        {"out_dir", out}};
  ASSERT_EQ(cmd_synth(args), 0);
  EXPECT_TRUE(fs::exists(fs::path(out) / "checkpoint.ckpt"));
  EXPECT_EQ(count_lines(fs::path(out) / "diagnostics.csv"), 6);
  auto collapse = nlohmann::json::parse(
      testutil::read_file(fs::path(out) / "collapse.json"));
  std::string verdict = collapse.at("verdict").get<std::string>();
  EXPECT_TRUE(verdict == "healthy" || verdict == "collapsed" ||
              verdict == "partially_collapsed" || verdict == "shrinking");
  RunManifest m = load_manifest((fs::path(out) / "manifest.json").string());
  EXPECT_EQ(m.artifacts.at("checkpoint"), "checkpoint.ckpt");
}

TEST(CmdGradcheck, PassesCleanAndCatchesCorruption) {
  EXPECT_EQ(cmd_gradcheck({}), 0);
  EXPECT_EQ(cmd_gradcheck({{"corrupt", "cont"}}), 1);
  EXPECT_EQ(cmd_gradcheck({{"corrupt", "orth_squared"}}), 1);
  EXPECT_EQ(cmd_gradcheck({{"users", "0"}}), 1);  // invalid toy shape
}

}  // namespace
}  // namespace simpdo
