#include "simpdo/encoder.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace simpdo {
namespace {

TEST(InitModel, EntriesInRangeAndSeedStable) {
  auto a = init_model(50, 60, 8, 0.1, 4);
  auto b = init_model(50, 60, 8, 0.1, 4);
  auto c = init_model(50, 60, 8, 0.1, 5);
  EXPECT_TRUE((a.users.array() == b.users.array()).all());
  EXPECT_TRUE((a.items.array() == b.items.array()).all());
  EXPECT_FALSE((a.users.array() == c.users.array()).all());
  EXPECT_LE(a.users.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LE(a.items.cwiseAbs().maxCoeff(), 0.1);
}

TEST(InitModel, MeanNearZero) {
  // 10k samples of U[-0.1, 0.1): the mean has standard error
  // 0.1/sqrt(3)/100 = 5.8e-4; allow four of those.
  auto m = init_model(200, 200, 25, 0.1, 7);
  double mean = (m.users.sum() + m.items.sum()) / (400.0 * 25.0);
  EXPECT_NEAR(mean, 0.0, 2.4e-3);
}

TEST(InitModel, RejectsBadShapes) {
  EXPECT_THROW(init_model(0, 5, 4, 0.1, 1), std::invalid_argument);
  EXPECT_THROW(init_model(5, 5, 0, 0.1, 1), std::invalid_argument);
  EXPECT_THROW(init_model(5, 5, 4, 0.0, 1), std::invalid_argument);
}

TEST(Reps, RowViewsAndBounds) {
  auto m = init_model(3, 4, 5, 0.1, 2);
  EXPECT_TRUE(user_rep(m, 2).isApprox(m.users.row(2)));
  EXPECT_TRUE(item_rep(m, 3).isApprox(m.items.row(3)));
  EXPECT_THROW(user_rep(m, 3), std::invalid_argument);
  EXPECT_THROW(item_rep(m, -1), std::invalid_argument);
}

TEST(AggregateUserRep, MeanOfHistoryRows) {
  EmbeddingModel m;
  m.users = RowMatrix::Zero(1, 2);
  m.items = RowMatrix(3, 2);
  m.items << 1, 2, 3, 4, 5, 6;
  RowVec one = aggregate_user_rep(m, {1});
  EXPECT_TRUE(one.isApprox(m.items.row(1)));
  RowVec mean = aggregate_user_rep(m, {0, 2});
  EXPECT_DOUBLE_EQ(mean(0), 3.0);
  EXPECT_DOUBLE_EQ(mean(1), 4.0);
  // Permutation invariant.
  EXPECT_TRUE(aggregate_user_rep(m, {2, 0}).isApprox(mean));
  EXPECT_THROW(aggregate_user_rep(m, {}), std::invalid_argument);
}

TEST(AggregateUserRep, StaysInsideTheCoordinateHull) {
  auto m = init_model(1, 20, 6, 0.5, 9);
  std::vector<int> history = {0, 3, 7, 11, 19};
  RowVec agg = aggregate_user_rep(m, history);
  for (int q = 0; q < 6; ++q) {
    double lo = 1e300, hi = -1e300;
    for (int k : history) {
      lo = std::min(lo, m.items(k, q));
      hi = std::max(hi, m.items(k, q));
    }
    EXPECT_GE(agg(q), lo - 1e-12);
    EXPECT_LE(agg(q), hi + 1e-12);
  }
}

TEST(PredictScore, DotAndCosine) {
  RowVec a(3), b(3);
  a << 1, 2, 2;   // norm 3
  b << 2, 0, 0;   // norm 2
  EXPECT_DOUBLE_EQ(predict_score(a, b, Mapping::kDot), 2.0);
  EXPECT_DOUBLE_EQ(predict_score(a, b, Mapping::kCosine), 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(predict_score(a, a, Mapping::kCosine), 1.0);
  RowVec zero = RowVec::Zero(3);
  EXPECT_THROW(predict_score(a, zero, Mapping::kCosine),
               std::invalid_argument);
  EXPECT_DOUBLE_EQ(predict_score(a, zero, Mapping::kDot), 0.0);
}

TEST(PredictScore, CosineBoundedAndScaleFree) {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    RowVec a(4), b(4);
    for (int q = 0; q < 4; ++q) {
      a(q) = uniform_real(rng, -1, 1);
      b(q) = uniform_real(rng, -1, 1);
    }
    if (a.norm() == 0 || b.norm() == 0) continue;
    double cos = predict_score(a, b, Mapping::kCosine);
    EXPECT_LE(std::abs(cos), 1.0 + 1e-12);
    EXPECT_NEAR(predict_score(RowVec(3.0 * a), b, Mapping::kCosine), cos,
                1e-12);
    // Dot is bilinear in either argument.
    EXPECT_NEAR(predict_score(RowVec(3.0 * a), b, Mapping::kDot),
                3.0 * predict_score(a, b, Mapping::kDot), 1e-12);
  }
}

TEST(FeatureEncoder, EncodesLinearly) {
  FeatureEncoder enc;
  enc.weight = Matrix(2, 3);
  enc.weight << 1, 0, 2, 0, 1, -1;
  enc.bias = RowVec(3);
  enc.bias << 0.5, -0.5, 0.0;
  Vector x(2);
  x << 2, 3;
  RowVec z = encode_item_features(enc, x);
  EXPECT_DOUBLE_EQ(z(0), 2.5);   // 1*2 + 0*3 + 0.5
  EXPECT_DOUBLE_EQ(z(1), 2.5);   // 0*2 + 1*3 - 0.5
  EXPECT_DOUBLE_EQ(z(2), 1.0);   // 2*2 - 1*3 + 0
  Vector wrong(3);
  EXPECT_THROW(encode_item_features(enc, wrong), std::invalid_argument);
}

TEST(FitFeatureEncoder, RecoversAPlantedLinearMap) {
  Rng rng(13);
  const int n = 60, f = 5, d = 3;
  RowMatrix x(n, f);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < f; ++c) x(r, c) = uniform_real(rng, -1, 1);
  }
  Matrix w_true(f, d);
  for (int r = 0; r < f; ++r) {
    for (int c = 0; c < d; ++c) w_true(r, c) = uniform_real(rng, -1, 1);
  }
  RowVec b_true(d);
  b_true << 0.3, -1.1, 0.7;
  RowMatrix targets = (x * w_true).rowwise() + b_true;
  FeatureEncoder enc = fit_feature_encoder(x, targets, 1e-10);
  EXPECT_TRUE(enc.weight.isApprox(w_true, 1e-6));
  EXPECT_TRUE(enc.bias.isApprox(b_true, 1e-6));
  // Round trip through encode.
  RowVec z = encode_item_features(enc, Vector(x.row(7).transpose()));
  EXPECT_TRUE(z.isApprox(targets.row(7), 1e-6));
}

TEST(FitFeatureEncoder, RejectsMismatchedRows) {
  EXPECT_THROW(
      fit_feature_encoder(RowMatrix::Zero(3, 2), RowMatrix::Zero(4, 2), 1.0),
      std::invalid_argument);
}

TEST(LoadItemFeatures, AlignsToItemIndices) {
  auto dir = testutil::scratch_dir("features");
  testutil::write_file(dir / "features.txt",
                       "# id then values\n"
                       "b 4 5 6\n"
                       "a 1 2 3\n");
  RowMatrix feats = load_item_features((dir / "features.txt").string(), 2,
                                       {"a", "b"});
  EXPECT_DOUBLE_EQ(feats(0, 0), 1);
  EXPECT_DOUBLE_EQ(feats(1, 2), 6);
}

TEST(LoadItemFeatures, MissingOrUnknownItemsAreErrors) {
  auto dir = testutil::scratch_dir("features_bad");
  testutil::write_file(dir / "missing.txt", "a 1 2\n");
  EXPECT_THROW(
      load_item_features((dir / "missing.txt").string(), 2, {"a", "b"}),
      std::runtime_error);
  testutil::write_file(dir / "unknown.txt", "a 1 2\nzz 3 4\n");
  EXPECT_THROW(
      load_item_features((dir / "unknown.txt").string(), 1, {"a"}),
      std::runtime_error);
  testutil::write_file(dir / "ragged.txt", "a 1 2\nb 3\n");
  EXPECT_THROW(
      load_item_features((dir / "ragged.txt").string(), 2, {"a", "b"}),
      std::runtime_error);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  auto dir = testutil::scratch_dir("ckpt");
  auto m = init_model(7, 9, 4, 0.3, 21);
  FeatureEncoder enc;
  enc.weight = Matrix::Random(5, 4);
  enc.bias = RowVec::Random(4);
  m.feature_encoder = enc;
  CheckpointMeta meta{987654321u, 17u};
  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(m, meta, path);
  CheckpointMeta got;
  auto back = load_checkpoint(path, &got);
  EXPECT_EQ(got.seed, meta.seed);
  EXPECT_EQ(got.epoch, meta.epoch);
  EXPECT_TRUE((back.users.array() == m.users.array()).all());
  EXPECT_TRUE((back.items.array() == m.items.array()).all());
  ASSERT_TRUE(back.feature_encoder.has_value());
  EXPECT_TRUE((back.feature_encoder->weight.array() ==
               m.feature_encoder->weight.array())
                  .all());
  EXPECT_TRUE((back.feature_encoder->bias.array() ==
               m.feature_encoder->bias.array())
                  .all());
  // Same bytes when saved again.
  save_checkpoint(back, got, (dir / "again.ckpt").string());
  EXPECT_EQ(testutil::read_file(dir / "model.ckpt"),
            testutil::read_file(dir / "again.ckpt"));
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
  auto dir = testutil::scratch_dir("ckpt_bad");
  testutil::write_file(dir / "not_a_ckpt.bin", "hello world, not a model");
  EXPECT_THROW(load_checkpoint((dir / "not_a_ckpt.bin").string()),
               std::runtime_error);
  auto m = init_model(3, 3, 2, 0.1, 1);
  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(m, CheckpointMeta{}, path);
  std::string bytes = testutil::read_file(dir / "model.ckpt");
  testutil::write_file(dir / "trunc.ckpt", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint((dir / "trunc.ckpt").string()),
               std::runtime_error);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"),
               std::runtime_error);
}

}  // namespace
}  // namespace simpdo
