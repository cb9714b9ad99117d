#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "lara/error.hpp"
#include "lara/learner.hpp"

using namespace lara;

namespace {

struct Blobs {
  RowMatrix x;
  std::vector<int> y;
};

Blobs blobs(std::uint64_t seed, int n_per_class, double sep = 3.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Blobs b{RowMatrix(2 * n_per_class, 2), {}};
  for (int i = 0; i < 2 * n_per_class; ++i) {
    const int y = i % 2;
    b.x(i, 0) = (y ? sep : -sep) + n01(rng);
    b.x(i, 1) = (y ? sep : -sep) + n01(rng);
    b.y.push_back(y);
  }
  return b;
}

double train_log_loss_after(const Blobs& b, int stages) {
  LearnerConfig cfg;
  cfg.n_estimators = stages;
  const auto p = fit(b.x, b.y, cfg);
  return mean_log_loss(p->predict_proba(b.x), b.y);
}

}  // namespace

TEST(Learner, ConfigValidate) {
  LearnerConfig c;
  c.n_estimators = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.max_depth = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Learner, SingleClassIsConstant) {
  RowMatrix x = RowMatrix::Random(30, 3);
  const std::vector<int> ones(30, 1);
  const auto p = fit(x, ones, LearnerConfig{});
  EXPECT_TRUE(p->degenerate());
  const auto out = p->predict_proba(RowMatrix::Random(10, 3));
  for (double v : out) {
    EXPECT_GE(v, 0.9);
    EXPECT_EQ(v, out[0]);
  }
}

TEST(Learner, SeparableBlobsTrainAccuracy) {
  const auto b = blobs(1, 200, 1.5);
  const auto p = fit(b.x, b.y, LearnerConfig{});
  const auto probs = p->predict_proba(b.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) correct += (probs[i] > 0.5) == (b.y[i] == 1);
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(probs.size()), 0.95);
}

TEST(Learner, Centroids) {
  const auto b = blobs(2, 200, 1.5);
  const auto p = fit(b.x, b.y, LearnerConfig{});
  RowMatrix c(2, 2);
  c << 1.5, 1.5, -1.5, -1.5;
  const auto out = p->predict_proba(c);
  EXPECT_GT(out[0], 0.5);
  EXPECT_LT(out[1], 0.5);
}

TEST(Learner, Deterministic) {
  const auto b = blobs(3, 150, 1.0);
  const auto a = fit(b.x, b.y, LearnerConfig{})->predict_proba(b.x);
  const auto c = fit(b.x, b.y, LearnerConfig{})->predict_proba(b.x);
  EXPECT_EQ(a, c);
}

TEST(Learner, EmptyAndMismatched) {
  const auto b = blobs(4, 50);
  const auto p = fit(b.x, b.y, LearnerConfig{});
  EXPECT_TRUE(p->predict_proba(RowMatrix(0, 2)).empty());
  EXPECT_THROW(p->predict_proba(RowMatrix::Zero(3, 5)), DimensionError);
  const std::vector<int> short_y(3, 0);
  EXPECT_THROW(fit(b.x, short_y, LearnerConfig{}), DimensionError);
}

TEST(Learner, SampleLoss) {
  EXPECT_LT(sample_loss(1.0, 1.0), 1e-6);
  EXPECT_NEAR(sample_loss(0.5, 1.0), std::log(2.0), 1e-12);
  EXPECT_NEAR(sample_loss(0.5, 0.0), std::log(2.0), 1e-12);
  EXPECT_NEAR(sample_loss(0.9, 0.0), std::log(10.0), 1e-12);
  EXPECT_TRUE(std::isfinite(sample_loss(0.0, 1.0)));
  double prev = sample_loss(1e-7, 1.0);
  for (double p = 1e-3; p < 1.0; p += 1e-3) {
    const double l = sample_loss(p, 1.0);
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(Learner, TrainingLossNonIncreasing) {
  const auto b = blobs(5, 200, 0.6);
  double prev = train_log_loss_after(b, 1);
  for (int stages = 2; stages <= 40; ++stages) {
    const double cur = train_log_loss_after(b, stages);
    EXPECT_LE(cur, prev + 1e-12) << "stage " << stages;
    prev = cur;
  }
}

TEST(Learner, RowPermutationInvariant) {
  const auto b = blobs(6, 150, 0.8);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(b.x.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(7));
  RowMatrix px(b.x.rows(), b.x.cols());
  std::vector<int> py(b.y.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    px.row(static_cast<Eigen::Index>(i)) = b.x.row(perm[i]);
    py[i] = b.y[static_cast<std::size_t>(perm[i])];
  }
  const auto grid = blobs(8, 100, 1.0).x;
  EXPECT_EQ(fit(b.x, b.y, LearnerConfig{})->predict_proba(grid), fit(px, py, LearnerConfig{})->predict_proba(grid));
}

TEST(Learner, DumpRoundTrip) {
  const auto b = blobs(9, 100, 0.7);
  const auto p = fit(b.x, b.y, LearnerConfig{});
  std::stringstream ss;
  p->write(ss);
  const auto back = read_predictor(ss);
  EXPECT_EQ(back->predict_proba(b.x), p->predict_proba(b.x));
  std::stringstream again;
  back->write(again);
  std::stringstream first;
  p->write(first);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Learner, ReadRejectsGarbage) {
  std::stringstream ss("not a model\n");
  EXPECT_THROW(read_predictor(ss), DataError);
}

TEST(Learner, MinSamplesLeafRespected) {
  const auto b = blobs(10, 100, 0.3);
  LearnerConfig cfg;
  cfg.min_samples_leaf = 60;
  cfg.max_depth = 6;
  const auto p = std::dynamic_pointer_cast<const GbdtPredictor>(fit(b.x, b.y, cfg));
  ASSERT_TRUE(p);
  for (const auto& tree : p->trees()) {
    // 200 rows with >= 60 per leaf admits at most 3 leaves.
    std::size_t leaves = 0;
    for (const auto& node : tree) leaves += node.feature < 0 ? 1 : 0;
    EXPECT_LE(leaves, 3u);
  }
}
