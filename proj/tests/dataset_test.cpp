#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "lara/dataset.hpp"
#include "lara/error.hpp"

namespace fs = std::filesystem;
using namespace lara;

namespace {

fs::path temp_file(const std::string& name, const std::string& body) {
  const auto path = fs::temp_directory_path() / ("lara_dataset_" + name);
  std::ofstream(path) << body;
  return path;
}

Dataset prices_only(std::vector<double> prices) {
  std::vector<std::int64_t> ts(prices.size());
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = static_cast<std::int64_t>(i) * 1000;
  RowMatrix f = RowMatrix::Zero(static_cast<Eigen::Index>(prices.size()), 1);
  return Dataset(ts, std::move(prices), f);
}

Dataset ten_records() {
  std::vector<std::int64_t> ts;
  std::vector<double> prices;
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) {
    ts.push_back(i);
    prices.push_back(100.0 + i);
    labels.push_back(i % 2);
  }
  RowMatrix f(10, 1);
  for (int i = 0; i < 10; ++i) f(i, 0) = i;
  return Dataset(ts, prices, f, labels);
}

// 300 positives among 1000, interleaved so index order is not class order.
std::vector<int> three_in_ten() {
  std::vector<int> out(1000);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i % 10 < 3 ? 1 : 0;
  return out;
}

}  // namespace

TEST(Dataset, ConstructorRejectsBadInput) {
  RowMatrix f(2, 1);
  f << 1.0, 2.0;
  EXPECT_THROW(Dataset({1, 0}, {1.0, 1.0}, f), OrderError);
  EXPECT_THROW(Dataset({0, 1}, {1.0, 0.0}, f), DataError);
  EXPECT_THROW(Dataset({0, 1}, {1.0, 1.0}, f, std::vector<int>{0, 2}), DataError);
  EXPECT_THROW(Dataset({0, 1}, {1.0, 1.0}, f, std::vector<int>{0}), DataError);
  f(1, 0) = std::nan("");
  EXPECT_THROW(Dataset({0, 1}, {1.0, 1.0}, f), DataError);
}

TEST(Dataset, LoadCsvWellFormed) {
  const auto path = temp_file("ok.csv", "timestamp,price,f0,f1\n0,100,1.5,2\n1000,101,-3,4e-2\n");
  const auto ds = load_csv(path, 2);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.dim(), 2);
  EXPECT_DOUBLE_EQ(ds.features()(1, 1), 0.04);
  EXPECT_FALSE(ds.has_labels());
  EXPECT_EQ(load_csv(path).dim(), 2);
}

TEST(Dataset, LoadCsvFortyFeatures) {
  std::string body = "timestamp,price";
  for (int j = 0; j < 40; ++j) body += ",f" + std::to_string(j);
  body += "\n";
  for (int i = 0; i < 3; ++i) {
    body += std::to_string(i) + ",10";
    for (int j = 0; j < 40; ++j) body += "," + std::to_string(j * 0.5);
    body += "\n";
  }
  EXPECT_EQ(load_csv(temp_file("wide.csv", body), 40).dim(), 40);
}

TEST(Dataset, LoadCsvErrors) {
  EXPECT_THROW(load_csv(temp_file("noprice.csv", "timestamp,f0\n0,1\n"), 1), SchemaError);
  EXPECT_THROW(load_csv(temp_file("nofeat.csv", "timestamp,price,f0\n0,1,2\n"), 2), SchemaError);
  try {
    load_csv(temp_file("bad.csv", "timestamp,price,f0\n0,1,2\n1,1,abc\n"), 1);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
  EXPECT_THROW(load_csv(temp_file("order.csv", "timestamp,price,f0\n5,1,2\n1,1,3\n"), 1), OrderError);
  EXPECT_THROW(load_csv("/nonexistent/lara.csv", 1), IoError);
}

TEST(Dataset, CsvRoundTrip) {
  const auto ds = synth_gaussian(5, {-2, 2}, {2, -2}, 8.0, 3);
  const auto path = fs::temp_directory_path() / "lara_dataset_rt.csv";
  save_csv(ds, path);
  const auto back = load_csv(path);
  EXPECT_EQ(back.labels(), ds.labels());
  EXPECT_EQ(back.features(), ds.features());
  EXPECT_EQ(back.timestamps(), ds.timestamps());
}

TEST(Dataset, LabelExamples) {
  LabelSpec spec;
  spec.mode = LabelMode::Magnitude;
  EXPECT_EQ(generate_labels(prices_only({100, 100.2}), spec).labels(), std::vector<int>{1});
  spec.mode = LabelMode::Long;
  EXPECT_EQ(generate_labels(prices_only({100, 99.8}), spec).labels(), std::vector<int>{0});
  spec.mode = LabelMode::Short;
  EXPECT_EQ(generate_labels(prices_only({100, 99.8}), spec).labels(), std::vector<int>{1});
  spec.mode = LabelMode::Magnitude;
  EXPECT_EQ(generate_labels(prices_only({100, 99.8}), spec).labels(), std::vector<int>{1});
}

TEST(Dataset, LabelDropsTrailingHorizon) {
  LabelSpec spec;
  spec.horizon_steps = 3;
  const auto out = generate_labels(prices_only({1, 2, 3, 4, 5, 6}), spec);
  EXPECT_EQ(out.size(), 3u);
  EXPECT_THROW(generate_labels(prices_only({1, 2, 3}), spec), InsufficientDataError);
}

TEST(Dataset, LabelSpecValidation) {
  LabelSpec spec;
  spec.horizon_steps = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.horizon_steps = 1;
  spec.threshold = 0.0;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Dataset, LabelsInvariantUnderPriceScale) {
  std::vector<double> prices;
  double p = 100.0;
  for (int i = 0; i < 200; ++i) {
    p *= 1.0 + 0.003 * std::sin(i * 1.7);
    prices.push_back(p);
  }
  std::vector<double> scaled = prices;
  for (auto& v : scaled) v *= 4.0;  // power of two keeps ratios exact
  LabelSpec spec;
  EXPECT_EQ(generate_labels(prices_only(prices), spec).labels(), generate_labels(prices_only(scaled), spec).labels());
}

TEST(Dataset, LabelsOnNoisyPricesAreMinority) {
  std::vector<double> prices;
  double p = 100.0;
  for (int i = 0; i < 2000; ++i) {
    p *= 1.0 + 0.0008 * std::sin(i * 12.9898) * std::cos(i * 78.233);
    prices.push_back(p);
  }
  LabelSpec spec;
  spec.mode = LabelMode::Long;
  EXPECT_LT(generate_labels(prices_only(prices), spec).positive_ratio(), 0.5);
}

TEST(Dataset, SplitCounts) {
  const auto ds = ten_records();
  auto parts = chronological_split(ds, {5, 7});
  EXPECT_EQ(parts.train.size(), 6u);
  EXPECT_EQ(parts.valid.size(), 2u);
  EXPECT_EQ(parts.test.size(), 2u);
  EXPECT_TRUE(parts.warnings.empty());

  parts = chronological_split(ds, {-10, -5});
  EXPECT_EQ(parts.train.size(), 0u);
  EXPECT_EQ(parts.valid.size(), 0u);
  EXPECT_EQ(parts.test.size(), 10u);
  EXPECT_EQ(parts.warnings.size(), 2u);

  EXPECT_THROW(chronological_split(ds, {7, 7}), ConfigError);
}

TEST(Dataset, SplitConcatenationEqualsInput) {
  const auto ds = ten_records();
  const auto parts = chronological_split(ds, {3, 6});
  std::vector<std::int64_t> ts;
  for (const auto* part : {&parts.train, &parts.valid, &parts.test}) {
    ts.insert(ts.end(), part->timestamps().begin(), part->timestamps().end());
  }
  EXPECT_EQ(ts, ds.timestamps());
}

TEST(Dataset, SplitEtfCalendar) {
  // 2020-01-02 .. 2020-07-06, one record per day
  const std::int64_t day = 86'400'000;
  const std::int64_t start = 1'577'923'200'000;  // 2020-01-02
  std::vector<std::int64_t> ts;
  for (std::int64_t t = start; t <= 1'594'000'000'000; t += day) ts.push_back(t);
  RowMatrix f = RowMatrix::Zero(static_cast<Eigen::Index>(ts.size()), 1);
  const Dataset ds(ts, std::vector<double>(ts.size(), 1.0), f);
  // training through 2020-04-17, validation through 2020-05-31
  const auto parts = chronological_split(ds, {1'587'081'600'000, 1'590'883'200'000});
  EXPECT_GT(parts.train.size(), 0u);
  EXPECT_GT(parts.valid.size(), 0u);
  EXPECT_GT(parts.test.size(), 0u);
}

TEST(Dataset, SynthGaussianCounts) {
  const auto ds = synth_gaussian(400, {-2, 2}, {2, -2}, 8.0, 1);
  EXPECT_EQ(ds.size(), 800u);
  EXPECT_EQ(ds.count_positive(), 400u);
  const auto tiny = synth_gaussian(1, {-2, 2}, {2, -2}, 8.0, 1);
  EXPECT_EQ(tiny.labels(), (std::vector<int>{1, 0}));
  EXPECT_THROW(synth_gaussian(1, {0, 0}, {0, 0}, 0.0, 1), ParameterError);
}

TEST(Dataset, SynthGaussianMeans) {
  const int n = 10000;
  const double cov = 8.0;
  const auto ds = synth_gaussian(n, {-2, 2}, {2, -2}, cov, 11);
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels()[i] == 1) {
      sx += ds.features()(static_cast<Eigen::Index>(i), 0);
      sy += ds.features()(static_cast<Eigen::Index>(i), 1);
    }
  }
  const double tol = 4.0 * std::sqrt(cov / n);
  EXPECT_NEAR(sx / n, -2.0, tol);
  EXPECT_NEAR(sy / n, 2.0, tol);
}

TEST(Dataset, SynthGaussianReproducible) {
  const auto a = synth_gaussian(50, {-2, 2}, {2, -2}, 8.0, 5);
  const auto b = synth_gaussian(50, {-2, 2}, {2, -2}, 8.0, 5);
  const auto c = synth_gaussian(50, {-2, 2}, {2, -2}, 8.0, 6);
  EXPECT_EQ(a.features(), b.features());
  EXPECT_NE(a.features(), c.features());
}

TEST(Dataset, SynthCorrelatedShape) {
  CorrelatedNoiseSpec spec;
  spec.n = 5000;
  const auto ds = synth_correlated(spec, 1);
  EXPECT_EQ(ds.size(), 5000u);
  EXPECT_EQ(ds.dim(), spec.signal_dims + spec.noise_dims);
  EXPECT_NEAR(ds.positive_ratio(), 0.2, 0.03);
  spec.noise_corr = 1.5;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Dataset, BalanceMinRule) {
  const auto labels = three_in_ten();
  const auto idx = balanced_indices(labels, 1);
  std::size_t pos = 0;
  for (auto i : idx) pos += labels[i];
  EXPECT_EQ(idx.size(), 600u);
  EXPECT_EQ(pos, 300u);
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), idx.size());
}

TEST(Dataset, BalanceSeedsDiffer) {
  const auto labels = three_in_ten();
  EXPECT_NE(balanced_indices(labels, 1), balanced_indices(labels, 2));
  EXPECT_EQ(balanced_indices(labels, 1).size(), balanced_indices(labels, 2).size());
}

TEST(Dataset, BalanceNoOpAndMissingClass) {
  std::vector<int> half(100);
  for (int i = 0; i < 100; ++i) half[static_cast<std::size_t>(i)] = i % 2;
  const auto idx = balanced_indices(half, 9);
  EXPECT_EQ(idx.size(), 100u);
  const std::vector<int> ones(5, 1);
  EXPECT_THROW(balanced_indices(ones, 1), ClassMissingError);
}
