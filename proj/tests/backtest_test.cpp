#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "lara/backtest.hpp"
#include "lara/error.hpp"

using namespace lara;

namespace {

constexpr std::int64_t kDay = 86'400'000;

// Ten long trades over six trading days, two entries per day and none on
// the last. Expected values come from tests/oracles/backtest_fixture.py
// (exact rationals, 50-digit powers and roots).
struct Fixture {
  std::vector<double> prices{100, 101, 100.5, 102, 101, 101.5, 103, 102, 102.2, 104, 103.5};
  std::vector<std::int64_t> ts;
  std::vector<TradeSignal> signals;
  Fixture() {
    for (std::size_t i = 0; i < prices.size(); ++i) ts.push_back(static_cast<std::int64_t>(i / 2) * kDay + 1000 * static_cast<std::int64_t>(i));
    for (std::size_t i = 0; i < 10; ++i) signals.push_back({i, Side::Long, 0.9});
  }
  BacktestReport report() const {
    const auto sim = simulate(signals, prices, 1);
    return make_report(core_metrics(sim.trades, 1e-3), daily_returns(sim.trades, ts, ts), 0.0);
  }
};

void expect_rel(const MaybeMetric& got, double want) {
  ASSERT_TRUE(got.has_value());
  EXPECT_LE(std::abs(*got - want), 1e-12 * std::abs(want)) << *got << " vs " << want;
}

}  // namespace

TEST(Backtest, TopN) {
  const std::vector<double> p{0.9, 0.8, 0.95};
  const auto s = top_n_signals(p, 2, Side::Long);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].record_index, 2u);
  EXPECT_EQ(s[1].record_index, 0u);
  EXPECT_EQ(top_n_signals(p, 1000, Side::Long).size(), 3u);
  const std::vector<double> tie{0.5, 0.5};
  EXPECT_EQ(top_n_signals(tie, 1, Side::Long)[0].record_index, 0u);
  EXPECT_THROW(top_n_signals(p, 0, Side::Long), ConfigError);
}

TEST(Backtest, TopNStableUnderLowerAppends) {
  std::vector<double> p{0.4, 0.9, 0.7, 0.8};
  const auto before = top_n_signals(p, 3, Side::Long);
  p.insert(p.end(), {0.1, 0.2, 0.05});
  const auto after = top_n_signals(p, 3, Side::Long);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(before[i].record_index, after[i].record_index);
}

TEST(Backtest, SimulateExamples) {
  const std::vector<double> prices{100, 100.2, 99.8};
  const std::vector<TradeSignal> longs{{0, Side::Long, 1.0}};
  EXPECT_NEAR(simulate(longs, prices, 1).trades[0].ret, 0.002, 1e-15);
  const std::vector<double> down{100, 99.8};
  const std::vector<TradeSignal> shorts{{0, Side::Short, 1.0}};
  EXPECT_DOUBLE_EQ(simulate(shorts, down, 1).trades[0].ret, 100.0 / 99.8 - 1.0);
  const std::vector<TradeSignal> last{{2, Side::Long, 1.0}};
  const auto r = simulate(last, prices, 1);
  EXPECT_TRUE(r.trades.empty());
  EXPECT_EQ(r.dropped, 1u);
}

TEST(Backtest, CoreExamples) {
  std::vector<Trade> trades;
  for (double r : {0.002, -0.001, 0.004}) trades.push_back({0, Side::Long, 1.0, 1.0 + r, r});
  const auto c = core_metrics(trades, 0.001);
  EXPECT_DOUBLE_EQ(*c.precision, 2.0 / 3.0);
  EXPECT_NEAR(*c.win_loss_ratio, 3.0, 1e-12);
  EXPECT_NEAR(*c.average_return, 0.005 / 3.0, 1e-15);
  EXPECT_EQ(c.n_transactions, 3u);

  trades.erase(trades.begin() + 1);
  EXPECT_FALSE(core_metrics(trades, 0.001).win_loss_ratio.has_value());

  const auto none = core_metrics({}, 0.001);
  EXPECT_EQ(none.n_transactions, 0u);
  EXPECT_FALSE(none.precision.has_value());
  EXPECT_FALSE(none.average_return.has_value());
}

TEST(Backtest, PrecisionMatchesRecount) {
  Fixture f;
  const auto sim = simulate(f.signals, f.prices, 1);
  for (double lam : {0.0, 0.001, 0.005, 0.01, 0.02}) {
    std::size_t hits = 0;
    for (const auto& t : sim.trades) hits += t.ret > lam ? 1 : 0;
    EXPECT_EQ(*core_metrics(sim.trades, lam).precision, static_cast<double>(hits) / 10.0);
  }
}

TEST(Backtest, FinancialExamples) {
  std::vector<double> flat(250, 0.0);
  EXPECT_NEAR(financial_metrics(flat, 0.1).annual_return, 0.1, 1e-12);
  const std::vector<double> two{0.2, -0.25};
  EXPECT_NEAR(financial_metrics(two, compound(two)).max_drawdown, -0.25, 1e-15);
  const auto zero = financial_metrics(flat, 0.0);
  EXPECT_EQ(zero.annual_volatility, 0.0);
  EXPECT_FALSE(zero.sharpe_ratio.has_value());
  EXPECT_EQ(zero.winning_percentage, 0.0);
  EXPECT_EQ(zero.max_drawdown, 0.0);
  EXPECT_THROW(financial_metrics({}, 0.0), InsufficientDataError);
}

TEST(Backtest, DrawdownScaleInvariant) {
  // Scaling the equity curve by c leaves every ratio peak/equity unchanged;
  // only the first day's return moves.
  const std::vector<double> a{0.1, -0.2, 0.05, -0.1, 0.3};
  std::vector<double> b = a;
  b[0] = 3.0 * (1.0 + a[0]) - 1.0;
  const double ma = financial_metrics(a, compound(a)).max_drawdown;
  const double mb = financial_metrics(b, compound(b)).max_drawdown;
  EXPECT_NEAR(ma, mb, 1e-15);
  EXPECT_LE(ma, 0.0);
}

TEST(Backtest, DailyReturnsEqualWeight) {
  Fixture f;
  const auto sim = simulate(f.signals, f.prices, 1);
  const auto d = daily_returns(sim.trades, f.ts, f.ts);
  ASSERT_EQ(d.size(), 6u);
  EXPECT_NEAR(d[0], 0.5 * (0.01 + (100.5 / 101.0 - 1.0)), 1e-15);
  EXPECT_EQ(d[5], 0.0);
}

TEST(Backtest, TenTradeFixture) {
  const auto r = Fixture().report();
  EXPECT_EQ(r.n_transactions, 10u);
  expect_rel(r.precision, 0.6);
  expect_rel(r.win_loss_ratio, 1.4628321151430376991);
  expect_rel(r.average_return, 0.0034956655292648659522);
  expect_rel(r.annual_return, 1.064353062460963256);
  expect_rel(r.winning_percentage, 0.66666666666666666667);
  expect_rel(r.annual_volatility, 0.069318582988464196204);
  expect_rel(r.max_drawdown, -0.0038739767751760898534);
  expect_rel(r.sharpe_ratio, 10.506037782846426581);
}

TEST(Backtest, NoLossFixtureLeavesWlrUndefined) {
  Fixture f;
  f.prices = {100, 101, 102, 103, 104, 105, 106, 107, 108, 109, 110};
  const auto r = f.report();
  EXPECT_FALSE(r.win_loss_ratio.has_value());
  std::stringstream ss;
  write_report(r, ss);
  EXPECT_NE(ss.str().find("wlr: undefined\n"), std::string::npos);
}

TEST(Backtest, ReportRoundTrip) {
  const auto r = Fixture().report();
  std::stringstream ss;
  write_report(r, ss);
  EXPECT_EQ(parse_report(ss), r);
  const auto path = std::filesystem::temp_directory_path() / "lara_report_rt.txt";
  emit_report(r, path);
  EXPECT_EQ(load_report(path), r);
}

TEST(Backtest, ReportKeyOrder) {
  std::stringstream ss;
  write_report(BacktestReport{}, ss);
  EXPECT_EQ(ss.str(),
            "precision: undefined\nwlr: undefined\navg_return: undefined\nn_transactions: 0\nar: undefined\n"
            "wp: undefined\nav: undefined\nmdd: undefined\nsr: undefined\n");
}

TEST(Backtest, ReportMissingDirectory) {
  try {
    emit_report(BacktestReport{}, "/nonexistent-dir/report.txt");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/report.txt"), std::string::npos);
  }
}

TEST(Backtest, ParseRejectsMissingField) {
  std::stringstream ss("precision: 0.5\n");
  EXPECT_THROW(parse_report(ss), SchemaError);
}
