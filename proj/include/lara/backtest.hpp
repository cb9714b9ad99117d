#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace lara {

enum class Side { Long, Short };

struct TradeSignal {
  std::size_t record_index = 0;
  Side side = Side::Long;
  double probability = 0.0;
};

struct Trade {
  std::size_t entry_index = 0;
  Side side = Side::Long;
  double entry_price = 0.0;
  double exit_price = 0.0;
  double ret = 0.0;  // Long: exit / entry - 1; Short: entry / exit - 1
};

struct SimulationResult {
  std::vector<Trade> trades;
  std::size_t dropped = 0;  // signals whose exit falls past the price series
};

/// A metric that may be undefined (no losing trades, zero volatility, no
/// trades at all).
using MaybeMetric = std::optional<double>;

struct CoreMetrics {
  MaybeMetric precision;
  MaybeMetric win_loss_ratio;
  MaybeMetric average_return;
  std::size_t n_transactions = 0;
};

struct FinancialMetrics {
  double annual_return = 0.0;
  double winning_percentage = 0.0;
  double annual_volatility = 0.0;
  double max_drawdown = 0.0;  // <= 0
  MaybeMetric sharpe_ratio;
};

struct BacktestReport {
  MaybeMetric precision;
  MaybeMetric win_loss_ratio;  // also the profit factor
  MaybeMetric average_return;
  std::size_t n_transactions = 0;
  MaybeMetric annual_return;
  MaybeMetric winning_percentage;
  MaybeMetric annual_volatility;
  MaybeMetric max_drawdown;
  MaybeMetric sharpe_ratio;

  bool operator==(const BacktestReport&) const = default;
};

inline constexpr int kTradingDaysPerYear = 250;
inline constexpr std::int64_t kMillisPerDay = 86'400'000;

/// The min(n, |probs|) most probable indices, probability descending, ties
/// to the earlier index.
std::vector<TradeSignal> top_n_signals(std::span<const double> probs, std::size_t n, Side side);

/// Opens at prices[i] and closes at prices[i + horizon]. No position limit,
/// no costs.
SimulationResult simulate(std::span<const TradeSignal> signals, std::span<const double> prices, int horizon);

/// A trade is a true positive when its return clears `profit_threshold`.
CoreMetrics core_metrics(std::span<const Trade> trades, double profit_threshold);

/// Annualized statistics over `daily_returns` (l = its length).
FinancialMetrics financial_metrics(std::span<const double> daily_returns, double total_return,
                                   double risk_free = 0.0);

/// Equal-weight daily portfolio: one entry per distinct day in
/// `window_timestamps`, holding the mean return of trades entered that day
/// (0 when none). `entry_timestamps` is indexed by Trade::entry_index.
std::vector<double> daily_returns(std::span<const Trade> trades, std::span<const std::int64_t> entry_timestamps,
                                  std::span<const std::int64_t> window_timestamps,
                                  std::int64_t day_ms = kMillisPerDay);

/// prod(1 + r) - 1.
double compound(std::span<const double> returns);

/// Assembles the full report. Financial fields are undefined when there are
/// no days in the window.
BacktestReport make_report(const CoreMetrics& core, std::span<const double> daily, double risk_free = 0.0);

/// Fraction of signals whose record carries label 1 (for label-only
/// workloads without meaningful prices).
MaybeMetric label_precision(std::span<const TradeSignal> signals, std::span<const int> labels);

/// `key: value` lines in a fixed order; undefined values print as
/// `undefined`.
void write_report(const BacktestReport& report, std::ostream& out);
BacktestReport parse_report(std::istream& in);
void emit_report(const BacktestReport& report, const std::filesystem::path& path);
BacktestReport load_report(const std::filesystem::path& path);

}  // namespace lara
