#include "lara/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "lara/error.hpp"

namespace lara {

namespace {

std::int64_t day_of(std::int64_t ts, std::int64_t day_ms) {
  std::int64_t q = ts / day_ms;
  if (ts % day_ms != 0 && ts < 0) --q;
  return q;
}

void write_field(std::ostream& out, const char* key, const MaybeMetric& value) {
  out << key << ": ";
  if (value) {
    out << *value;
  } else {
    out << "undefined";
  }
  out << '\n';
}

MaybeMetric parse_value(const std::string& key, const std::string& text) {
  if (text == "undefined") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("report field '" + key + "': cannot parse '" + text + "'");
  }
}

}  // namespace

std::vector<TradeSignal> top_n_signals(std::span<const double> probs, std::size_t n, Side side) {
  if (n < 1) throw ParameterError("top-N needs n >= 1");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(n, probs.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) { return probs[a] > probs[b] || (probs[a] == probs[b] && a < b); });
  std::vector<TradeSignal> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({order[i], side, probs[order[i]]});
  return out;
}

SimulationResult simulate(std::span<const TradeSignal> signals, std::span<const double> prices, int horizon) {
  if (horizon < 1) throw ParameterError("holding horizon must be >= 1");
  SimulationResult out;
  const auto h = static_cast<std::size_t>(horizon);
  for (const auto& s : signals) {
    if (s.record_index + h >= prices.size()) {
      ++out.dropped;
      continue;
    }
    const double entry = prices[s.record_index];
    const double exit = prices[s.record_index + h];
    if (!(entry > 0.0) || !(exit > 0.0)) throw DataError("simulate: prices must be positive");
    const double ret = s.side == Side::Long ? exit / entry - 1.0 : entry / exit - 1.0;
    out.trades.push_back({s.record_index, s.side, entry, exit, ret});
  }
  return out;
}

CoreMetrics core_metrics(std::span<const Trade> trades, double profit_threshold) {
  CoreMetrics out;
  out.n_transactions = trades.size();
  if (trades.empty()) return out;

  std::size_t hits = 0;
  double total = 0.0;
  double win_sum = 0.0;
  double loss_sum = 0.0;
  std::size_t wins = 0;
  std::size_t losses = 0;
  for (const auto& t : trades) {
    if (t.ret > profit_threshold) ++hits;
    total += t.ret;
    if (t.ret > 0.0) {
      win_sum += t.ret;
      ++wins;
    } else if (t.ret < 0.0) {
      loss_sum += t.ret;
      ++losses;
    }
  }
  const auto n = static_cast<double>(trades.size());
  out.precision = static_cast<double>(hits) / n;
  out.average_return = total / n;
  if (losses > 0) {
    const double mean_win = wins > 0 ? win_sum / static_cast<double>(wins) : 0.0;
    out.win_loss_ratio = mean_win / std::abs(loss_sum / static_cast<double>(losses));
  }
  return out;
}

FinancialMetrics financial_metrics(std::span<const double> daily_returns, double total_return, double risk_free) {
  if (daily_returns.empty()) throw InsufficientDataError("financial metrics need at least one day");
  const auto l = static_cast<double>(daily_returns.size());
  FinancialMetrics out;
  out.annual_return = std::pow(1.0 + total_return, kTradingDaysPerYear / l) - 1.0;

  std::size_t winning_days = 0;
  double sum = 0.0;
  for (double r : daily_returns) {
    if (r > 0.0) ++winning_days;
    sum += r;
  }
  out.winning_percentage = static_cast<double>(winning_days) / l;
  const double mean = sum / l;
  double sq = 0.0;
  for (double r : daily_returns) sq += (r - mean) * (r - mean);
  out.annual_volatility = std::sqrt(static_cast<double>(kTradingDaysPerYear)) * std::sqrt(sq / l);

  double equity = 1.0;
  double peak = 1.0;
  double worst = 0.0;
  for (double r : daily_returns) {
    equity *= 1.0 + r;
    peak = std::max(peak, equity);
    worst = std::max(worst, (peak - equity) / peak);
  }
  out.max_drawdown = worst > 0.0 ? -worst : 0.0;

  if (out.annual_volatility > 0.0) {
    out.sharpe_ratio = (mean * kTradingDaysPerYear - risk_free) / out.annual_volatility;
  }
  return out;
}

std::vector<double> daily_returns(std::span<const Trade> trades, std::span<const std::int64_t> entry_timestamps,
                                  std::span<const std::int64_t> window_timestamps, std::int64_t day_ms) {
  if (day_ms < 1) throw ParameterError("day length must be >= 1 ms");
  std::map<std::int64_t, std::pair<double, std::size_t>> by_day;
  for (std::int64_t ts : window_timestamps) by_day.try_emplace(day_of(ts, day_ms), 0.0, 0);
  for (const auto& t : trades) {
    if (t.entry_index >= entry_timestamps.size()) throw DimensionError("trade entry index outside timestamp range");
    auto& slot = by_day[day_of(entry_timestamps[t.entry_index], day_ms)];
    slot.first += t.ret;
    ++slot.second;
  }
  std::vector<double> out;
  out.reserve(by_day.size());
  for (const auto& [day, acc] : by_day) {
    out.push_back(acc.second > 0 ? acc.first / static_cast<double>(acc.second) : 0.0);
  }
  return out;
}

double compound(std::span<const double> returns) {
  double equity = 1.0;
  for (double r : returns) equity *= 1.0 + r;
  return equity - 1.0;
}

BacktestReport make_report(const CoreMetrics& core, std::span<const double> daily, double risk_free) {
  BacktestReport report;
  report.precision = core.precision;
  report.win_loss_ratio = core.win_loss_ratio;
  report.average_return = core.average_return;
  report.n_transactions = core.n_transactions;
  if (!daily.empty() && core.n_transactions > 0) {
    const auto fin = financial_metrics(daily, compound(daily), risk_free);
    report.annual_return = fin.annual_return;
    report.winning_percentage = fin.winning_percentage;
    report.annual_volatility = fin.annual_volatility;
    report.max_drawdown = fin.max_drawdown;
    report.sharpe_ratio = fin.sharpe_ratio;
  }
  return report;
}

MaybeMetric label_precision(std::span<const TradeSignal> signals, std::span<const int> labels) {
  if (signals.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (const auto& s : signals) {
    if (s.record_index >= labels.size()) throw DimensionError("signal index outside label range");
    hits += labels[s.record_index] == 1 ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(signals.size());
}

void write_report(const BacktestReport& report, std::ostream& out) {
  const auto old_precision = out.precision(17);
  write_field(out, "precision", report.precision);
  write_field(out, "wlr", report.win_loss_ratio);
  write_field(out, "avg_return", report.average_return);
  out << "n_transactions: " << report.n_transactions << '\n';
  write_field(out, "ar", report.annual_return);
  write_field(out, "wp", report.winning_percentage);
  write_field(out, "av", report.annual_volatility);
  write_field(out, "mdd", report.max_drawdown);
  write_field(out, "sr", report.sharpe_ratio);
  out.precision(old_precision);
}

BacktestReport parse_report(std::istream& in) {
  std::map<std::string, std::string> fields;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw SchemaError("report line without ':': " + line);
    std::string value = line.substr(colon + 1);
    value.erase(0, value.find_first_not_of(' '));
    fields[line.substr(0, colon)] = value;
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = fields.find(key);
    if (it == fields.end()) throw SchemaError("report is missing field '" + key + "'");
    return it->second;
  };
  BacktestReport r;
  r.precision = parse_value("precision", get("precision"));
  r.win_loss_ratio = parse_value("wlr", get("wlr"));
  r.average_return = parse_value("avg_return", get("avg_return"));
  try {
    r.n_transactions = static_cast<std::size_t>(std::stoull(get("n_transactions")));
  } catch (const std::logic_error&) {
    throw SchemaError("report field 'n_transactions' is not an integer");
  }
  r.annual_return = parse_value("ar", get("ar"));
  r.winning_percentage = parse_value("wp", get("wp"));
  r.annual_volatility = parse_value("av", get("av"));
  r.max_drawdown = parse_value("mdd", get("mdd"));
  r.sharpe_ratio = parse_value("sr", get("sr"));
  return r;
}

void emit_report(const BacktestReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report to " + path.string());
  write_report(report, out);
  if (!out) throw IoError("write failed for " + path.string());
}

BacktestReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_report(in);
}

}  // namespace lara
