#include "lara/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "lara/error.hpp"
#include "lara/learner.hpp"

namespace lara {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("'" + key + "' expects an integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + text + "'");
}

std::array<double, 2> parse_pair(const std::string& key, const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("'" + key + "' expects 'x,y', got '" + text + "'");
  return {parse_real(key, trim(text.substr(0, comma))), parse_real(key, trim(text.substr(comma + 1)))};
}

[[noreturn]] void bad_choice(const std::string& key, const std::string& text) {
  throw ConfigError("'" + key + "' does not accept '" + text + "'");
}

// Runs one pipeline stage, prefixing any failure with the stage name.
template <typename F>
auto stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.category(), std::string(name) + ": " + e.what());
  }
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& pipeline_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"input", "CSV path, 'synth' or 'synth-correlated'"},
      {"dim", "feature count (default: inferred from header)"},
      {"label-mode", "long | short | magnitude"},
      {"horizon", "label horizon in steps"},
      {"label-threshold", "label return threshold"},
      {"train-end", "last training timestamp (ms)"},
      {"valid-end", "last validation timestamp (ms)"},
      {"n-per-class", "synth: samples per class"},
      {"mean-pos", "synth: positive mean 'x,y'"},
      {"mean-neg", "synth: negative mean 'x,y'"},
      {"cov-scale", "synth: isotropic variance"},
      {"corr-n", "synth-correlated: training records"},
      {"corr-test-n", "synth-correlated: test records"},
      {"corr-positive-ratio", "synth-correlated: positive ratio"},
      {"no-attention", "disable sample selection"},
      {"no-metric", "use the identity metric"},
      {"no-refine", "disable label refinement (K = 0)"},
      {"metric", "sdml | identity | inverse-covariance"},
      {"balance-selected", "rebalance the selected training set before fitting"},
      {"sparsity-weight", "metric learning L1 weight"},
      {"logdet-weight", "metric learning log-det weight"},
      {"metric-max-iters", "metric learning iterations"},
      {"metric-step-size", "metric learning initial step"},
      {"metric-tol", "metric learning tolerance"},
      {"scheme", "k-neighbor | r-neighbor"},
      {"k", "neighbors per query"},
      {"radius", "R-Neighbor squared radius"},
      {"weight", "identical | reciprocal"},
      {"thres", "selection threshold on p_hat"},
      {"exclude-self", "exclude the query point in the training phase"},
      {"max-links", "ANN degree bound"},
      {"ef-construction", "ANN build beam width"},
      {"ef-search", "ANN query beam width"},
      {"iterations", "label refinement rounds K"},
      {"ratio", "label refinement ratio r"},
      {"refine-mode", "hard-flip | convex-blend"},
      {"combiner", "last | vote"},
      {"n-estimators", "boosting stages"},
      {"max-depth", "tree depth"},
      {"learning-rate", "boosting shrinkage"},
      {"min-samples-leaf", "minimum rows per leaf"},
      {"top-n", "signals retrieved for the backtest"},
      {"hold", "holding period in steps"},
      {"profit-threshold", "return a trade must clear to count as a hit"},
      {"side", "long | short"},
      {"risk-free", "annual risk-free rate"},
      {"day-ms", "milliseconds per trading day"},
      {"seed", "global seed"},
      {"out-dir", "output directory"},
  };
  return keys;
}

void PipelineConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "input") {
    input = v;
  } else if (key == "dim") {
    dim = parse_integer<int>(key, v);
  } else if (key == "label-mode") {
    if (v == "long") label.mode = LabelMode::Long;
    else if (v == "short") label.mode = LabelMode::Short;
    else if (v == "magnitude") label.mode = LabelMode::Magnitude;
    else bad_choice(key, v);
  } else if (key == "horizon") {
    label.horizon_steps = parse_integer<int>(key, v);
  } else if (key == "label-threshold") {
    label.threshold = parse_real(key, v);
  } else if (key == "train-end") {
    train_end = parse_integer<std::int64_t>(key, v);
  } else if (key == "valid-end") {
    valid_end = parse_integer<std::int64_t>(key, v);
  } else if (key == "n-per-class") {
    n_per_class = parse_integer<int>(key, v);
  } else if (key == "mean-pos") {
    mean_pos = parse_pair(key, v);
  } else if (key == "mean-neg") {
    mean_neg = parse_pair(key, v);
  } else if (key == "cov-scale") {
    cov_scale = parse_real(key, v);
  } else if (key == "corr-n") {
    correlated.n = parse_integer<int>(key, v);
  } else if (key == "corr-test-n") {
    test_records = parse_integer<int>(key, v);
  } else if (key == "corr-positive-ratio") {
    correlated.positive_ratio = parse_real(key, v);
  } else if (key == "no-attention") {
    use_attention = !parse_bool(key, v);
  } else if (key == "no-metric") {
    if (parse_bool(key, v)) metric_choice = MetricChoice::Identity;
  } else if (key == "no-refine") {
    use_refine = !parse_bool(key, v);
  } else if (key == "metric") {
    if (v == "sdml") metric_choice = MetricChoice::Sdml;
    else if (v == "identity") metric_choice = MetricChoice::Identity;
    else if (v == "inverse-covariance") metric_choice = MetricChoice::InverseCovariance;
    else bad_choice(key, v);
  } else if (key == "balance-selected") {
    balance_selected = parse_bool(key, v);
  } else if (key == "sparsity-weight") {
    metric.sparsity_weight = parse_real(key, v);
  } else if (key == "logdet-weight") {
    metric.logdet_weight = parse_real(key, v);
  } else if (key == "metric-max-iters") {
    metric.max_iters = parse_integer<int>(key, v);
  } else if (key == "metric-step-size") {
    metric.step_size = parse_real(key, v);
  } else if (key == "metric-tol") {
    metric.tol = parse_real(key, v);
  } else if (key == "scheme") {
    if (v == "k-neighbor") attention.scheme = NeighborScheme::KNeighbor;
    else if (v == "r-neighbor") attention.scheme = NeighborScheme::RNeighbor;
    else bad_choice(key, v);
  } else if (key == "k") {
    attention.k = parse_integer<int>(key, v);
  } else if (key == "radius") {
    attention.radius = parse_real(key, v);
  } else if (key == "weight") {
    if (v == "identical") attention.weight = AttentionWeight::Identical;
    else if (v == "reciprocal") attention.weight = AttentionWeight::ReciprocalDistance;
    else bad_choice(key, v);
  } else if (key == "thres") {
    attention.thres = parse_real(key, v);
  } else if (key == "exclude-self") {
    attention.exclude_self = parse_bool(key, v);
  } else if (key == "max-links") {
    ann.max_links = parse_integer<int>(key, v);
  } else if (key == "ef-construction") {
    ann.ef_construction = parse_integer<int>(key, v);
  } else if (key == "ef-search") {
    ann.ef_search = parse_integer<int>(key, v);
  } else if (key == "iterations") {
    refine.iterations = parse_integer<int>(key, v);
  } else if (key == "ratio") {
    refine.ratio = parse_real(key, v);
  } else if (key == "refine-mode") {
    if (v == "hard-flip") refine.mode = RefineMode::HardFlip;
    else if (v == "convex-blend") refine.mode = RefineMode::ConvexBlend;
    else bad_choice(key, v);
  } else if (key == "combiner") {
    if (v == "last") refine.combiner = Combiner::Last;
    else if (v == "vote") refine.combiner = Combiner::Vote;
    else bad_choice(key, v);
  } else if (key == "n-estimators") {
    refine.learner.n_estimators = parse_integer<int>(key, v);
  } else if (key == "max-depth") {
    refine.learner.max_depth = parse_integer<int>(key, v);
  } else if (key == "learning-rate") {
    refine.learner.learning_rate = parse_real(key, v);
  } else if (key == "min-samples-leaf") {
    refine.learner.min_samples_leaf = parse_integer<int>(key, v);
  } else if (key == "top-n") {
    top_n = parse_integer<std::size_t>(key, v);
  } else if (key == "hold") {
    hold = parse_integer<int>(key, v);
  } else if (key == "profit-threshold") {
    profit_threshold = parse_real(key, v);
  } else if (key == "side") {
    if (v == "long") side = Side::Long;
    else if (v == "short") side = Side::Short;
    else bad_choice(key, v);
  } else if (key == "risk-free") {
    risk_free = parse_real(key, v);
  } else if (key == "day-ms") {
    day_ms = parse_integer<std::int64_t>(key, v);
  } else if (key == "seed") {
    seed = parse_integer<std::uint64_t>(key, v);
  } else if (key == "out-dir") {
    out_dir = v;
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

void PipelineConfig::validate() const {
  if (!seed) throw ConfigError("a seed is required");
  if (input.empty()) throw ConfigError("input is empty");
  label.validate();
  if (train_end && valid_end) SplitSpec{*train_end, *valid_end}.validate();
  if (train_end.has_value() != valid_end.has_value()) {
    throw ConfigError("train-end and valid-end must be given together");
  }
  if (input == "synth") {
    if (n_per_class < 1) throw ParameterError("n-per-class must be >= 1");
    if (!(cov_scale > 0.0)) throw ParameterError("cov-scale must be > 0");
  }
  if (input == "synth-correlated") {
    correlated.validate();
    if (test_records < 1) throw ParameterError("corr-test-n must be >= 1");
  }
  metric.validate();
  attention.validate();
  ann.validate();
  refine.validate();
  if (top_n < 1) throw ParameterError("top-n must be >= 1");
  if (hold < 1) throw ParameterError("hold must be >= 1");
  if (day_ms < 1) throw ParameterError("day-ms must be >= 1");
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

PipelineConfig config_from_settings(const std::map<std::string, std::string>& settings) {
  PipelineConfig cfg;
  for (const auto& [key, value] : settings) cfg.set(key, value);
  return cfg;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  const std::uint64_t seed = *cfg.seed;
  PipelineResult result;

  Dataset train;
  Dataset test;
  stage("load", [&] {
    if (cfg.input == "synth") {
      train = synth_gaussian(cfg.n_per_class, cfg.mean_pos, cfg.mean_neg, cfg.cov_scale, seed + seed_offset::kSynthTrain);
      test = synth_gaussian(cfg.n_per_class, cfg.mean_pos, cfg.mean_neg, cfg.cov_scale, seed + seed_offset::kSynthTest);
      return;
    }
    if (cfg.input == "synth-correlated") {
      train = synth_correlated(cfg.correlated, seed + seed_offset::kSynthTrain);
      auto test_spec = cfg.correlated;
      test_spec.n = cfg.test_records;
      test = synth_correlated(test_spec, seed + seed_offset::kSynthTest);
      return;
    }
    const Dataset raw = load_csv(cfg.input, cfg.dim);
    const Dataset labeled = stage("label", [&] { return generate_labels(raw, cfg.label); });
    stage("split", [&] {
      SplitSpec split;
      if (cfg.train_end) {
        split = {*cfg.train_end, *cfg.valid_end};
      } else {
        // 60 / 20 / 20 by record count.
        const auto& ts = labeled.timestamps();
        const std::size_t n = ts.size();
        if (n < 3) throw InsufficientDataError("need at least 3 labeled records to split");
        split = {ts[std::max<std::size_t>(1, n * 6 / 10) - 1], ts[std::max<std::size_t>(2, n * 8 / 10) - 1]};
        if (split.valid_end <= split.train_end) split.valid_end = split.train_end + 1;
      }
      auto parts = chronological_split(labeled, split);
      result.warnings.insert(result.warnings.end(), parts.warnings.begin(), parts.warnings.end());
      train = std::move(parts.train);
      test = std::move(parts.test);
    });
  });
  if (train.empty()) throw DataError("split: training partition is empty");
  if (test.empty()) throw DataError("split: test partition is empty");
  result.train_records = train.size();
  result.test_records = test.size();

  const Dataset balanced = stage("balance", [&] { return balance_classes(train, seed + seed_offset::kBalance); });
  result.balanced_train_records = balanced.size();

  const MahalanobisMetric metric = stage("metric", [&] {
    switch (cfg.metric_choice) {
      case MetricChoice::Identity: return MahalanobisMetric::identity(balanced.dim());
      case MetricChoice::InverseCovariance:
        return baseline_metric(BaselineKind::InverseCovariance, balanced.dim(), &balanced);
      case MetricChoice::Sdml: break;
    }
    auto mcfg = cfg.metric;
    mcfg.seed = seed + seed_offset::kMetric;
    auto learned = learn_sdml(balanced, mcfg);
    result.metric_converged = learned.converged;
    if (!learned.converged) result.warnings.emplace_back("metric learning stopped at max_iters");
    return learned.metric;
  });

  std::optional<AnnIndex> index;
  Dataset selected_train = balanced;
  std::optional<SelectionResult> test_selection;
  if (cfg.use_attention) {
    index = stage("index", [&] {
      auto params = cfg.ann;
      params.seed = seed + seed_offset::kIndex;
      return AnnIndex::build(transform(metric, balanced.features()), params);
    });
    selected_train = stage("select-train", [&] {
      const auto sel = select_training(balanced, metric, *index, cfg.attention);
      return balanced.subset(sel.selected_ids);
    });
  }
  result.selected_train_records = selected_train.size();

  if (cfg.balance_selected && !selected_train.empty()) {
    const auto pos = selected_train.count_positive();
    if (pos > 0 && pos < selected_train.size()) {
      selected_train = balance_classes(selected_train, seed + seed_offset::kBalanceSelected);
    } else {
      result.warnings.emplace_back("selected training set has a single class; not rebalanced");
    }
  }
  if (selected_train.size() < 2) {
    throw DataError("select-train: fewer than two training samples selected");
  }

  const Ensemble ensemble = stage("refine", [&] {
    auto rcfg = cfg.refine;
    if (!cfg.use_refine) rcfg.iterations = 0;
    rcfg.learner.seed = seed + seed_offset::kLearner;
    return ra_label(selected_train.features(), selected_train.labels(), rcfg);
  });

  std::vector<std::size_t> candidates;
  if (cfg.use_attention) {
    test_selection = stage("select-test", [&] {
      return select_testing(test.features(), balanced, metric, *index, cfg.attention);
    });
    candidates = test_selection->selected_ids;
  } else {
    candidates.resize(test.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i] = i;
  }
  result.selected_test_records = candidates.size();

  const Side side = cfg.side.value_or(cfg.label.mode == LabelMode::Short ? Side::Short : Side::Long);
  result.report = stage("backtest", [&] {
    std::vector<TradeSignal> signals;
    if (!candidates.empty()) {
      const auto probs = ensemble_predict(ensemble, test.subset(candidates).features());
      signals = top_n_signals(probs, cfg.top_n, side);
      for (auto& s : signals) s.record_index = candidates[s.record_index];
    }
    const auto sim = simulate(signals, test.prices(), cfg.hold);
    const auto core = core_metrics(sim.trades, cfg.profit_threshold.value_or(cfg.label.threshold));
    const auto daily = daily_returns(sim.trades, test.timestamps(), test.timestamps(), cfg.day_ms);
    auto report = make_report(core, daily, cfg.risk_free);
    if (cfg.synthetic()) {
      // Synthetic prices are flat; hits are read from the labels instead.
      report.precision = label_precision(signals, test.labels());
      report.n_transactions = signals.size();
    } else if (sim.dropped > 0) {
      result.warnings.push_back(std::to_string(sim.dropped) + " signals dropped at the end of the price series");
    }
    return report;
  });

  stage("write", [&] {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create " + cfg.out_dir.string() + ": " + ec.message());
    emit_report(result.report, cfg.out_dir / "report.txt");
    save_ensemble(ensemble, cfg.out_dir / "ensemble.txt");
    if (test_selection) save_selection_csv(*test_selection, cfg.out_dir / "selection.csv");
  });
  return result;
}

}  // namespace lara
