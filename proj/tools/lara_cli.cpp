#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "lara/error.hpp"
#include "lara/pipeline.hpp"

namespace {

using Settings = std::map<std::string, std::string>;

const std::set<std::string> kFlagKeys = {"no-attention", "no-metric", "no-refine"};

std::string describe(const std::string& key) {
  for (const auto& [k, d] : lara::pipeline_keys()) {
    if (k == key) return d;
  }
  return {};
}

// Registers `--<key>` for each key; values land in `out` only when given.
void add_keys(CLI::App* app, const std::vector<std::string>& keys, Settings& out,
              std::map<std::string, std::string>& raw) {
  for (const auto& key : keys) {
    if (kFlagKeys.count(key)) {
      app->add_flag_callback("--" + key, [&out, key] { out[key] = "true"; }, describe(key));
    } else {
      app->add_option("--" + key, raw[key], describe(key));
    }
  }
}

void collect(const Settings& raw, CLI::App* app, Settings& out) {
  for (const auto& [key, value] : raw) {
    const auto* opt = app->get_option_no_throw("--" + key);
    if (opt != nullptr && opt->count() > 0) out[key] = value;
  }
}

lara::PipelineConfig build_config(const std::string& config_path, const Settings& flags) {
  Settings merged;
  if (!config_path.empty()) merged = lara::read_config_file(config_path);
  for (const auto& [k, v] : flags) merged[k] = v;
  return lara::config_from_settings(merged);
}

std::vector<std::string> all_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, d] : lara::pipeline_keys()) {
    if (k != "seed") keys.push_back(k);
  }
  return keys;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Locality-aware sample selection, metric learning and label refinement for noisy price data"};
  app.require_subcommand(1);

  std::string config_path;
  std::string in_path;
  std::string out_path;
  std::string query_path;
  std::string metric_path;
  std::string ensemble_path;
  std::string synth_kind = "gaussian";
  std::uint64_t seed = 0;
  Settings raw;
  Settings flags;

  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic labeled dataset");
  synth->add_option("--kind", synth_kind, "gaussian | correlated")->check(CLI::IsMember({"gaussian", "correlated"}));
  synth->add_option("--seed", seed)->required();
  synth->add_option("--out", out_path)->required();
  add_keys(synth, {"n-per-class", "mean-pos", "mean-neg", "cov-scale", "corr-n", "corr-positive-ratio"}, flags, raw);

  auto* label = app.add_subcommand("label", "Attach fixed-horizon labels to a price CSV");
  label->add_option("--input", in_path)->required();
  label->add_option("--out", out_path)->required();
  add_keys(label, {"dim", "label-mode", "horizon", "label-threshold"}, flags, raw);

  auto* metric = app.add_subcommand("metric", "Learn or construct a Mahalanobis metric from labeled data");
  metric->add_option("--input", in_path)->required();
  metric->add_option("--out", out_path)->required();
  metric->add_option("--seed", seed);
  add_keys(metric, {"dim", "metric", "sparsity-weight", "logdet-weight", "metric-max-iters", "metric-step-size",
                    "metric-tol"},
           flags, raw);

  auto* select = app.add_subcommand("select", "Score samples by neighborhood label probability");
  select->add_option("--train", in_path, "labeled training CSV")->required();
  select->add_option("--query", query_path, "test CSV (omit for the training phase)");
  select->add_option("--metric-file", metric_path, "metric from `metric` (default: identity)");
  select->add_option("--out", out_path)->required();
  select->add_option("--seed", seed);
  add_keys(select, {"dim", "scheme", "k", "radius", "weight", "thres", "exclude-self", "max-links",
                    "ef-construction", "ef-search"},
           flags, raw);

  auto* refine = app.add_subcommand("refine", "Iterative label refinement; writes the ensemble");
  refine->add_option("--input", in_path)->required();
  refine->add_option("--out", out_path)->required();
  refine->add_option("--seed", seed);
  add_keys(refine, {"dim", "iterations", "ratio", "refine-mode", "combiner", "n-estimators", "max-depth",
                    "learning-rate", "min-samples-leaf", "no-refine"},
           flags, raw);

  auto* backtest = app.add_subcommand("backtest", "Top-N backtest of an ensemble on a price CSV");
  backtest->add_option("--input", in_path)->required();
  backtest->add_option("--ensemble", ensemble_path)->required();
  backtest->add_option("--out", out_path)->required();
  add_keys(backtest, {"dim", "top-n", "hold", "profit-threshold", "side", "label-threshold", "risk-free", "day-ms"},
           flags, raw);

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  pipeline->add_option("--config", config_path, "flat key = value file; flags override it");
  pipeline->add_option("--seed", seed)->required();
  add_keys(pipeline, all_keys(), flags, raw);

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto* sub : app.get_subcommands()) collect(raw, sub, flags);
    lara::PipelineConfig cfg = build_config(config_path, flags);
    cfg.seed = seed;

    if (synth->parsed()) {
      if (synth_kind == "gaussian") {
        const auto ds = lara::synth_gaussian(cfg.n_per_class, cfg.mean_pos, cfg.mean_neg, cfg.cov_scale,
                                             seed + lara::seed_offset::kSynthTrain);
        lara::save_csv(ds, out_path);
      } else {
        cfg.correlated.validate();
        lara::save_csv(lara::synth_correlated(cfg.correlated, seed + lara::seed_offset::kSynthTrain), out_path);
      }
    } else if (label->parsed()) {
      lara::save_csv(lara::generate_labels(lara::load_csv(in_path, cfg.dim), cfg.label), out_path);
    } else if (metric->parsed()) {
      const auto ds = lara::load_csv(in_path, cfg.dim);
      if (cfg.metric_choice == lara::MetricChoice::Sdml) {
        auto mcfg = cfg.metric;
        mcfg.seed = seed + lara::seed_offset::kMetric;
        const auto result = lara::learn_sdml(ds, mcfg);
        if (!result.converged) std::cerr << "warning: metric learning stopped at max_iters\n";
        lara::save_metric(result.metric, out_path);
      } else {
        const auto kind = cfg.metric_choice == lara::MetricChoice::Identity ? lara::BaselineKind::Identity
                                                                            : lara::BaselineKind::InverseCovariance;
        lara::save_metric(lara::baseline_metric(kind, ds.dim(), &ds), out_path);
      }
    } else if (select->parsed()) {
      const auto train = lara::load_csv(in_path, cfg.dim);
      const auto m = metric_path.empty() ? lara::MahalanobisMetric::identity(train.dim()) : lara::load_metric(metric_path);
      auto params = cfg.ann;
      params.seed = seed + lara::seed_offset::kIndex;
      const auto index = lara::AnnIndex::build(lara::transform(m, train.features()), params);
      const auto result = query_path.empty()
                              ? lara::select_training(train, m, index, cfg.attention)
                              : lara::select_testing(lara::load_csv(query_path, static_cast<int>(train.dim())).features(),
                                                     train, m, index, cfg.attention);
      lara::save_selection_csv(result, out_path);
      std::cout << "selected " << result.selected_ids.size() << " of " << result.p_hat.size() << '\n';
    } else if (refine->parsed()) {
      const auto ds = lara::load_csv(in_path, cfg.dim);
      auto rcfg = cfg.refine;
      if (!cfg.use_refine) rcfg.iterations = 0;
      rcfg.learner.seed = seed + lara::seed_offset::kLearner;
      lara::save_ensemble(lara::ra_label(ds.features(), ds.labels(), rcfg), out_path);
    } else if (backtest->parsed()) {
      const auto ds = lara::load_csv(in_path, cfg.dim);
      const auto ensemble = lara::load_ensemble(ensemble_path);
      const auto side = cfg.side.value_or(lara::Side::Long);
      const auto signals = lara::top_n_signals(lara::ensemble_predict(ensemble, ds.features()), cfg.top_n, side);
      const auto sim = lara::simulate(signals, ds.prices(), cfg.hold);
      const auto core = lara::core_metrics(sim.trades, cfg.profit_threshold.value_or(cfg.label.threshold));
      const auto daily = lara::daily_returns(sim.trades, ds.timestamps(), ds.timestamps(), cfg.day_ms);
      lara::emit_report(lara::make_report(core, daily, cfg.risk_free), out_path);
    } else if (pipeline->parsed()) {
      const auto result = lara::run_pipeline(cfg);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
      lara::write_report(result.report, std::cout);
    }
  } catch (const lara::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.category());
  }
  return 0;
}
