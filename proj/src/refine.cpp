#include "lara/refine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "lara/error.hpp"

namespace lara {

namespace {

const char* mode_name(RefineMode m) { return m == RefineMode::HardFlip ? "hard_flip" : "convex_blend"; }
const char* combiner_name(Combiner c) { return c == Combiner::Last ? "last" : "vote"; }

void expect_token(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw SchemaError("ensemble manifest: expected '" + token + "', got '" + got + "'");
  }
}

}  // namespace

void RefineConfig::validate() const {
  if (iterations < 0) throw ParameterError("iterations must be >= 0");
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ParameterError("ratio must lie in [0, 1)");
  learner.validate();
}

double epsilon_threshold(std::span<const double> losses, double ratio) {
  if (losses.empty()) throw EmptyInputError("epsilon_threshold needs at least one loss");
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ParameterError("ratio must lie in [0, 1)");
  const std::size_t n = losses.size();
  // The 1e-9 slack keeps products like 0.29 * 100 from flooring to 28.
  const auto flips = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  const std::size_t rank = n - std::min(flips, n - 1);  // 1-based, >= 1
  std::vector<double> sorted(losses.begin(), losses.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

std::vector<int> flip_labels(std::span<const int> labels, std::span<const double> losses, double eps) {
  if (labels.size() != losses.size()) throw DimensionError("labels and losses differ in length");
  std::vector<int> out(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const int flip = losses[j] > eps ? 1 : 0;
    out[j] = labels[j] + (1 - 2 * labels[j]) * flip;
  }
  return out;
}

std::vector<double> refurbish_convex(std::span<const double> labels, std::span<const double> predictions,
                                     std::span<const int> alphas) {
  if (labels.size() != predictions.size() || labels.size() != alphas.size()) {
    throw DimensionError("labels, predictions and alphas differ in length");
  }
  std::vector<double> out(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const double a = alphas[j];
    out[j] = a * labels[j] + (1.0 - a) * predictions[j];
  }
  return out;
}

Ensemble ra_label(const RowMatrix& features, std::span<const int> labels, const RefineConfig& cfg,
                  const Learner& learner) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(features.rows());
  if (labels.size() != n) throw DimensionError("feature rows and labels differ in length");
  if (n < 2) throw InsufficientDataError("label refinement needs at least two samples");

  Ensemble ens;
  ens.combiner = cfg.combiner;
  ens.mode = cfg.mode;
  ens.ratio = cfg.ratio;

  std::vector<int> hard(labels.begin(), labels.end());
  std::vector<double> soft(labels.begin(), labels.end());
  ens.label_history.push_back(soft);
  ens.predictors.push_back(learner.fit(features, hard));

  std::vector<double> losses(n);
  for (int k = 0; k < cfg.iterations; ++k) {
    const auto preds = ens.predictors.back()->predict_proba(features);
    for (std::size_t j = 0; j < n; ++j) losses[j] = sample_loss(preds[j], soft[j]);
    const double eps = epsilon_threshold(losses, cfg.ratio);
    const auto flips =
        static_cast<std::size_t>(std::count_if(losses.begin(), losses.end(), [eps](double l) { return l > eps; }));

    if (cfg.mode == RefineMode::HardFlip) {
      hard = flip_labels(hard, losses, eps);
      soft.assign(hard.begin(), hard.end());
    } else {
      std::vector<int> alphas(n);
      for (std::size_t j = 0; j < n; ++j) alphas[j] = losses[j] <= eps ? 1 : 0;
      soft = refurbish_convex(soft, preds, alphas);
      for (std::size_t j = 0; j < n; ++j) hard[j] = soft[j] >= 0.5 ? 1 : 0;
    }
    ens.epsilons.push_back(eps);
    ens.flip_counts.push_back(flips);
    ens.label_history.push_back(soft);
    ens.predictors.push_back(learner.fit(features, hard));
  }
  return ens;
}

Ensemble ra_label(const RowMatrix& features, std::span<const int> labels, const RefineConfig& cfg) {
  return ra_label(features, labels, cfg, GbdtLearner(cfg.learner));
}

std::vector<double> ensemble_predict(const Ensemble& ensemble, const RowMatrix& features) {
  if (ensemble.predictors.empty()) throw DataError("ensemble has no predictors");
  if (ensemble.combiner == Combiner::Last) return ensemble.predictors.back()->predict_proba(features);

  std::vector<double> total(static_cast<std::size_t>(features.rows()), 0.0);
  for (const auto& p : ensemble.predictors) {
    const auto probs = p->predict_proba(features);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += probs[i];
  }
  const auto members = static_cast<double>(ensemble.predictors.size());
  for (double& v : total) v /= members;
  return total;
}

void write_ensemble(const Ensemble& ensemble, std::ostream& out) {
  const auto old_precision = out.precision(17);
  out << "ensemble\n";
  out << "iterations " << ensemble.iterations() << '\n';
  out << "ratio " << ensemble.ratio << '\n';
  out << "mode " << mode_name(ensemble.mode) << '\n';
  out << "combiner " << combiner_name(ensemble.combiner) << '\n';
  out << "flip_counts";
  for (auto c : ensemble.flip_counts) out << ' ' << c;
  out << '\n';
  out << "epsilons";
  for (double e : ensemble.epsilons) out << ' ' << e;
  out << '\n';
  out << "predictors " << ensemble.predictors.size() << '\n';
  out.precision(old_precision);
  for (const auto& p : ensemble.predictors) p->write(out);
}

Ensemble read_ensemble(std::istream& in) {
  Ensemble ens;
  int iterations = 0;
  std::string word;
  expect_token(in, "ensemble");
  expect_token(in, "iterations");
  in >> iterations;
  if (!in || iterations < 0) throw SchemaError("ensemble manifest: bad iteration count");
  expect_token(in, "ratio");
  in >> ens.ratio;
  expect_token(in, "mode");
  in >> word;
  if (word == "hard_flip") {
    ens.mode = RefineMode::HardFlip;
  } else if (word == "convex_blend") {
    ens.mode = RefineMode::ConvexBlend;
  } else {
    throw SchemaError("ensemble manifest: unknown mode '" + word + "'");
  }
  expect_token(in, "combiner");
  in >> word;
  if (word == "last") {
    ens.combiner = Combiner::Last;
  } else if (word == "vote") {
    ens.combiner = Combiner::Vote;
  } else {
    throw SchemaError("ensemble manifest: unknown combiner '" + word + "'");
  }
  expect_token(in, "flip_counts");
  ens.flip_counts.resize(static_cast<std::size_t>(iterations));
  for (auto& c : ens.flip_counts) in >> c;
  expect_token(in, "epsilons");
  ens.epsilons.resize(static_cast<std::size_t>(iterations));
  for (auto& e : ens.epsilons) in >> e;
  expect_token(in, "predictors");
  std::size_t count = 0;
  in >> count;
  if (!in || count != static_cast<std::size_t>(iterations) + 1) {
    throw SchemaError("ensemble manifest: predictor count does not match iterations");
  }
  for (std::size_t i = 0; i < count; ++i) ens.predictors.push_back(read_predictor(in));
  return ens;
}

void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_ensemble(ensemble, out);
  if (!out) throw IoError("write failed for " + path.string());
}

Ensemble load_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_ensemble(in);
}

}  // namespace lara
