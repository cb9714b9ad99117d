#include "lara/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "lara/error.hpp"

namespace lara {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t row, std::string_view column) {
  field = trim(field);
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw ParseError(row, "column '" + std::string(column) + "': cannot parse '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

Dataset::Dataset(std::vector<std::int64_t> timestamps, std::vector<double> prices, RowMatrix features,
                 std::optional<std::vector<int>> labels)
    : timestamps_(std::move(timestamps)),
      prices_(std::move(prices)),
      features_(std::move(features)),
      labels_(std::move(labels)) {
  const std::size_t n = timestamps_.size();
  if (prices_.size() != n || static_cast<std::size_t>(features_.rows()) != n) {
    throw DimensionError("dataset columns have mismatched lengths");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (timestamps_[i] < timestamps_[i - 1]) {
      throw OrderError("timestamps decrease at record " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(prices_[i] > 0.0) || !std::isfinite(prices_[i])) {
      throw DataError("price must be positive and finite at record " + std::to_string(i));
    }
  }
  if (!features_.allFinite()) {
    throw DataError("features contain NaN or Inf");
  }
  if (labels_) {
    if (labels_->size() != n) {
      throw DimensionError("label count does not match record count");
    }
    for (int y : *labels_) {
      if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    }
  }
}

const std::vector<int>& Dataset::labels() const {
  if (!labels_) throw DataError("dataset is unlabeled");
  return *labels_;
}

FeatureRecord Dataset::record(std::size_t i) const {
  const auto row = row_span(features_, static_cast<Eigen::Index>(i));
  return {timestamps_.at(i), prices_.at(i), std::vector<double>(row.begin(), row.end())};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<std::int64_t> ts;
  std::vector<double> px;
  RowMatrix feats(static_cast<Eigen::Index>(indices.size()), dim());
  std::optional<std::vector<int>> ys;
  ts.reserve(indices.size());
  px.reserve(indices.size());
  if (labels_) ys.emplace().reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= size()) throw DimensionError("subset index out of range");
    ts.push_back(timestamps_[i]);
    px.push_back(prices_[i]);
    feats.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(i));
    if (labels_) ys->push_back((*labels_)[i]);
  }
  return Dataset(std::move(ts), std::move(px), std::move(feats), std::move(ys));
}

Dataset Dataset::with_labels(std::vector<int> labels) const {
  return Dataset(timestamps_, prices_, features_, std::move(labels));
}

std::size_t Dataset::count_positive() const {
  const auto& ys = labels();
  return static_cast<std::size_t>(std::count(ys.begin(), ys.end(), 1));
}

double Dataset::positive_ratio() const {
  if (empty()) return 0.0;
  return static_cast<double>(count_positive()) / static_cast<double>(size());
}

void LabelSpec::validate() const {
  if (horizon_steps < 1) throw ParameterError("horizon_steps must be >= 1");
  if (!(threshold > 0.0)) throw ParameterError("label threshold must be > 0");
}

void SplitSpec::validate() const {
  if (!(train_end < valid_end)) throw ParameterError("train_end must precede valid_end");
}

void CorrelatedNoiseSpec::validate() const {
  if (n < 1) throw ParameterError("n must be >= 1");
  if (!(positive_ratio > 0.0 && positive_ratio < 1.0)) throw ParameterError("positive_ratio must be in (0,1)");
  if (signal_dims < 1 || noise_dims < 0) throw ParameterError("invalid dimension counts");
  if (!(noise_scale > 0.0)) throw ParameterError("noise_scale must be > 0");
  if (!(noise_corr >= 0.0 && noise_corr < 1.0)) throw ParameterError("noise_corr must be in [0,1)");
}

Dataset load_csv(const std::filesystem::path& path, std::optional<int> dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": missing header row");
  const auto header = split_fields(line);
  std::map<std::string, std::size_t, std::less<>> column;
  for (std::size_t c = 0; c < header.size(); ++c) column.emplace(std::string(trim(header[c])), c);

  auto require = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) throw SchemaError(path.string() + ": missing column '" + name + "'");
    return it->second;
  };
  const std::size_t ts_col = require("timestamp");
  const std::size_t px_col = require("price");
  int d = 0;
  if (dim) {
    if (*dim < 0) throw ParameterError("dim must be >= 0");
    d = *dim;
  } else {
    while (column.count("f" + std::to_string(d))) ++d;
  }
  std::vector<std::size_t> f_cols;
  for (int j = 0; j < d; ++j) f_cols.push_back(require("f" + std::to_string(j)));
  std::optional<std::size_t> label_col;
  if (auto it = column.find("label"); it != column.end()) label_col = it->second;

  std::vector<std::int64_t> ts;
  std::vector<double> px;
  std::vector<double> flat;
  std::vector<int> ys;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError(row, "expected " + std::to_string(header.size()) + " fields, got " +
                                std::to_string(fields.size()));
    }
    const auto t = parse_number<std::int64_t>(fields[ts_col], row, "timestamp");
    if (!ts.empty() && t < ts.back()) {
      throw OrderError(path.string() + ": timestamp decreases at row " + std::to_string(row));
    }
    ts.push_back(t);
    px.push_back(parse_number<double>(fields[px_col], row, "price"));
    for (int j = 0; j < d; ++j) {
      const double v = parse_number<double>(fields[f_cols[j]], row, header[f_cols[j]]);
      if (!std::isfinite(v)) throw ParseError(row, "non-finite feature value");
      flat.push_back(v);
    }
    if (label_col) ys.push_back(parse_number<int>(fields[*label_col], row, "label"));
  }

  RowMatrix feats(static_cast<Eigen::Index>(ts.size()), d);
  if (!flat.empty()) {
    feats = Eigen::Map<const RowMatrix>(flat.data(), feats.rows(), feats.cols());
  }
  std::optional<std::vector<int>> labels;
  if (label_col) labels = std::move(ys);
  return Dataset(std::move(ts), std::move(px), std::move(feats), std::move(labels));
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "timestamp,price";
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ",f" << j;
  if (ds.has_labels()) out << ",label";
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.timestamps()[i] << ',' << ds.prices()[i];
    for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ',' << ds.features()(static_cast<Eigen::Index>(i), j);
    if (ds.has_labels()) out << ',' << ds.labels()[i];
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset generate_labels(const Dataset& ds, const LabelSpec& spec) {
  spec.validate();
  const auto horizon = static_cast<std::size_t>(spec.horizon_steps);
  if (ds.size() < horizon + 1) {
    throw InsufficientDataError("need at least " + std::to_string(horizon + 1) + " records to label, have " +
                                std::to_string(ds.size()));
  }
  const std::size_t n = ds.size() - horizon;
  std::vector<int> labels(n);
  const auto& px = ds.prices();
  for (std::size_t t = 0; t < n; ++t) {
    const double r = px[t + horizon] / px[t] - 1.0;
    switch (spec.mode) {
      case LabelMode::Magnitude: labels[t] = std::abs(r) > spec.threshold; break;
      case LabelMode::Long: labels[t] = r > spec.threshold; break;
      case LabelMode::Short: labels[t] = r < -spec.threshold; break;
    }
  }
  std::vector<std::size_t> keep(n);
  for (std::size_t i = 0; i < n; ++i) keep[i] = i;
  return ds.subset(keep).with_labels(std::move(labels));
}

SplitResult chronological_split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::size_t> train, valid, test;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto t = ds.timestamps()[i];
    if (t <= spec.train_end) {
      train.push_back(i);
    } else if (t <= spec.valid_end) {
      valid.push_back(i);
    } else {
      test.push_back(i);
    }
  }
  SplitResult out{ds.subset(train), ds.subset(valid), ds.subset(test), {}};
  if (train.empty()) out.warnings.emplace_back("train partition is empty");
  if (valid.empty()) out.warnings.emplace_back("valid partition is empty");
  if (test.empty()) out.warnings.emplace_back("test partition is empty");
  return out;
}

Dataset synth_gaussian(int n_per_class, std::array<double, 2> mean_pos, std::array<double, 2> mean_neg,
                       double cov_scale, std::uint64_t seed) {
  if (n_per_class < 1) throw ParameterError("n_per_class must be >= 1");
  if (!(cov_scale > 0.0)) throw ParameterError("cov_scale must be > 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(cov_scale));
  const auto n = static_cast<std::size_t>(n_per_class) * 2;
  RowMatrix feats(static_cast<Eigen::Index>(n), 2);
  std::vector<int> labels(n);
  std::vector<std::int64_t> ts(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool positive = i % 2 == 0;
    const auto& mean = positive ? mean_pos : mean_neg;
    feats(static_cast<Eigen::Index>(i), 0) = mean[0] + normal(rng);
    feats(static_cast<Eigen::Index>(i), 1) = mean[1] + normal(rng);
    labels[i] = positive ? 1 : 0;
    ts[i] = static_cast<std::int64_t>(i);
  }
  return Dataset(std::move(ts), std::vector<double>(n, 1.0), std::move(feats), std::move(labels));
}

Dataset synth_correlated(const CorrelatedNoiseSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const auto n = static_cast<std::size_t>(spec.n);
  const int d = spec.signal_dims + spec.noise_dims;
  const double shared = std::sqrt(spec.noise_corr);
  const double own = std::sqrt(1.0 - spec.noise_corr);
  RowMatrix feats(static_cast<Eigen::Index>(n), d);
  std::vector<int> labels(n);
  std::vector<std::int64_t> ts(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const bool positive = uniform(rng) < spec.positive_ratio;
    const double shift = positive ? spec.signal_shift : -spec.signal_shift;
    for (int j = 0; j < spec.signal_dims; ++j) feats(r, j) = shift + normal(rng);
    const double factor = normal(rng);
    for (int j = 0; j < spec.noise_dims; ++j) {
      feats(r, spec.signal_dims + j) = spec.noise_scale * (shared * factor + own * normal(rng));
    }
    labels[i] = positive ? 1 : 0;
    ts[i] = static_cast<std::int64_t>(i);
  }
  return Dataset(std::move(ts), std::vector<double>(n, 1.0), std::move(feats), std::move(labels));
}

std::vector<std::size_t> balanced_indices(std::span<const int> labels, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) {
    throw ClassMissingError(pos.empty() ? "no positive samples to balance" : "no negative samples to balance");
  }
  auto& majority = pos.size() > neg.size() ? pos : neg;
  const std::size_t keep = std::min(pos.size(), neg.size());
  if (majority.size() > keep) {
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first `keep` slots end up a uniform sample.
    for (std::size_t i = 0; i < keep; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, majority.size() - 1);
      std::swap(majority[i], majority[pick(rng)]);
    }
    majority.resize(keep);
  }
  std::vector<std::size_t> out;
  out.reserve(2 * keep);
  out.insert(out.end(), pos.begin(), pos.end());
  out.insert(out.end(), neg.begin(), neg.end());
  std::sort(out.begin(), out.end());
  return out;
}

Dataset balance_classes(const Dataset& ds, std::uint64_t seed) {
  const auto idx = balanced_indices(ds.labels(), seed);
  return ds.subset(idx);
}

}  // namespace lara
