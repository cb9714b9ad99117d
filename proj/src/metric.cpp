#include "lara/metric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "lara/error.hpp"

namespace lara {

namespace {

constexpr double kEigenFloor = 1e-8;

struct Projected {
  Eigen::MatrixXd matrix;
  Eigen::MatrixXd inverse;
  double logdet = 0.0;
};

// Nearest symmetric matrix with every eigenvalue >= kEigenFloor.
Projected project_psd(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition failed during PSD projection");
  Eigen::VectorXd values = eig.eigenvalues().cwiseMax(kEigenFloor);
  const Eigen::MatrixXd& vecs = eig.eigenvectors();
  Projected out;
  out.matrix = vecs * values.asDiagonal() * vecs.transpose();
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
  out.inverse = vecs * values.cwiseInverse().asDiagonal() * vecs.transpose();
  out.logdet = values.array().log().sum();
  return out;
}

double offdiag_l1(const Eigen::MatrixXd& m) {
  return m.cwiseAbs().sum() - m.diagonal().cwiseAbs().sum();
}

// Mean of (x_i - x_j)(x_i - x_j)^T over ordered same-class pairs, using
// sum_{i,j in c} (x_i - x_j)(x_i - x_j)^T = 2 n_c * scatter_c.
Eigen::MatrixXd same_class_pair_moment(const Dataset& ds) {
  const auto& labels = ds.labels();
  const Eigen::Index d = ds.dim();
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(d, d);
  double pairs = 0.0;
  for (int cls : {0, 1}) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) rows.push_back(static_cast<Eigen::Index>(i));
    }
    if (rows.empty()) continue;
    const auto nc = static_cast<double>(rows.size());
    Eigen::MatrixXd block(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t r = 0; r < rows.size(); ++r) block.row(static_cast<Eigen::Index>(r)) = ds.features().row(rows[r]);
    const Eigen::RowVectorXd mean = block.colwise().mean();
    block.rowwise() -= mean;
    total += 2.0 * nc * (block.transpose() * block);
    pairs += nc * nc;
  }
  return total / pairs;
}

}  // namespace

MahalanobisMetric::MahalanobisMetric(Eigen::MatrixXd matrix) : matrix_(std::move(matrix)) {
  if (matrix_.rows() != matrix_.cols() || matrix_.rows() == 0) {
    throw DimensionError("metric matrix must be square and non-empty");
  }
  if (!matrix_.allFinite()) throw NumericError("metric matrix has non-finite entries");
  const Eigen::Index d = matrix_.rows();
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const double a = matrix_(i, j);
      const double b = matrix_(j, i);
      if (std::abs(a - b) > 1e-12 * std::max({1.0, std::abs(a), std::abs(b)})) {
        throw NumericError("metric matrix is not symmetric");
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(matrix_);
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition of metric matrix failed");
  if (eig.eigenvalues().minCoeff() < -1e-8) {
    throw NumericError("metric matrix is not positive semidefinite");
  }
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  factor_ = root.asDiagonal() * eig.eigenvectors().transpose();
}

MahalanobisMetric MahalanobisMetric::identity(Eigen::Index dim) {
  if (dim < 1) throw DimensionError("metric dimension must be >= 1");
  return MahalanobisMetric(Eigen::MatrixXd::Identity(dim, dim));
}

void MetricLearnConfig::validate() const {
  if (!(sparsity_weight >= 0.0)) throw ParameterError("sparsity_weight must be >= 0");
  if (!(logdet_weight > 0.0)) throw ParameterError("logdet_weight must be > 0");
  if (max_iters < 0) throw ParameterError("max_iters must be >= 0");
  if (!(step_size > 0.0)) throw ParameterError("step_size must be > 0");
  if (!(tol > 0.0)) throw ParameterError("tol must be > 0");
}

MetricLearnResult learn_sdml(const Dataset& ds, const MetricLearnConfig& cfg) {
  cfg.validate();
  if (!ds.has_labels()) throw DataError("metric learning needs a labeled dataset");
  if (ds.empty() || ds.dim() < 1) throw EmptyInputError("metric learning needs at least one record");

  const Eigen::Index d = ds.dim();
  const Eigen::MatrixXd moment = same_class_pair_moment(ds);
  const double lam = cfg.logdet_weight;
  const double rho = cfg.sparsity_weight;

  auto smooth = [&](const Eigen::MatrixXd& m, double logdet) {
    return 0.5 * (m.cwiseProduct(moment)).sum() - lam * logdet;
  };

  Projected current{Eigen::MatrixXd::Identity(d, d), Eigen::MatrixXd::Identity(d, d), 0.0};
  double current_smooth = smooth(current.matrix, current.logdet);
  double current_obj = current_smooth + rho * offdiag_l1(current.matrix);

  MetricLearnResult result{MahalanobisMetric(current.matrix), false, 0, current_obj};
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Eigen::MatrixXd grad = 0.5 * moment - lam * current.inverse;
    double step = cfg.step_size;
    bool accepted = false;
    Projected next;
    double next_smooth = 0.0;
    for (int attempt = 0; attempt < 60; ++attempt, step *= 0.5) {
      Eigen::MatrixXd z = current.matrix - step * grad;
      const double shrink = step * rho;
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          if (i == j) continue;
          const double v = z(i, j);
          z(i, j) = std::copysign(std::max(std::abs(v) - shrink, 0.0), v);
        }
      }
      next = project_psd(z);
      next_smooth = smooth(next.matrix, next.logdet);
      const Eigen::MatrixXd delta = next.matrix - current.matrix;
      const double bound =
          current_smooth + (grad.cwiseProduct(delta)).sum() + delta.squaredNorm() / (2.0 * step);
      if (std::isfinite(next_smooth) && next_smooth <= bound + 1e-12 * std::abs(bound)) {
        accepted = true;
        break;
      }
    }
    result.iterations = it + 1;
    if (!accepted) {
      result.converged = true;
      break;
    }
    const double next_obj = next_smooth + rho * offdiag_l1(next.matrix);
    const double change = std::abs(current_obj - next_obj) / std::max(1.0, std::abs(current_obj));
    current = std::move(next);
    current_smooth = next_smooth;
    current_obj = next_obj;
    if (current_obj < result.objective) {
      result.metric = MahalanobisMetric(current.matrix);
      result.objective = current_obj;
    }
    if (change < cfg.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

MahalanobisMetric baseline_metric(BaselineKind kind, Eigen::Index dim, const Dataset* data) {
  if (kind == BaselineKind::Identity) return MahalanobisMetric::identity(dim);

  if (data == nullptr) throw ParameterError("inverse-covariance metric needs data");
  if (data->dim() != dim) throw DimensionError("data dimension does not match requested metric dimension");
  const auto n = static_cast<Eigen::Index>(data->size());
  if (n <= dim) {
    throw NumericError("inverse-covariance metric needs more records (" + std::to_string(n) +
                       ") than dimensions (" + std::to_string(dim) + ")");
  }
  Eigen::MatrixXd centered = data->features();
  centered.rowwise() -= centered.colwise().mean();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  const double ridge = 1e-6 * cov.trace() / static_cast<double>(dim);
  cov.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success || !(ridge > 0.0)) {
    throw NumericError("sample covariance is singular beyond ridge repair");
  }
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
  if (!inv.allFinite()) throw NumericError("covariance inverse is not finite");
  inv = 0.5 * (inv + inv.transpose()).eval();
  return MahalanobisMetric(std::move(inv));
}

double distance(const MahalanobisMetric& metric, std::span<const double> x, std::span<const double> y) {
  const auto d = static_cast<std::size_t>(metric.dim());
  if (x.size() != d || y.size() != d) throw DimensionError("distance: vector dimension does not match metric");
  const auto& m = metric.matrix();
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double di = x[i] - y[i];
    double row = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      row += m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (x[j] - y[j]);
    }
    total += di * row;
  }
  return std::max(total, 0.0);
}

RowMatrix transform(const MahalanobisMetric& metric, const RowMatrix& points) {
  if (points.cols() != metric.dim()) throw DimensionError("transform: point dimension does not match metric");
  return points * metric.factor().transpose();
}

void save_metric(const MahalanobisMetric& metric, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  const auto& m = metric.matrix();
  out << "dim=" << m.rows() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

MahalanobisMetric load_metric(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("dim=", 0) != 0) {
    throw SchemaError(path.string() + ": expected 'dim=<d>' header");
  }
  const int d = std::stoi(line.substr(4));
  if (d < 1) throw SchemaError(path.string() + ": dimension must be >= 1");
  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i) {
    if (!std::getline(in, line)) throw ParseError(static_cast<std::size_t>(i + 1), "missing matrix row");
    std::stringstream row(line);
    std::string cell;
    for (int j = 0; j < d; ++j) {
      if (!std::getline(row, cell, ',')) throw ParseError(static_cast<std::size_t>(i + 1), "short matrix row");
      try {
        m(i, j) = std::stod(cell);
      } catch (const std::exception&) {
        throw ParseError(static_cast<std::size_t>(i + 1), "cannot parse '" + cell + "'");
      }
    }
  }
  return MahalanobisMetric(std::move(m));
}

}  // namespace lara
