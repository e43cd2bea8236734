#include <cmath>

#include "shiftsched/predictors.hpp"

namespace shiftsched {

std::vector<double> LinearModel::predict(const Matrix& X) const {
  if (X.cols() != coefficients.size()) throw DimensionError("linear model dimension mismatch");
  const Vector out = (X * coefficients).array() + intercept;
  return {out.data(), out.data() + out.size()};
}

namespace {

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

}  // namespace

LinearModel fit_elastic_net(const Matrix& X, std::span<const double> y, double lambda, double ratio, double tol,
                            int max_iter) {
  if (X.rows() < 1) throw InsufficientDataError("elastic net needs at least one row");
  if (static_cast<Eigen::Index>(y.size()) != X.rows()) throw DimensionError("label count differs from rows");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("ratio must lie in [0, 1]");

  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const double nd = static_cast<double>(n);
  const Eigen::Map<const Vector> target(y.data(), n);

  // Centering absorbs the unpenalized intercept.
  const Vector x_mean = X.colwise().mean().transpose();
  const double y_mean = target.mean();
  const Matrix Xc = X.rowwise() - x_mean.transpose();
  Vector residual = target.array() - y_mean;
  Vector col_sq(d);
  for (Eigen::Index j = 0; j < d; ++j) col_sq(j) = Xc.col(j).squaredNorm() / nd;

  LinearModel m;
  m.lambda = lambda;
  m.ratio = ratio;
  m.coefficients = Vector::Zero(d);
  const double l1 = lambda * ratio;
  const double l2 = lambda * (1.0 - ratio);

  for (int it = 1; it <= max_iter; ++it) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double denom = col_sq(j) + l2;
      const double old = m.coefficients(j);
      double updated = 0.0;
      if (denom > 0.0) {
        const double rho = Xc.col(j).dot(residual) / nd + col_sq(j) * old;
        updated = soft_threshold(rho, l1) / denom;
      }
      if (updated != old) {
        residual -= (updated - old) * Xc.col(j);
        m.coefficients(j) = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    m.iterations = it;
    if (max_change < tol) {
      m.converged = true;
      break;
    }
  }
  m.intercept = y_mean - x_mean.dot(m.coefficients);
  return m;
}

LinearPredictor fit_elastic_net_predictor(const Matrix& X, std::span<const double> y, double lambda, double ratio) {
  LinearPredictor p;
  p.standardizer = fit_standardizer(X);
  p.model = fit_elastic_net(p.standardizer.apply(X), y, lambda, ratio, 1e-7, 10000);
  return p;
}

std::vector<double> predict(const LinearPredictor& p, const Matrix& X) {
  return p.model.predict(p.standardizer.apply(X));
}

}  // namespace shiftsched
