#include <cmath>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "shiftsched/predictors.hpp"

namespace shiftsched {

Matrix Standardizer::apply(const Matrix& X) const {
  if (X.cols() != mean.size()) throw DimensionError("standardizer dimension mismatch");
  Matrix out = X.rowwise() - mean.transpose();
  out.array().rowwise() /= sd.transpose().array();
  return out;
}

Standardizer fit_standardizer(const Matrix& X) {
  if (X.rows() < 2) throw InsufficientDataError("standardizer needs at least two rows");
  Standardizer s;
  s.mean = X.colwise().mean().transpose();
  s.sd.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double ss = (X.col(j).array() - s.mean(j)).square().sum();
    s.sd(j) = std::max(1e-8, std::sqrt(ss / static_cast<double>(X.rows() - 1)));
  }
  return s;
}

Standardizer fit_standardizer(const Dataset& data) {
  if (data.audit) data.audit->record(data.setting, "standardizer_fit");
  return fit_standardizer(data.features);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace shiftsched
