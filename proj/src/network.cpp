#include <algorithm>
#include <cmath>
#include <numeric>

#include "training.hpp"

namespace shiftsched {
namespace detail {

void scale_targets(std::span<const double> y, NetworkModel& net) {
  if (y.empty()) throw InsufficientDataError("no targets");
  std::vector<double> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t h = sorted.size() / 2;
  net.target_center = sorted.size() % 2 == 1 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  const double sd = y.size() > 1 ? std::sqrt(ss / static_cast<double>(y.size() - 1)) : 0.0;
  net.target_scale = sd > 1e-8 ? sd : 1.0;
}

std::vector<double> scaled_targets(std::span<const double> y, const NetworkModel& net) {
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] - net.target_center) / net.target_scale;
  return out;
}

}  // namespace detail

namespace {

NetworkModel fit_network(const Standardizer& standardizer, const Matrix& X, std::span<const double> y,
                         const DnnHyper& hyper, std::uint64_t seed) {
  NetworkModel net;
  net.hyper = hyper;
  net.standardizer = standardizer;
  detail::scale_targets(y, net);
  const Matrix xs = net.standardizer.apply(X);
  const std::vector<double> targets = detail::scaled_targets(y, net);
  const detail::TrainingInputs in{xs, targets, nullptr, nullptr, net.target_scale};
  auto run = detail::train_network(
      in, nn::Mlp::init(detail::extractor_specs(static_cast<int>(X.cols()), hyper), derive_seed(seed, 2)),
      nn::Mlp::init(detail::regressor_specs(hyper), derive_seed(seed, 3)), hyper.epochs, hyper.batch_size,
      hyper.learning_rate, seed, {});
  net.extractor = std::move(run.extractor);
  net.regressor = std::move(run.regressor);
  return net;
}

}  // namespace

NetworkModel fit_dnn(const Matrix& X, std::span<const double> y, const DnnHyper& hyper, std::uint64_t seed) {
  return fit_network(fit_standardizer(X), X, y, hyper, seed);
}

NetworkModel fit_dnn(const Dataset& a, const DnnHyper& hyper, std::uint64_t seed) {
  const auto& y = a.read_labels(LabelPurpose::training);
  return fit_network(fit_standardizer(a), a.features, y, hyper, seed);
}

NetworkModel fit_retrained(const Dataset& a, const Dataset& revealed_b, const DnnHyper& hyper, std::uint64_t seed) {
  if (revealed_b.rows() > 0 && revealed_b.dims() != a.dims()) throw DimensionError("A and B feature counts differ");
  if (revealed_b.rows() == 0) return fit_dnn(a, hyper, seed);
  const auto& ya = a.read_labels(LabelPurpose::training);
  const auto& yb = revealed_b.read_labels(LabelPurpose::reveal);
  Matrix X(a.rows() + revealed_b.rows(), a.dims());
  X << a.features, revealed_b.features;
  std::vector<double> y(ya);
  y.insert(y.end(), yb.begin(), yb.end());
  return fit_network(fit_standardizer(a), X, y, hyper, seed);
}

NetworkModel continue_training(NetworkModel model, const Matrix& X, std::span<const double> y, int epochs,
                               double learning_rate, std::uint64_t seed) {
  if (epochs == 0 || X.rows() == 0) return model;
  const Matrix xs = model.standardizer.apply(X);
  const std::vector<double> targets = detail::scaled_targets(y, model);
  const detail::TrainingInputs in{xs, targets, nullptr, nullptr, model.target_scale};
  auto run = detail::train_network(in, std::move(model.extractor), std::move(model.regressor), epochs,
                                   model.hyper.batch_size, learning_rate, seed, {});
  model.extractor = std::move(run.extractor);
  model.regressor = std::move(run.regressor);
  return model;
}

NetworkModel fit_finetuned(const Dataset& a, const Dataset& revealed_b, const DnnHyper& hyper, std::uint64_t seed,
                           int finetune_epochs, double lr_factor) {
  if (finetune_epochs < 0) throw std::invalid_argument("finetune epochs must be >= 0");
  NetworkModel base = fit_dnn(a, hyper, seed);
  if (finetune_epochs == 0 || revealed_b.rows() == 0) return base;
  if (revealed_b.dims() != a.dims()) throw DimensionError("A and B feature counts differ");
  const auto& yb = revealed_b.read_labels(LabelPurpose::reveal);
  return continue_training(std::move(base), revealed_b.features, yb, finetune_epochs, hyper.learning_rate * lr_factor,
                           derive_seed(seed, 7));
}

Dataset reveal_window(const Dataset& b, double window_days) {
  const auto& y = b.read_labels(LabelPurpose::reveal);
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < window_days) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return select_rows(b, rows, LabelPurpose::reveal);
}

std::vector<double> predict(const NetworkModel& m, const Matrix& X) {
  const Matrix latent = nn::predict(m.extractor, m.standardizer.apply(X));
  const Matrix out = nn::predict(m.regressor, latent);
  std::vector<double> y(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) y[static_cast<std::size_t>(i)] = m.target_center + m.target_scale * out(i, 0);
  return y;
}

}  // namespace shiftsched
