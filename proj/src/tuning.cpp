#include <algorithm>
#include <cmath>
#include <numeric>

#include "shiftsched/predictors.hpp"

namespace shiftsched {

std::vector<Eigen::Index> FoldPartition::train_rows(int fold) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return rows;
}

std::vector<Eigen::Index> FoldPartition::validation_rows(int fold) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return rows;
}

FoldPartition make_folds(Eigen::Index n, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("cross-validation needs k >= 2");
  if (n < k) throw InsufficientDataError("fewer samples than folds");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  FoldPartition p;
  p.k = k;
  p.fold_of.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i) p.fold_of[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % k);
  return p;
}

template <typename Config>
double CvResult<Config>::mean_mae(std::size_t i) const {
  const auto& f = fold_mae.at(i);
  return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
}

template struct CvResult<ElasticNetConfig>;
template struct CvResult<DnnHyper>;

std::vector<ElasticNetConfig> elastic_net_grid() {
  std::vector<ElasticNetConfig> grid;
  for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    for (double ratio : {0.0, 0.25, 0.5, 0.75, 1.0}) grid.push_back({lambda, ratio});
  }
  return grid;
}

std::vector<DnnHyper> dnn_grid() {
  std::vector<DnnHyper> grid;
  for (int width : {8, 16, 32, 64}) {
    for (int epochs : {50, 100}) {
      for (int batch : {32, 64}) {
        for (double l2 : {1e-5, 1e-3, 0.01}) {
          for (double dropout : {0.4, 0.5, 0.6}) {
            DnnHyper h;
            h.extractor_width = width;
            h.epochs = epochs;
            h.batch_size = batch;
            h.l2 = l2;
            h.dropout = dropout;
            grid.push_back(h);
          }
        }
      }
    }
  }
  return grid;
}

namespace {

struct FoldData {
  Matrix train_x;
  std::vector<double> train_y;
  Matrix val_x;
  std::vector<double> val_y;
};

std::vector<FoldData> split_folds(const Dataset& a, int k, std::uint64_t seed) {
  const auto& y = a.read_labels(LabelPurpose::tuning);
  const FoldPartition part = make_folds(a.rows(), k, seed);
  std::vector<FoldData> folds;
  for (int f = 0; f < k; ++f) {
    FoldData fd;
    const auto tr = part.train_rows(f);
    const auto va = part.validation_rows(f);
    fd.train_x.resize(static_cast<Eigen::Index>(tr.size()), a.features.cols());
    for (std::size_t r = 0; r < tr.size(); ++r) {
      fd.train_x.row(static_cast<Eigen::Index>(r)) = a.features.row(tr[r]);
      fd.train_y.push_back(y[static_cast<std::size_t>(tr[r])]);
    }
    fd.val_x.resize(static_cast<Eigen::Index>(va.size()), a.features.cols());
    for (std::size_t r = 0; r < va.size(); ++r) {
      fd.val_x.row(static_cast<Eigen::Index>(r)) = a.features.row(va[r]);
      fd.val_y.push_back(y[static_cast<std::size_t>(va[r])]);
    }
    folds.push_back(std::move(fd));
  }
  return folds;
}

double mae(std::span<const double> pred, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(pred[i] - y[i]);
  return s / static_cast<double>(y.size());
}

template <typename Config, typename FitScore>
CvResult<Config> grid_search(const std::vector<Config>& grid, const std::vector<FoldData>& folds, int threads,
                             FitScore fit_score) {
  if (grid.empty()) throw std::invalid_argument("empty hyperparameter grid");
  CvResult<Config> res;
  res.grid = grid;
  const std::size_t k = folds.size();
  res.fold_mae.assign(grid.size(), std::vector<double>(k, 0.0));
  parallel_for(grid.size() * k, threads, [&](std::size_t cell) {
    const std::size_t c = cell / k;
    const std::size_t f = cell % k;
    res.fold_mae[c][f] = fit_score(grid[c], folds[f], f);
  });
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const double m = res.mean_mae(c);
    if (m < best) {
      best = m;
      res.best = c;
    }
  }
  return res;
}

}  // namespace

CvResult<ElasticNetConfig> cross_validate(const std::vector<ElasticNetConfig>& grid, const Dataset& a, int k,
                                          std::uint64_t seed, int threads) {
  if (grid.empty()) throw std::invalid_argument("empty hyperparameter grid");
  const auto folds = split_folds(a, k, seed);
  return grid_search(grid, folds, threads, [](const ElasticNetConfig& c, const FoldData& fd, std::size_t) {
    const auto p = fit_elastic_net_predictor(fd.train_x, fd.train_y, c.lambda, c.ratio);
    return mae(predict(p, fd.val_x), fd.val_y);
  });
}

CvResult<DnnHyper> cross_validate(const std::vector<DnnHyper>& grid, const Dataset& a, int k, std::uint64_t seed,
                                  int threads) {
  if (grid.empty()) throw std::invalid_argument("empty hyperparameter grid");
  const auto folds = split_folds(a, k, seed);
  return grid_search(grid, folds, threads, [seed](const DnnHyper& h, const FoldData& fd, std::size_t f) {
    const auto m = fit_dnn(fd.train_x, fd.train_y, h, derive_seed(seed, 1000 + f));
    return mae(predict(m, fd.val_x), fd.val_y);
  });
}

}  // namespace shiftsched
