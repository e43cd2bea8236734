#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shiftsched/nn.hpp"

namespace shiftsched::trees {

class EmptyDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A split node routes x[feature] <= threshold to `left`; a leaf has
/// feature == -1 and carries `value`.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  double gain = 0.0;

  [[nodiscard]] bool is_leaf() const noexcept { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  [[nodiscard]] double predict(const double* row) const;
  [[nodiscard]] int depth() const;
};

enum class EnsembleMode { forest_mean, boosted_sum };

struct TreeEnsemble {
  std::vector<Tree> trees;
  EnsembleMode mode = EnsembleMode::forest_mean;
  double learning_rate = 1.0;
  double base_score = 0.0;
  int n_features = 0;
};

struct TreeParams {
  int max_depth = 8;       // <= 0 means unlimited
  int min_leaf = 5;
  int feature_subsample = 0;  // features tried per node; <= 0 means all
  int max_bins = 256;
  double min_gain = 1e-12;    // relative to the node's total loss scale
  double leaf_l2 = 0.0;
  std::uint64_t seed = 0;
};

struct ForestParams {
  int n_trees = 100;
  int max_depth = 8;
  int min_leaf = 5;
  int feature_subsample = -1;  // -1: floor(sqrt(d)); 0: all features
  bool bootstrap = true;
  int max_bins = 256;
  int threads = 1;
  std::uint64_t seed = 0;
};

enum class BoostLoss { squared, logistic };

struct BoostParams {
  int n_trees = 100;
  int max_depth = 3;
  int min_leaf = 1;
  double learning_rate = 0.1;
  BoostLoss loss = BoostLoss::squared;
  int max_bins = 256;
  std::uint64_t seed = 0;
};

/// CART regression tree on (X, y): variance-reduction splits, mean leaves.
Tree fit_regression_tree(const Matrix& X, std::span<const double> y, const TreeParams& params);

TreeEnsemble fit_random_forest(const Matrix& X, std::span<const double> y, const ForestParams& params);

/// Stagewise boosting on the negative gradient. Logistic mode produces
/// log-odds scores and requires targets in {0, 1}.
TreeEnsemble fit_gradient_boosting(const Matrix& X, std::span<const double> targets, const BoostParams& params);

std::vector<double> ensemble_predict(const TreeEnsemble& e, const Matrix& X);

/// Split-gain importance per feature, normalized to sum 1 (all zeros when the
/// ensemble has no splits).
std::vector<double> feature_importance(const TreeEnsemble& e);

std::string to_text(const TreeEnsemble& e);
TreeEnsemble from_text(const std::string& text);
void save(const TreeEnsemble& e, const std::filesystem::path& path);
TreeEnsemble load(const std::filesystem::path& path);

}  // namespace shiftsched::trees
