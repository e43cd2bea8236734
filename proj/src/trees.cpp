#include "shiftsched/trees.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace shiftsched::trees {

using nlohmann::json;

double Tree::predict(const double* row) const {
  if (nodes.empty()) throw std::logic_error("predict on an empty tree");
  int idx = 0;
  while (!nodes[idx].is_leaf()) {
    const auto& n = nodes[idx];
    idx = row[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[idx].value;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes[i].is_leaf()) {
      level[nodes[i].left] = level[i] + 1;
      level[nodes[i].right] = level[i] + 1;
    }
  }
  return deepest;
}

namespace {

// Quantile binning shared by every tree of one fit. Split "bin <= k" is the
// same partition as "x <= cuts[k]" on raw values.
struct BinnedData {
  std::vector<std::vector<double>> cuts;      // per feature
  std::vector<std::vector<std::uint16_t>> bins;  // per feature, per sample
  Eigen::Index n = 0;
  int d = 0;
};

BinnedData bin_features(const Matrix& X, int max_bins) {
  BinnedData b;
  b.n = X.rows();
  b.d = static_cast<int>(X.cols());
  const int limit = std::clamp(max_bins, 2, 65535);
  b.cuts.resize(b.d);
  b.bins.resize(b.d);
  std::vector<double> col(static_cast<std::size_t>(b.n));
  for (int j = 0; j < b.d; ++j) {
    for (Eigen::Index i = 0; i < b.n; ++i) col[i] = X(i, j);
    std::sort(col.begin(), col.end());
    std::vector<double> uniq;
    uniq.reserve(col.size());
    for (double v : col) {
      if (uniq.empty() || v != uniq.back()) uniq.push_back(v);
    }
    auto& cuts = b.cuts[j];
    if (static_cast<int>(uniq.size()) <= limit) {
      for (std::size_t k = 1; k < uniq.size(); ++k) cuts.push_back(uniq[k - 1] + (uniq[k] - uniq[k - 1]) / 2);
    } else {
      for (int q = 1; q < limit; ++q) {
        const auto pos = static_cast<std::size_t>((static_cast<double>(q) * static_cast<double>(b.n)) / limit);
        const double v = col[std::min(pos, col.size() - 1)];
        auto next = std::upper_bound(uniq.begin(), uniq.end(), v);
        if (next == uniq.end()) continue;
        const double cut = v + (*next - v) / 2;
        if (cuts.empty() || cut > cuts.back()) cuts.push_back(cut);
      }
    }
    auto& bj = b.bins[j];
    bj.resize(static_cast<std::size_t>(b.n));
    for (Eigen::Index i = 0; i < b.n; ++i) {
      bj[i] = static_cast<std::uint16_t>(std::lower_bound(cuts.begin(), cuts.end(), X(i, j)) - cuts.begin());
    }
  }
  return b;
}

struct BuildParams {
  int max_depth;
  int min_leaf;
  int feature_subsample;
  double min_gain;
  double leaf_l2;
};

class TreeBuilder {
 public:
  TreeBuilder(const BinnedData& data, std::span<const double> grad, std::span<const double> hess,
              const BuildParams& params, Rng& rng)
      : data_(data), grad_(grad), hess_(hess), params_(params), rng_(rng) {
    features_.resize(static_cast<std::size_t>(data.d));
    std::iota(features_.begin(), features_.end(), 0);
  }

  Tree build(std::vector<std::int32_t> samples) {
    tree_.nodes.clear();
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  struct Sums {
    double g = 0.0, h = 0.0;
    std::int64_t count = 0;
  };

  double score(double g, double h) const { return g * g / (h + params_.leaf_l2); }

  int grow(std::vector<std::int32_t>& samples, int depth) {
    Sums total;
    double scale = 0.0;
    for (auto s : samples) {
      total.g += grad_[s];
      total.h += hess_[s];
      if (hess_[s] > 0.0) scale += grad_[s] * grad_[s] / hess_[s];
    }
    total.count = static_cast<std::int64_t>(samples.size());

    const int idx = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode{});
    tree_.nodes[idx].value = total.h + params_.leaf_l2 > 0.0 ? -total.g / (total.h + params_.leaf_l2) : 0.0;

    const bool depth_ok = params_.max_depth <= 0 || depth < params_.max_depth;
    if (!depth_ok || total.count < 2 * static_cast<std::int64_t>(params_.min_leaf) || total.h <= 0.0) {
      return idx;
    }

    int best_feature = -1;
    int best_bin = -1;
    double best_gain = params_.min_gain * std::max(scale, 1e-300);
    const double parent = score(total.g, total.h);

    for (int f : candidate_features()) {
      const auto& cuts = data_.cuts[f];
      if (cuts.empty()) continue;
      const auto& bins = data_.bins[f];
      hist_.assign(cuts.size() + 1, Sums{});
      for (auto s : samples) {
        auto& cell = hist_[bins[s]];
        cell.g += grad_[s];
        cell.h += hess_[s];
        ++cell.count;
      }
      Sums left;
      for (std::size_t k = 0; k < cuts.size(); ++k) {
        left.g += hist_[k].g;
        left.h += hist_[k].h;
        left.count += hist_[k].count;
        const std::int64_t right_count = total.count - left.count;
        if (left.count < params_.min_leaf) continue;
        if (right_count < params_.min_leaf) break;
        if (hist_[k].count == 0) continue;
        const double gain = score(left.g, left.h) + score(total.g - left.g, total.h - left.h) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_bin = static_cast<int>(k);
        }
      }
    }
    if (best_feature < 0) return idx;

    std::vector<std::int32_t> left_samples, right_samples;
    const auto& bins = data_.bins[best_feature];
    for (auto s : samples) {
      (bins[s] <= best_bin ? left_samples : right_samples).push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();

    tree_.nodes[idx].feature = best_feature;
    tree_.nodes[idx].threshold = data_.cuts[best_feature][best_bin];
    tree_.nodes[idx].gain = best_gain;
    const int l = grow(left_samples, depth + 1);
    tree_.nodes[idx].left = l;
    const int r = grow(right_samples, depth + 1);
    tree_.nodes[idx].right = r;
    return idx;
  }

  std::vector<int> candidate_features() {
    const int d = data_.d;
    const int k = params_.feature_subsample;
    if (k <= 0 || k >= d) return features_;
    std::vector<int> pool = features_;
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<int> pick(i, d - 1);
      std::swap(pool[i], pool[pick(rng_)]);
    }
    pool.resize(static_cast<std::size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  const BinnedData& data_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  BuildParams params_;
  Rng& rng_;
  std::vector<int> features_;
  std::vector<Sums> hist_;
  Tree tree_;
};

void check_xy(const Matrix& X, std::size_t ny) {
  if (X.rows() == 0 || ny == 0) throw EmptyDataError("tree fitting needs at least one sample");
  if (static_cast<std::size_t>(X.rows()) != ny) {
    throw DimensionError("feature rows and target length differ");
  }
  if (X.cols() == 0) throw DimensionError("tree fitting needs at least one feature");
}

std::vector<std::int32_t> all_samples(Eigen::Index n) {
  std::vector<std::int32_t> s(static_cast<std::size_t>(n));
  std::iota(s.begin(), s.end(), 0);
  return s;
}

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::clamp(threads, 1, std::max(1, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < count; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

Tree fit_regression_tree(const Matrix& X, std::span<const double> y, const TreeParams& params) {
  check_xy(X, y.size());
  const BinnedData data = bin_features(X, params.max_bins);
  std::vector<double> grad(y.size()), hess(y.size(), 1.0);
  std::transform(y.begin(), y.end(), grad.begin(), [](double v) { return -v; });
  Rng rng(params.seed);
  TreeBuilder builder(data, grad, hess,
                      {params.max_depth, std::max(1, params.min_leaf), params.feature_subsample, params.min_gain,
                       params.leaf_l2},
                      rng);
  return builder.build(all_samples(X.rows()));
}

TreeEnsemble fit_random_forest(const Matrix& X, std::span<const double> y, const ForestParams& params) {
  check_xy(X, y.size());
  if (params.n_trees < 1) throw std::invalid_argument("random forest needs n_trees >= 1");
  const BinnedData data = bin_features(X, params.max_bins);
  const int d = static_cast<int>(X.cols());
  const int mtry = params.feature_subsample < 0
                       ? std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))))
                       : params.feature_subsample;
  std::vector<double> grad(y.size()), hess(y.size(), 1.0);
  std::transform(y.begin(), y.end(), grad.begin(), [](double v) { return -v; });

  TreeEnsemble e;
  e.mode = EnsembleMode::forest_mean;
  e.n_features = d;
  e.trees.resize(static_cast<std::size_t>(params.n_trees));
  parallel_for(params.n_trees, params.threads, [&](int t) {
    Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::int32_t> samples;
    if (params.bootstrap) {
      std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(X.rows() - 1));
      samples.resize(static_cast<std::size_t>(X.rows()));
      for (auto& s : samples) s = pick(rng);
      std::sort(samples.begin(), samples.end());
    } else {
      samples = all_samples(X.rows());
    }
    TreeBuilder builder(data, grad, hess, {params.max_depth, std::max(1, params.min_leaf), mtry, 1e-12, 0.0}, rng);
    e.trees[t] = builder.build(std::move(samples));
  });
  return e;
}

TreeEnsemble fit_gradient_boosting(const Matrix& X, std::span<const double> targets, const BoostParams& params) {
  check_xy(X, targets.size());
  if (params.n_trees < 0) throw std::invalid_argument("n_trees must be >= 0");
  const auto n = targets.size();
  const bool logistic = params.loss == BoostLoss::logistic;
  if (logistic) {
    for (double t : targets) {
      if (t != 0.0 && t != 1.0) throw std::invalid_argument("logistic boosting requires labels in {0, 1}");
    }
  }

  TreeEnsemble e;
  e.mode = EnsembleMode::boosted_sum;
  e.learning_rate = params.learning_rate;
  e.n_features = static_cast<int>(X.cols());
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(n);
  if (logistic) {
    const double p = std::clamp(mean, 1e-6, 1.0 - 1e-6);
    e.base_score = std::log(p / (1.0 - p));
  } else {
    e.base_score = mean;
  }
  if (params.n_trees == 0) return e;

  const BinnedData data = bin_features(X, params.max_bins);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = X;
  const std::span<const double> rows(row_major.data(), static_cast<std::size_t>(row_major.size()));
  std::vector<double> score(n, e.base_score), grad(n), hess(n);
  Rng rng(params.seed);
  const BuildParams build{params.max_depth, std::max(1, params.min_leaf), 0, 1e-12, logistic ? 1.0 : 0.0};
  for (int t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (logistic) {
        const double p = 1.0 / (1.0 + std::exp(-score[i]));
        grad[i] = p - targets[i];
        hess[i] = std::max(p * (1.0 - p), 1e-12);
      } else {
        grad[i] = score[i] - targets[i];
        hess[i] = 1.0;
      }
    }
    TreeBuilder builder(data, grad, hess, build, rng);
    Tree tree = builder.build(all_samples(X.rows()));
    for (std::size_t i = 0; i < n; ++i) {
      score[i] += params.learning_rate * tree.predict(rows.data() + i * X.cols());
    }
    e.trees.push_back(std::move(tree));
  }
  return e;
}

std::vector<double> ensemble_predict(const TreeEnsemble& e, const Matrix& X) {
  if (X.cols() != e.n_features) {
    throw DimensionError("ensemble trained on " + std::to_string(e.n_features) + " features, got " +
                         std::to_string(X.cols()));
  }
  if (e.mode == EnsembleMode::forest_mean && e.trees.empty()) {
    throw std::logic_error("cannot predict with an empty forest");
  }
  std::vector<double> out(static_cast<std::size_t>(X.rows()));
  std::vector<double> row(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) row[j] = X(i, j);
    double sum = 0.0;
    for (const auto& t : e.trees) sum += t.predict(row.data());
    out[i] = e.mode == EnsembleMode::forest_mean ? sum / static_cast<double>(e.trees.size())
                                                 : e.base_score + e.learning_rate * sum;
  }
  return out;
}

std::vector<double> feature_importance(const TreeEnsemble& e) {
  std::vector<double> imp(static_cast<std::size_t>(e.n_features), 0.0);
  for (const auto& t : e.trees) {
    for (const auto& n : t.nodes) {
      if (!n.is_leaf()) imp[n.feature] += n.gain;
    }
  }
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (total > 0.0) {
    for (auto& v : imp) v /= total;
  }
  return imp;
}

std::string to_text(const TreeEnsemble& e) {
  json j;
  j["format"] = "shiftsched.tree_ensemble";
  j["version"] = 1;
  j["mode"] = e.mode == EnsembleMode::forest_mean ? "forest_mean" : "boosted_sum";
  j["learning_rate"] = e.learning_rate;
  j["base_score"] = e.base_score;
  j["n_features"] = e.n_features;
  json trees = json::array();
  for (const auto& t : e.trees) {
    json nodes = json::array();
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      const auto& n = t.nodes[i];
      json node = {{"id", i}};
      if (n.is_leaf()) {
        node["value"] = n.value;
      } else {
        node["feature"] = n.feature;
        node["threshold"] = n.threshold;
        node["left"] = n.left;
        node["right"] = n.right;
        node["gain"] = n.gain;
        node["value"] = n.value;
      }
      nodes.push_back(std::move(node));
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  j["trees"] = std::move(trees);
  return j.dump(1);
}

TreeEnsemble from_text(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("format", "") != "shiftsched.tree_ensemble") {
    throw std::runtime_error("not a tree ensemble file");
  }
  TreeEnsemble e;
  const std::string mode = j.at("mode");
  if (mode == "forest_mean") {
    e.mode = EnsembleMode::forest_mean;
  } else if (mode == "boosted_sum") {
    e.mode = EnsembleMode::boosted_sum;
  } else {
    throw std::runtime_error("unknown ensemble mode: " + mode);
  }
  e.learning_rate = j.at("learning_rate");
  e.base_score = j.at("base_score");
  e.n_features = j.at("n_features");
  for (const auto& jt : j.at("trees")) {
    Tree t;
    const auto& nodes = jt.at("nodes");
    t.nodes.resize(nodes.size());
    for (const auto& jn : nodes) {
      const std::size_t id = jn.at("id");
      if (id >= t.nodes.size()) throw std::runtime_error("node id out of range");
      TreeNode n;
      n.value = jn.value("value", 0.0);
      if (jn.contains("feature")) {
        n.feature = jn.at("feature");
        n.threshold = jn.at("threshold");
        n.left = jn.at("left");
        n.right = jn.at("right");
        n.gain = jn.value("gain", 0.0);
        if (n.feature >= e.n_features || n.left <= static_cast<int>(id) || n.right <= static_cast<int>(id) ||
            n.left >= static_cast<int>(nodes.size()) || n.right >= static_cast<int>(nodes.size())) {
          throw std::runtime_error("malformed split node");
        }
      }
      t.nodes[id] = n;
    }
    e.trees.push_back(std::move(t));
  }
  return e;
}

void save(const TreeEnsemble& e, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_text(e) << '\n';
}

TreeEnsemble load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

}  // namespace shiftsched::trees
