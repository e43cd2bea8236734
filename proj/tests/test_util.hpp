#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "shiftsched/nn.hpp"

namespace shiftsched::testing {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

/// ReLU hidden layers (1..max_depth layers in total), identity output, no dropout.
inline nn::Mlp random_mlp(Rng& rng, int max_depth, int max_width) {
  std::uniform_int_distribution<int> depth_dist(1, max_depth);
  std::uniform_int_distribution<int> width_dist(1, max_width);
  std::uniform_int_distribution<int> out_dist(1, 3);
  std::bernoulli_distribution coin(0.5);
  const int depth = depth_dist(rng);
  std::vector<nn::LayerSpec> specs;
  int in = width_dist(rng);
  for (int l = 0; l < depth; ++l) {
    const bool last = l + 1 == depth;
    const int out = last ? out_dist(rng) : width_dist(rng);
    specs.push_back({in, out, last ? nn::Activation::identity : nn::Activation::relu, 0.0, coin(rng) ? 1e-3 : 0.0});
    in = out;
  }
  return nn::Mlp::init(specs, rng());
}

inline std::vector<bool> relu_pattern(const nn::Mlp& m, const Matrix& x) {
  const auto acts = nn::forward(m, x);
  std::vector<bool> pattern;
  for (std::size_t l = 0; l < acts.pre.size(); ++l) {
    if (m.layers()[l].spec.activation != nn::Activation::relu) continue;
    for (Eigen::Index i = 0; i < acts.pre[l].size(); ++i) pattern.push_back(acts.pre[l].data()[i] > 0.0);
  }
  return pattern;
}

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-7) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

using LossFn = std::function<double(const nn::Mlp&, const Matrix&)>;

/// Largest relative error between `g` and central differences of `loss` over
/// every parameter (and, optionally, every input entry). Coordinates whose
/// perturbation flips a ReLU unit are skipped: the loss is not differentiable
/// across the kink.
inline double max_gradient_error(const nn::Mlp& m, const nn::Gradients& g, const Matrix& x, const LossFn& loss,
                                 bool check_input = true, double eps = 1e-5, int* skipped = nullptr) {
  double worst = 0.0;
  const auto base = relu_pattern(m, x);
  auto probe = [&](auto&& perturb, double analytic) {
    nn::Mlp mp = m;
    nn::Mlp mm = m;
    Matrix xp = x;
    Matrix xm = x;
    perturb(mp, xp, eps);
    perturb(mm, xm, -eps);
    if (relu_pattern(mp, xp) != base || relu_pattern(mm, xm) != base) {
      if (skipped != nullptr) ++*skipped;
      return;
    }
    const double numeric = (loss(mp, xp) - loss(mm, xm)) / (2.0 * eps);
    worst = std::max(worst, relative_error(analytic, numeric));
  };
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    const auto& layer = m.layers()[l];
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
      probe([&](nn::Mlp& mm, Matrix&, double e) { mm.layers()[l].weights.data()[i] += e; }, g.weights[l].data()[i]);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      probe([&](nn::Mlp& mm, Matrix&, double e) { mm.layers()[l].bias[i] += e; }, g.bias[l][i]);
    }
  }
  if (check_input) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      probe([&](nn::Mlp&, Matrix& xx, double e) { xx.data()[i] += e; }, g.input.data()[i]);
    }
  }
  return worst;
}

}  // namespace shiftsched::testing
