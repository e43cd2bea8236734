#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "shiftsched/nn.hpp"
#include "test_util.hpp"

using namespace shiftsched;
using namespace shiftsched::nn;

namespace {

double weighted_sum(const Matrix& out, const Matrix& weights) { return (out.array() * weights.array()).sum(); }

double l2_term(const Mlp& m) {
  double s = 0.0;
  for (const auto& layer : m.layers()) s += layer.spec.l2_strength * layer.weights.squaredNorm();
  return s;
}

// Loss = sum(output .* R) + sum_l l2_l * ||W_l||^2, evaluated in eval mode.
double probe_loss(const Mlp& m, const Matrix& x, const Matrix& r) { return weighted_sum(predict(m, x), r) + l2_term(m); }

}  // namespace

TEST_CASE("derive_seed is deterministic and separates streams") {
  CHECK(derive_seed(7, 1) == derive_seed(7, 1));
  CHECK(derive_seed(7, 1) != derive_seed(7, 2));
  CHECK(derive_seed(7, 1) != derive_seed(8, 1));
}

TEST_CASE("layer spec validation") {
  LayerSpec ok{3, 2, Activation::relu, 0.5, 0.01};
  CHECK_NOTHROW(ok.validate());
  CHECK_THROWS(LayerSpec{0, 2}.validate());
  CHECK_THROWS(LayerSpec{3, 2, Activation::relu, 1.0, 0.0}.validate());
  CHECK_THROWS(LayerSpec{3, 2, Activation::relu, 0.0, -1.0}.validate());
}

TEST_CASE("init uses the fan-in bound and zero biases") {
  const auto m = Mlp::init({{10, 6, Activation::relu}, {6, 1, Activation::identity}}, 3);
  REQUIRE(m.layers().size() == 2);
  const double bound = 1.0 / std::sqrt(10.0);
  CHECK(m.layers()[0].weights.cwiseAbs().maxCoeff() <= bound);
  CHECK(m.layers()[0].bias.isZero());
  CHECK(m.parameter_count() == 10 * 6 + 6 + 6 + 1);
  CHECK(m.input_dim() == 10);
  CHECK(m.output_dim() == 1);
}

TEST_CASE("forward rejects a mismatched batch") {
  const auto m = Mlp::init({{4, 2, Activation::relu}}, 1);
  CHECK_THROWS_AS(forward(m, Matrix::Zero(3, 5)), DimensionError);
}

TEST_CASE("identity network reproduces an affine map") {
  Layer layer{{2, 1, Activation::identity}, Matrix{{2.0, -1.0}}, Vector::Constant(1, 0.5)};
  const Mlp m({layer});
  const Matrix x{{1.0, 3.0}, {0.0, 0.0}};
  const Matrix y = predict(m, x);
  CHECK(y(0, 0) == doctest::Approx(2.0 - 3.0 + 0.5));
  CHECK(y(1, 0) == doctest::Approx(0.5));
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    Rng rng(derive_seed(99, trial));
    const auto m = testing::random_mlp(rng, 3, 12);
    const Matrix x = testing::random_matrix(rng, 5, m.input_dim());
    const Matrix r = testing::random_matrix(rng, 5, m.output_dim());
    const auto g = backward(m, forward(m, x), r);
    const double err = testing::max_gradient_error(m, g, x, [&](const Mlp& mm, const Matrix& xx) {
      return probe_loss(mm, xx, r);
    });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("inverted dropout keeps the expected activation") {
  Layer layer{{1, 1, Activation::identity, 0.5, 0.0}, Matrix::Ones(1, 1), Vector::Zero(1)};
  const Mlp m({layer});
  const Matrix x = Matrix::Ones(20000, 1);
  Rng rng(5);
  const auto acts = forward_train(m, x, rng);
  const Matrix& out = acts.output();
  CHECK(out.mean() == doctest::Approx(1.0).epsilon(0.03));
  for (Eigen::Index i = 0; i < out.rows(); ++i) CHECK((out(i, 0) == 0.0 || out(i, 0) == 2.0));
  CHECK(predict(m, x).isApprox(x));
}

TEST_CASE("seeded train-mode forward is reproducible") {
  Rng rng(1);
  const auto m = Mlp::init({{3, 8, Activation::relu, 0.5}, {8, 1, Activation::identity}}, 2);
  const Matrix x = testing::random_matrix(rng, 4, 3);
  CHECK(forward(m, x, true, 11).output().isApprox(forward(m, x, true, 11).output()));
}

TEST_CASE("backward with dropout masks matches differences under the same mask") {
  Rng rng(17);
  const auto m = Mlp::init({{3, 6, Activation::relu, 0.4}, {6, 1, Activation::identity}}, 4);
  const Matrix x = testing::random_matrix(rng, 6, 3);
  const Matrix r = testing::random_matrix(rng, 6, 1);
  const auto acts = forward(m, x, true, 21);
  const auto g = backward(m, acts, r);
  const double err = testing::max_gradient_error(m, g, x, [&](const Mlp& mm, const Matrix& xx) {
    return weighted_sum(forward(mm, xx, true, 21).output(), r) + l2_term(mm);
  });
  CHECK(err < 1e-5);
}

TEST_CASE("l2 adds 2*lambda*W to weight gradients") {
  Layer layer{{2, 1, Activation::identity, 0.0, 0.25}, Matrix{{1.0, -2.0}}, Vector::Zero(1)};
  const Mlp m({layer});
  const auto g = backward(m, forward(m, Matrix::Zero(1, 2)), Matrix::Zero(1, 1));
  CHECK(g.weights[0](0, 0) == doctest::Approx(0.5));
  CHECK(g.weights[0](0, 1) == doctest::Approx(-1.0));
}

TEST_CASE("first Adam step moves each parameter by the learning rate") {
  std::vector<double> p{1.0, -1.0};
  const std::vector<double> g{0.3, -7.0};
  std::vector<double> m1(2, 0.0);
  std::vector<double> m2(2, 0.0);
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  adam_update(p, g, m1, m2, 1, cfg);
  CHECK(p[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-1.0 + 0.01).epsilon(1e-6));
}

TEST_CASE("Adam state minimizes a quadratic") {
  Layer layer{{1, 1, Activation::identity}, Matrix::Constant(1, 1, 3.0), Vector::Constant(1, -2.0)};
  Mlp m({layer});
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  AdamState opt(m, cfg);
  const Matrix x = Matrix::Ones(1, 1);
  for (int i = 0; i < 2000; ++i) {
    const auto acts = forward(m, x);
    const Matrix up = 2.0 * acts.output();  // d/dy of y^2
    opt.apply(m, backward(m, acts, up));
  }
  CHECK(std::abs(predict(m, x)(0, 0)) < 1e-2);
  CHECK(opt.step() == 2000);
}

TEST_CASE("gradients accumulate and scale") {
  const auto m = Mlp::init({{2, 3, Activation::relu}, {3, 1, Activation::identity}}, 8);
  Rng rng(3);
  const Matrix x = testing::random_matrix(rng, 4, 2);
  const auto g = backward(m, forward(m, x), Matrix::Ones(4, 1));
  auto sum = Gradients::zeros_like(m);
  sum += g;
  sum += g;
  sum.scale(0.5);
  CHECK(sum.weights[0].isApprox(g.weights[0]));
  CHECK(sum.all_finite());
}

TEST_CASE("critic input gradient matches central differences") {
  Rng rng(41);
  const auto critic = Mlp::init({{3, 16, Activation::relu}, {16, 1, Activation::identity}}, 9);
  const Matrix h = testing::random_matrix(rng, 7, 3);
  const Matrix grad = critic_input_gradient(critic, h);
  const double eps = 1e-6;
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    for (Eigen::Index j = 0; j < h.cols(); ++j) {
      Matrix hp = h;
      Matrix hm = h;
      hp(i, j) += eps;
      hm(i, j) -= eps;
      const double fd = (predict(critic, hp)(i, 0) - predict(critic, hm)(i, 0)) / (2 * eps);
      CHECK(grad(i, j) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("gradient penalty value and parameter gradient") {
  Rng rng(77);
  const auto critic = Mlp::init({{2, 16, Activation::relu}, {16, 1, Activation::identity}}, 12);
  const Matrix h = testing::random_matrix(rng, 9, 2);

  const Matrix grad = critic_input_gradient(critic, h);
  double expected = 0.0;
  for (Eigen::Index i = 0; i < h.rows(); ++i) expected += std::pow(grad.row(i).norm() - 1.0, 2);
  expected /= static_cast<double>(h.rows());

  const auto pen = gradient_penalty(critic, h);
  CHECK(pen.value == doctest::Approx(expected));
  const double err = testing::max_gradient_error(critic, pen.param_gradients, h, [](const Mlp& c, const Matrix& pts) {
    return gradient_penalty(c, pts).value;
  }, /*check_input=*/false);
  CHECK(err < 1e-5);
}

TEST_CASE("linear critic has a constant-norm input gradient") {
  Layer layer{{2, 1, Activation::identity}, Matrix{{0.6, 0.8}}, Vector::Zero(1)};
  const Mlp critic({layer});
  const auto pen = gradient_penalty(critic, Matrix::Random(5, 2));
  CHECK(pen.value == doctest::Approx(0.0));
  CHECK(pen.mean_gradient_norm == doctest::Approx(1.0));
}
