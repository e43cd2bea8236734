#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace shiftsched {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Mixes a base seed with a stream index (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace shiftsched

namespace shiftsched::nn {

enum class Activation { relu, identity };

struct LayerSpec {
  int input_dim = 1;
  int output_dim = 1;
  Activation activation = Activation::identity;
  double dropout_rate = 0.0;  // applied to the layer output, inverted scaling
  double l2_strength = 0.0;

  void validate() const;
};

struct Layer {
  LayerSpec spec;
  Matrix weights;  // output_dim x input_dim
  Vector bias;     // output_dim
};

/// Dense feed-forward network. Samples are rows.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static Mlp init(const std::vector<LayerSpec>& specs, std::uint64_t seed);

  [[nodiscard]] const std::vector<Layer>& layers() const noexcept { return layers_; }
  [[nodiscard]] std::vector<Layer>& layers() noexcept { return layers_; }
  [[nodiscard]] int input_dim() const;
  [[nodiscard]] int output_dim() const;
  [[nodiscard]] bool empty() const noexcept { return layers_.empty(); }
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] bool all_finite() const;

 private:
  std::vector<Layer> layers_;
};

/// Everything a backward pass needs: the input batch, each layer's
/// pre-activation and (post-dropout) output, and the dropout scale masks.
struct Activations {
  Matrix input;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  std::vector<Matrix> masks;  // empty matrix when the layer had no dropout

  [[nodiscard]] const Matrix& output() const { return post.empty() ? input : post.back(); }
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
  Matrix input;

  static Gradients zeros_like(const Mlp& m);
  Gradients& operator+=(const Gradients& other);
  Gradients& scale(double factor);
  [[nodiscard]] bool all_finite() const;
};

/// Eval-mode forward: no dropout, no state.
Activations forward(const Mlp& m, const Matrix& batch);

/// Train-mode forward: dropout masks drawn from `rng` and kept for backward.
Activations forward_train(const Mlp& m, const Matrix& batch, Rng& rng);

/// Seeded convenience wrapper matching forward_train with a fresh generator.
Activations forward(const Mlp& m, const Matrix& batch, bool train_mode, std::uint64_t seed);

Matrix predict(const Mlp& m, const Matrix& batch);

/// Backpropagates `upstream` (dLoss/dOutput, one row per sample). Weight
/// gradients include the 2*l2*W term; `input` holds dLoss/dBatch.
Gradients backward(const Mlp& m, const Activations& acts, const Matrix& upstream);

struct AdamConfig {
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update over a flat parameter block. `step` is the
/// 1-based index of this update.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> first,
                 std::span<double> second, std::int64_t step, const AdamConfig& cfg);

class AdamState {
 public:
  AdamState() = default;
  AdamState(const Mlp& m, AdamConfig cfg);

  [[nodiscard]] std::int64_t step() const noexcept { return step_; }
  [[nodiscard]] const AdamConfig& config() const noexcept { return cfg_; }
  void set_learning_rate(double lr) noexcept { cfg_.learning_rate = lr; }

  void apply(Mlp& m, const Gradients& g);

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<Matrix> m_w_, v_w_;
  std::vector<Vector> m_b_, v_b_;
};

/// Per-sample gradient of a scalar-output network with respect to its input,
/// exact for the realized ReLU pattern.
Matrix critic_input_gradient(const Mlp& critic, const Matrix& h);

struct PenaltyResult {
  double value = 0.0;           // mean over samples of (||grad_h f(h)|| - 1)^2
  Gradients param_gradients;    // d value / d critic parameters
  double mean_gradient_norm = 0.0;
};

/// Gradient penalty and its closed-form parameter gradient for critics of
/// depth <= 2 (optional ReLU hidden layer, identity scalar output). The ReLU
/// activation pattern is treated as locally constant.
PenaltyResult gradient_penalty(const Mlp& critic, const Matrix& points);

}  // namespace shiftsched::nn
