#include "shiftsched/nn.hpp"

#include <cmath>
#include <string>

namespace shiftsched {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace shiftsched

namespace shiftsched::nn {

void LayerSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw std::invalid_argument("layer dimensions must be >= 1");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  }
  if (!(l2_strength >= 0.0)) {
    throw std::invalid_argument("l2_strength must be nonnegative");
  }
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    l.spec.validate();
    if (l.weights.rows() != l.spec.output_dim || l.weights.cols() != l.spec.input_dim ||
        l.bias.size() != l.spec.output_dim) {
      throw DimensionError("layer " + std::to_string(k) + " parameter shapes disagree with its spec");
    }
    if (k > 0 && layers_[k - 1].spec.output_dim != l.spec.input_dim) {
      throw DimensionError("layer " + std::to_string(k) + " input_dim does not chain");
    }
  }
}

Mlp Mlp::init(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  if (specs.empty()) throw std::invalid_argument("an Mlp needs at least one layer");
  Rng rng(seed);
  std::vector<Layer> layers;
  layers.reserve(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& s = specs[k];
    s.validate();
    if (k > 0 && specs[k - 1].output_dim != s.input_dim) {
      throw DimensionError("layer " + std::to_string(k) + " input_dim " + std::to_string(s.input_dim) +
                           " does not match previous output_dim " + std::to_string(specs[k - 1].output_dim));
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.input_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer{s, Matrix(s.output_dim, s.input_dim), Vector::Zero(s.output_dim)};
    for (int r = 0; r < s.output_dim; ++r) {
      for (int c = 0; c < s.input_dim; ++c) layer.weights(r, c) = dist(rng);
    }
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

int Mlp::input_dim() const {
  if (layers_.empty()) throw std::logic_error("empty Mlp");
  return layers_.front().spec.input_dim;
}

int Mlp::output_dim() const {
  if (layers_.empty()) throw std::logic_error("empty Mlp");
  return layers_.back().spec.output_dim;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Gradients Gradients::zeros_like(const Mlp& m) {
  Gradients g;
  for (const auto& l : m.layers()) {
    g.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (weights.size() != other.weights.size()) throw DimensionError("gradient layer count mismatch");
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] += other.weights[k];
    bias[k] += other.bias[k];
  }
  return *this;
}

Gradients& Gradients::scale(double factor) {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] *= factor;
    bias[k] *= factor;
  }
  if (input.size() > 0) input *= factor;
  return *this;
}

bool Gradients::all_finite() const {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!weights[k].allFinite() || !bias[k].allFinite()) return false;
  }
  return input.size() == 0 || input.allFinite();
}

namespace {

void check_batch(const Mlp& m, const Matrix& batch) {
  if (m.empty()) throw std::logic_error("forward on empty Mlp");
  if (batch.cols() != m.input_dim()) {
    throw DimensionError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                         std::to_string(m.input_dim()));
  }
}

Activations run_forward(const Mlp& m, const Matrix& batch, Rng* rng) {
  check_batch(m, batch);
  Activations acts;
  acts.input = batch;
  const Matrix* in = &acts.input;
  for (const auto& layer : m.layers()) {
    Matrix pre = (*in) * layer.weights.transpose();
    pre.rowwise() += layer.bias.transpose();
    Matrix post = layer.spec.activation == Activation::relu ? Matrix(pre.cwiseMax(0.0)) : pre;
    Matrix mask;
    if (rng != nullptr && layer.spec.dropout_rate > 0.0) {
      const double keep = 1.0 - layer.spec.dropout_rate;
      std::bernoulli_distribution survive(keep);
      mask.resize(post.rows(), post.cols());
      for (Eigen::Index r = 0; r < mask.rows(); ++r) {
        for (Eigen::Index c = 0; c < mask.cols(); ++c) mask(r, c) = survive(*rng) ? 1.0 / keep : 0.0;
      }
      post = post.cwiseProduct(mask);
    }
    acts.pre.push_back(std::move(pre));
    acts.post.push_back(std::move(post));
    acts.masks.push_back(std::move(mask));
    in = &acts.post.back();
  }
  return acts;
}

}  // namespace

Activations forward(const Mlp& m, const Matrix& batch) { return run_forward(m, batch, nullptr); }

Activations forward_train(const Mlp& m, const Matrix& batch, Rng& rng) { return run_forward(m, batch, &rng); }

Activations forward(const Mlp& m, const Matrix& batch, bool train_mode, std::uint64_t seed) {
  if (!train_mode) return forward(m, batch);
  Rng rng(seed);
  return forward_train(m, batch, rng);
}

Matrix predict(const Mlp& m, const Matrix& batch) {
  check_batch(m, batch);
  Matrix cur = batch;
  for (const auto& layer : m.layers()) {
    Matrix pre = cur * layer.weights.transpose();
    pre.rowwise() += layer.bias.transpose();
    cur = layer.spec.activation == Activation::relu ? Matrix(pre.cwiseMax(0.0)) : std::move(pre);
  }
  return cur;
}

Gradients backward(const Mlp& m, const Activations& acts, const Matrix& upstream) {
  const auto& layers = m.layers();
  const std::size_t depth = layers.size();
  if (acts.pre.size() != depth || acts.post.size() != depth || acts.masks.size() != depth) {
    throw std::logic_error("stale activations: layer count differs from the network");
  }
  if (acts.input.cols() != m.input_dim() || upstream.rows() != acts.input.rows() ||
      upstream.cols() != m.output_dim()) {
    throw std::logic_error("stale activations: shapes differ from the network or upstream gradient");
  }
  for (std::size_t k = 0; k < depth; ++k) {
    if (acts.pre[k].cols() != layers[k].spec.output_dim || acts.pre[k].rows() != acts.input.rows()) {
      throw std::logic_error("stale activations: layer " + std::to_string(k) + " shape mismatch");
    }
  }

  Gradients g;
  g.weights.resize(depth);
  g.bias.resize(depth);
  Matrix d_post = upstream;
  for (std::size_t i = depth; i-- > 0;) {
    const auto& layer = layers[i];
    Matrix d_pre = acts.masks[i].size() > 0 ? Matrix(d_post.cwiseProduct(acts.masks[i])) : d_post;
    if (layer.spec.activation == Activation::relu) {
      d_pre = d_pre.cwiseProduct((acts.pre[i].array() > 0.0).cast<double>().matrix());
    }
    const Matrix& in = i == 0 ? acts.input : acts.post[i - 1];
    g.weights[i] = d_pre.transpose() * in;
    if (layer.spec.l2_strength > 0.0) g.weights[i] += 2.0 * layer.spec.l2_strength * layer.weights;
    g.bias[i] = d_pre.colwise().sum().transpose();
    d_post = d_pre * layer.weights;
  }
  g.input = std::move(d_post);
  return g;
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> first,
                 std::span<double> second, std::int64_t step, const AdamConfig& cfg) {
  if (grads.size() != params.size() || first.size() != params.size() || second.size() != params.size()) {
    throw DimensionError("adam_update: parameter, gradient and moment sizes differ");
  }
  if (step < 1) throw std::invalid_argument("adam_update: step must be >= 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    first[i] = cfg.beta1 * first[i] + (1.0 - cfg.beta1) * grads[i];
    second[i] = cfg.beta2 * second[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = first[i] / c1;
    const double v_hat = second[i] / c2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

AdamState::AdamState(const Mlp& m, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& l : m.layers()) {
    m_w_.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    v_w_.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    m_b_.push_back(Vector::Zero(l.bias.size()));
    v_b_.push_back(Vector::Zero(l.bias.size()));
  }
}

namespace {
template <typename Dense>
std::span<double> flat(Dense& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}
template <typename Dense>
std::span<const double> flat_const(const Dense& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}
}  // namespace

void AdamState::apply(Mlp& m, const Gradients& g) {
  auto& layers = m.layers();
  if (layers.size() != m_w_.size() || g.weights.size() != layers.size()) {
    throw DimensionError("AdamState does not mirror this network");
  }
  ++step_;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (g.weights[k].rows() != layers[k].weights.rows() || g.weights[k].cols() != layers[k].weights.cols() ||
        m_w_[k].size() != layers[k].weights.size()) {
      throw DimensionError("AdamState: gradient shape mismatch at layer " + std::to_string(k));
    }
    adam_update(flat(layers[k].weights), flat_const(g.weights[k]), flat(m_w_[k]), flat(v_w_[k]), step_, cfg_);
    adam_update(flat(layers[k].bias), flat_const(g.bias[k]), flat(m_b_[k]), flat(v_b_[k]), step_, cfg_);
  }
}

Matrix critic_input_gradient(const Mlp& critic, const Matrix& h) {
  if (critic.output_dim() != 1) throw DimensionError("critic must have a scalar output");
  const Activations acts = forward(critic, h);
  return backward(critic, acts, Matrix::Ones(h.rows(), 1)).input;
}

PenaltyResult gradient_penalty(const Mlp& critic, const Matrix& points) {
  const auto& layers = critic.layers();
  if (critic.empty() || critic.output_dim() != 1) throw DimensionError("critic must have a scalar output");
  if (layers.size() > 2) throw std::invalid_argument("gradient_penalty supports critics of depth <= 2");
  if (layers.back().spec.activation != Activation::identity) {
    throw std::invalid_argument("critic output layer must be linear");
  }
  for (const auto& l : layers) {
    if (l.spec.dropout_rate > 0.0) throw std::invalid_argument("critic layers must not use dropout");
  }
  if (points.cols() != critic.input_dim()) throw DimensionError("penalty points do not match critic input");

  const auto n = static_cast<double>(points.rows());
  PenaltyResult res;
  res.param_gradients = Gradients::zeros_like(critic);

  if (layers.size() == 1) {
    const Vector w = layers[0].weights.row(0).transpose();
    const double norm = w.norm();
    res.value = (norm - 1.0) * (norm - 1.0);
    res.mean_gradient_norm = norm;
    if (norm > 0.0) res.param_gradients.weights[0] = (2.0 * (norm - 1.0) / norm) * w.transpose();
    return res;
  }

  const auto& hidden = layers[0];
  const Vector w2 = layers[1].weights.row(0).transpose();
  Matrix pre = points * hidden.weights.transpose();
  pre.rowwise() += hidden.bias.transpose();
  Matrix active = pre.unaryExpr([&](double v) {
    return hidden.spec.activation == Activation::identity || v > 0.0 ? 1.0 : 0.0;
  });
  const Matrix a = active.array().rowwise() * w2.transpose().array();  // N x hidden
  const Matrix g = a * hidden.weights;                                   // N x input
  Matrix q(g.rows(), g.cols());
  double total = 0.0;
  double norm_sum = 0.0;
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    const double norm = g.row(r).norm();
    total += (norm - 1.0) * (norm - 1.0);
    norm_sum += norm;
    if (norm > 0.0) {
      q.row(r) = (2.0 * (norm - 1.0) / (n * norm)) * g.row(r);
    } else {
      q.row(r).setZero();
    }
  }
  res.value = total / n;
  res.mean_gradient_norm = norm_sum / n;
  res.param_gradients.weights[0] = a.transpose() * q;
  const Matrix qw = q * hidden.weights.transpose();  // N x hidden
  res.param_gradients.weights[1] = active.cwiseProduct(qw).colwise().sum();
  return res;
}

}  // namespace shiftsched::nn
