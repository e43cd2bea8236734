#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "training.hpp"

namespace shiftsched {
namespace detail {
namespace {

Matrix gather_rows(const Matrix& X, std::span<const Eigen::Index> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(idx[r]);
  return out;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.size() == 0 && b.size() == 0) return {};
  Matrix out(a.rows() + b.rows(), std::max(a.cols(), b.cols()));
  out << a, b;
  return out;
}

nn::Activations stack(const nn::Activations& a, const nn::Activations& b) {
  nn::Activations out;
  out.input = vstack(a.input, b.input);
  for (std::size_t k = 0; k < a.pre.size(); ++k) {
    out.pre.push_back(vstack(a.pre[k], b.pre[k]));
    out.post.push_back(vstack(a.post[k], b.post[k]));
    out.masks.push_back(vstack(a.masks[k], b.masks[k]));
  }
  return out;
}

double mean_output(const nn::Mlp& critic, const Matrix& h) { return nn::predict(critic, h).mean(); }

struct CriticStepResult {
  double gap = 0.0;
  double penalty = 0.0;
};

// One ascent step on E_A f - E_B f - beta * penalty, interpolating with `rng`.
CriticStepResult critic_step(nn::Mlp& critic, nn::AdamState& opt, const Matrix& ha, const Matrix& hb, double beta,
                             Rng& rng) {
  const auto na = static_cast<double>(ha.rows());
  const auto nb = static_cast<double>(hb.rows());
  const auto acts_a = nn::forward(critic, ha);
  const auto acts_b = nn::forward(critic, hb);
  CriticStepResult res;
  res.gap = acts_a.output().mean() - acts_b.output().mean();

  nn::Gradients g = nn::backward(critic, acts_a, Matrix::Constant(ha.rows(), 1, -1.0 / na));
  g += nn::backward(critic, acts_b, Matrix::Constant(hb.rows(), 1, 1.0 / nb));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::Index n = std::min(ha.rows(), hb.rows());
  Matrix interp(n, ha.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = unit(rng);
    interp.row(i) = u * ha.row(i) + (1.0 - u) * hb.row(i);
  }
  nn::PenaltyResult pen = nn::gradient_penalty(critic, interp);
  res.penalty = pen.value;
  if (beta != 0.0) g += pen.param_gradients.scale(beta);
  if (!g.all_finite()) throw TrainingDivergedError("critic gradient is not finite");
  opt.apply(critic, g);
  return res;
}

}  // namespace

std::vector<nn::LayerSpec> extractor_specs(int input_dim, const DnnHyper& h) {
  return {{input_dim, h.extractor_width, nn::Activation::relu, h.dropout, h.l2}};
}

std::vector<nn::LayerSpec> regressor_specs(const DnnHyper& h) {
  return {{h.extractor_width, h.regressor_width, nn::Activation::relu, 0.0, h.l2},
          {h.regressor_width, 1, nn::Activation::identity, 0.0, h.l2}};
}

std::vector<nn::LayerSpec> critic_specs(int latent_dim, int width) {
  return {{latent_dim, width, nn::Activation::relu, 0.0, 0.0}, {width, 1, nn::Activation::identity, 0.0, 0.0}};
}

TrainingRun train_network(const TrainingInputs& in, nn::Mlp extractor, nn::Mlp regressor, int epochs, int batch_size,
                          double learning_rate, std::uint64_t seed, const TrainObserver& observer) {
  const Eigen::Index n = in.features_a.rows();
  if (n < 1) throw InsufficientDataError("training needs at least one labeled row");
  if (static_cast<Eigen::Index>(in.targets.size()) != n) throw DimensionError("label count differs from rows");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  const bool adversarial = in.adversarial != nullptr && in.features_b != nullptr;
  if (adversarial) {
    if (in.features_b->cols() != in.features_a.cols()) throw DimensionError("A and B feature counts differ");
    if (in.features_b->rows() < 1) throw InsufficientDataError("setting B has no rows");
    const auto& p = *in.adversarial;
    if (p.alpha < 0.0 || p.beta < 0.0 || p.n_critic < 1) {
      throw std::invalid_argument("need alpha >= 0, beta >= 0, n_critic >= 1");
    }
  }

  TrainingRun run;
  run.extractor = std::move(extractor);
  run.regressor = std::move(regressor);
  const int latent = run.extractor.output_dim();

  Rng main_rng(derive_seed(seed, 1));
  Rng adv_rng(derive_seed(seed, 5));
  nn::AdamConfig cfg;
  cfg.learning_rate = learning_rate;
  nn::AdamState opt_e(run.extractor, cfg);
  nn::AdamState opt_r(run.regressor, cfg);
  nn::AdamState opt_c;
  double alpha = 0.0;
  if (adversarial) {
    run.critic = nn::Mlp::init(critic_specs(latent, in.adversarial->critic_width), derive_seed(seed, 4));
    nn::AdamConfig ccfg = cfg;
    ccfg.learning_rate = in.adversarial->critic_learning_rate.value_or(learning_rate);
    opt_c = nn::AdamState(run.critic, ccfg);
    alpha = in.adversarial->alpha;
  }

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> idx_b;
  const Matrix empty;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), main_rng);
    double sum_mae = 0.0;
    double sum_gap = 0.0;
    double sum_pen = 0.0;
    int batches = 0;

    for (Eigen::Index start = 0; start < n; start += batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(batch_size, n - start);
      const std::span<const Eigen::Index> rows(perm.data() + start, static_cast<std::size_t>(len));
      const Matrix xa = gather_rows(in.features_a, rows);
      Vector ya(len);
      for (Eigen::Index i = 0; i < len; ++i) ya(i) = in.targets[static_cast<std::size_t>(rows[i])];

      const auto acts_e = nn::forward_train(run.extractor, xa, main_rng);
      const Matrix& ha = acts_e.output();
      const auto acts_r = nn::forward_train(run.regressor, ha, main_rng);
      const Vector resid = acts_r.output().col(0) - ya;
      const double mae = resid.cwiseAbs().mean();
      if (!std::isfinite(mae)) {
        std::ostringstream msg;
        msg << "regression loss diverged at epoch " << epoch << ", batch " << batches;
        throw TrainingDivergedError(msg.str());
      }

      nn::Activations acts_eb;
      Matrix hb;
      double gap = 0.0;
      if (adversarial) {
        std::uniform_int_distribution<Eigen::Index> pick(0, in.features_b->rows() - 1);
        idx_b.resize(static_cast<std::size_t>(len));
        for (auto& i : idx_b) i = pick(adv_rng);
        acts_eb = nn::forward_train(run.extractor, gather_rows(*in.features_b, idx_b), adv_rng);
        hb = acts_eb.output();
        for (int c = 0; c < in.adversarial->n_critic; ++c) {
          const auto step = critic_step(run.critic, opt_c, ha, hb, in.adversarial->beta, adv_rng);
          sum_pen += step.penalty / in.adversarial->n_critic;
          if (observer) {
            observer({TrainPhase::critic_step, epoch, run.extractor, run.regressor, run.critic, ha, hb, step.gap});
          }
        }
        gap = mean_output(run.critic, ha) - mean_output(run.critic, hb);
      }

      Matrix up_r(len, 1);
      for (Eigen::Index i = 0; i < len; ++i) {
        up_r(i, 0) = resid(i) > 0.0 ? 1.0 / static_cast<double>(len) : (resid(i) < 0.0 ? -1.0 / static_cast<double>(len) : 0.0);
      }
      nn::Gradients g_r = nn::backward(run.regressor, acts_r, up_r);
      nn::Gradients g_e;
      if (adversarial && alpha > 0.0) {
        const double w = alpha / static_cast<double>(len);
        const auto ca = nn::backward(run.critic, nn::forward(run.critic, ha), Matrix::Constant(len, 1, w));
        const auto cb = nn::backward(run.critic, nn::forward(run.critic, hb), Matrix::Constant(len, 1, -w));
        const Matrix up_a = g_r.input + ca.input;
        g_e = nn::backward(run.extractor, stack(acts_e, acts_eb), vstack(up_a, cb.input));
      } else {
        g_e = nn::backward(run.extractor, acts_e, g_r.input);
      }
      if (!g_e.all_finite() || !g_r.all_finite()) {
        throw TrainingDivergedError("network gradient is not finite at epoch " + std::to_string(epoch));
      }
      opt_e.apply(run.extractor, g_e);
      opt_r.apply(run.regressor, g_r);
      if (observer) {
        observer({TrainPhase::outer_step, epoch, run.extractor, run.regressor, run.critic, ha,
                  adversarial ? hb : empty, gap});
      }
      sum_mae += mae;
      sum_gap += gap;
      ++batches;
    }
    if (batches > 0) {
      run.log.epochs.push_back({sum_mae / batches * in.target_scale, sum_gap / batches, sum_pen / batches});
    }
  }
  return run;
}

}  // namespace detail

WassersteinEstimate estimate_wasserstein(const Matrix& latent_a, const Matrix& latent_b, const CriticTraining& cfg) {
  if (latent_a.rows() < 1 || latent_b.rows() < 1) throw InsufficientDataError("both latent samples must be nonempty");
  if (latent_a.cols() != latent_b.cols()) throw DimensionError("latent dimensions differ");
  if (cfg.steps < 0 || cfg.batch_size < 1) throw std::invalid_argument("invalid critic training schedule");
  WassersteinEstimate est;
  est.critic = nn::Mlp::init(detail::critic_specs(static_cast<int>(latent_a.cols()), cfg.hidden_width),
                             derive_seed(cfg.seed, 4));
  nn::AdamConfig acfg;
  acfg.learning_rate = cfg.learning_rate;
  nn::AdamState opt(est.critic, acfg);
  Rng rng(derive_seed(cfg.seed, 5));
  std::uniform_int_distribution<Eigen::Index> pick_a(0, latent_a.rows() - 1);
  std::uniform_int_distribution<Eigen::Index> pick_b(0, latent_b.rows() - 1);
  Matrix ha(cfg.batch_size, latent_a.cols());
  Matrix hb(cfg.batch_size, latent_b.cols());
  for (int s = 0; s < cfg.steps; ++s) {
    for (int i = 0; i < cfg.batch_size; ++i) {
      ha.row(i) = latent_a.row(pick_a(rng));
      hb.row(i) = latent_b.row(pick_b(rng));
    }
    detail::critic_step(est.critic, opt, ha, hb, cfg.beta, rng);
  }
  est.value = detail::mean_output(est.critic, latent_a) - detail::mean_output(est.critic, latent_b);
  return est;
}

WdgrlModel fit_wdgrl(const Dataset& a, const Matrix& features_b, const DnnHyper& hyper, const WdgrlParams& params,
                     std::uint64_t seed, const TrainObserver& observer) {
  if (features_b.cols() != a.features.cols()) throw DimensionError("A and B feature counts differ");
  const auto& y = a.read_labels(LabelPurpose::training);
  WdgrlModel model;
  model.params = params;
  NetworkModel& net = model.network;
  net.hyper = hyper;
  net.standardizer = fit_standardizer(a);
  detail::scale_targets(y, net);
  const Matrix xa = net.standardizer.apply(a.features);
  const Matrix xb = net.standardizer.apply(features_b);
  const std::vector<double> targets = detail::scaled_targets(y, net);
  const detail::TrainingInputs in{xa, targets, &xb, &params, net.target_scale};
  auto run = detail::train_network(in, nn::Mlp::init(detail::extractor_specs(a.dims(), hyper), derive_seed(seed, 2)),
                                   nn::Mlp::init(detail::regressor_specs(hyper), derive_seed(seed, 3)), hyper.epochs,
                                   hyper.batch_size, hyper.learning_rate, seed, observer);
  net.extractor = std::move(run.extractor);
  net.regressor = std::move(run.regressor);
  model.critic = std::move(run.critic);
  model.log = std::move(run.log);
  return model;
}

std::vector<double> predict(const WdgrlModel& m, const Matrix& X) { return predict(m.network, X); }

}  // namespace shiftsched
