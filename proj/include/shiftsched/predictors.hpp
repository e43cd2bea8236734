#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "shiftsched/datagen.hpp"
#include "shiftsched/nn.hpp"

namespace shiftsched {

struct Standardizer {
  Vector mean;
  Vector sd;  // floored at 1e-8

  [[nodiscard]] Matrix apply(const Matrix& X) const;
  [[nodiscard]] int dims() const { return static_cast<int>(mean.size()); }
};

Standardizer fit_standardizer(const Matrix& X);

/// Fits on `data` and records a "standardizer_fit" event for its setting.
Standardizer fit_standardizer(const Dataset& data);

struct LinearModel {
  Vector coefficients;
  double intercept = 0.0;
  double lambda = 0.0;
  double ratio = 0.0;
  int iterations = 0;
  bool converged = false;

  [[nodiscard]] std::vector<double> predict(const Matrix& X) const;
};

/// Cyclic coordinate descent on
/// (1/2n)||y - X b - c||^2 + lambda * (ratio*||b||_1 + (1-ratio)/2*||b||_2^2).
LinearModel fit_elastic_net(const Matrix& X, std::span<const double> y, double lambda, double ratio,
                            double tol = 1e-10, int max_iter = 100000);

struct LinearPredictor {
  Standardizer standardizer;
  LinearModel model;
};

LinearPredictor fit_elastic_net_predictor(const Matrix& X, std::span<const double> y, double lambda, double ratio);

struct DnnHyper {
  int extractor_width = 32;
  int regressor_width = 8;
  int epochs = 50;
  int batch_size = 32;
  double l2 = 1e-5;
  double dropout = 0.5;
  double learning_rate = 0.0005;
};

/// Standardizer, extractor (d -> width, ReLU, dropout) and regressor
/// (width -> 8 ReLU -> 1). Targets are modelled as (y - center) / scale.
struct NetworkModel {
  Standardizer standardizer;
  nn::Mlp extractor;
  nn::Mlp regressor;
  double target_center = 0.0;
  double target_scale = 1.0;
  DnnHyper hyper;
};

struct WdgrlParams {
  double alpha = 1.0;
  double beta = 1.0;
  int n_critic = 5;
  int critic_width = 16;
  std::optional<double> critic_learning_rate;  // default: the network's rate
};

struct EpochRecord {
  double regression_loss = 0.0;  // MAE in label units
  double wasserstein = 0.0;      // critic gap, no penalty term
  double penalty = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

struct WdgrlModel {
  NetworkModel network;
  nn::Mlp critic;
  WdgrlParams params;
  TrainLog log;
};

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrainPhase { critic_step, outer_step };

/// Read-only view handed to a training observer after each update.
struct StepTrace {
  TrainPhase phase;
  int epoch;
  const nn::Mlp& extractor;
  const nn::Mlp& regressor;
  const nn::Mlp& critic;
  const Matrix& latent_a;  // batch latents used by this step
  const Matrix& latent_b;
  double wasserstein_term;  // outer step: the gap added to the loss (before alpha)
};

using TrainObserver = std::function<void(const StepTrace&)>;

NetworkModel fit_dnn(const Matrix& X, std::span<const double> y, const DnnHyper& hyper, std::uint64_t seed);
NetworkModel fit_dnn(const Dataset& a, const DnnHyper& hyper, std::uint64_t seed);

WdgrlModel fit_wdgrl(const Dataset& a, const Matrix& features_b, const DnnHyper& hyper, const WdgrlParams& params,
                     std::uint64_t seed, const TrainObserver& observer = {});

/// Union training on A and the revealed B orders; the standardizer uses A only.
NetworkModel fit_retrained(const Dataset& a, const Dataset& revealed_b, const DnnHyper& hyper, std::uint64_t seed);

/// fit_dnn on A, then `finetune_epochs` passes over the revealed B orders at
/// learning_rate * lr_factor with a fresh optimizer.
NetworkModel fit_finetuned(const Dataset& a, const Dataset& revealed_b, const DnnHyper& hyper, std::uint64_t seed,
                           int finetune_epochs = 10, double lr_factor = 0.1);

/// Continues training `model` on (X, y) without refitting its standardizer.
NetworkModel continue_training(NetworkModel model, const Matrix& X, std::span<const double> y, int epochs,
                               double learning_rate, std::uint64_t seed);

/// Orders of B whose label is below `window_days`, read under the reveal purpose.
Dataset reveal_window(const Dataset& b, double window_days = 30.0);

std::vector<double> predict(const LinearPredictor& p, const Matrix& X);
std::vector<double> predict(const NetworkModel& m, const Matrix& X);
std::vector<double> predict(const WdgrlModel& m, const Matrix& X);

struct CriticTraining {
  double beta = 1.0;
  int hidden_width = 16;
  int steps = 2000;
  int batch_size = 256;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;
};

struct WassersteinEstimate {
  double value = 0.0;  // E_A f - E_B f over the full samples
  nn::Mlp critic;
};

/// Trains a critic on fixed latent samples and reports its dual gap.
WassersteinEstimate estimate_wasserstein(const Matrix& latent_a, const Matrix& latent_b, const CriticTraining& cfg);

// Grid search.

struct FoldPartition {
  std::vector<int> fold_of;  // fold index per sample
  int k = 0;

  [[nodiscard]] std::vector<Eigen::Index> train_rows(int fold) const;
  [[nodiscard]] std::vector<Eigen::Index> validation_rows(int fold) const;
};

FoldPartition make_folds(Eigen::Index n, int k, std::uint64_t seed);

struct ElasticNetConfig {
  double lambda = 1.0;
  double ratio = 0.5;
};

template <typename Config>
struct CvResult {
  std::vector<Config> grid;
  std::vector<std::vector<double>> fold_mae;  // [config][fold]
  std::size_t best = 0;

  [[nodiscard]] const Config& best_config() const { return grid.at(best); }
  [[nodiscard]] double mean_mae(std::size_t i) const;
};

std::vector<ElasticNetConfig> elastic_net_grid();
std::vector<DnnHyper> dnn_grid();

/// Exhaustive k-fold search; ties go to the earlier grid entry. Labels are
/// read under the tuning purpose.
CvResult<ElasticNetConfig> cross_validate(const std::vector<ElasticNetConfig>& grid, const Dataset& a, int k,
                                          std::uint64_t seed, int threads = 1);
CvResult<DnnHyper> cross_validate(const std::vector<DnnHyper>& grid, const Dataset& a, int k, std::uint64_t seed,
                                  int threads = 1);

// Checkpoints.

using Predictor = std::variant<LinearPredictor, NetworkModel, WdgrlModel>;

std::string to_text(const Predictor& p);
Predictor predictor_from_text(const std::string& text);
void save_checkpoint(const Predictor& p, const std::filesystem::path& path);
Predictor load_checkpoint(const std::filesystem::path& path);
std::vector<double> predict(const Predictor& p, const Matrix& X);

/// Runs `body(i)` for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace shiftsched
