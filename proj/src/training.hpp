#pragma once

#include "shiftsched/predictors.hpp"

namespace shiftsched::detail {

struct TrainingRun {
  nn::Mlp extractor;
  nn::Mlp regressor;
  nn::Mlp critic;
  TrainLog log;
};

struct TrainingInputs {
  const Matrix& features_a;          // standardized
  std::span<const double> targets;   // scaled
  const Matrix* features_b = nullptr;  // standardized; null for plain regression
  const WdgrlParams* adversarial = nullptr;
  double target_scale = 1.0;
};

/// Mini-batch MAE training of extractor+regressor, optionally with the
/// critic game. Dropout, shuffling and regression updates draw from one
/// stream; everything touching B or the critic draws from a second one.
TrainingRun train_network(const TrainingInputs& in, nn::Mlp extractor, nn::Mlp regressor, int epochs, int batch_size,
                          double learning_rate, std::uint64_t seed, const TrainObserver& observer);

/// Sets the model's target center (median) and scale (sd, 1 when degenerate).
void scale_targets(std::span<const double> y, NetworkModel& net);
std::vector<double> scaled_targets(std::span<const double> y, const NetworkModel& net);

std::vector<nn::LayerSpec> extractor_specs(int input_dim, const DnnHyper& h);
std::vector<nn::LayerSpec> regressor_specs(const DnnHyper& h);
std::vector<nn::LayerSpec> critic_specs(int latent_dim, int width);

}  // namespace shiftsched::detail
