#include <array>
#include <cmath>

#include "shiftsched/datagen.hpp"

namespace shiftsched {
namespace {

struct FeatureDef {
  const char* name;
  double mean;
  double scale;
  double shift;    // B-minus-A mean offset in units of `scale`
  double loading;  // on the shared size factor
};

// Spool-order attributes. The first five carry the setting shift.
constexpr std::array<FeatureDef, 20> kFeatures{{
    {"min_design_temp_c", -20.0, 15.0, 4.0, 0.75},
    {"insulation_thickness_mm", 40.0, 12.0, 3.6, 0.75},
    {"test_pressure_bar", 60.0, 20.0, 3.2, 0.75},
    {"max_operating_temp_c", 90.0, 25.0, 3.2, 0.75},
    {"material_factor", 1.0, 0.3, 4.0, 0.75},
    {"spool_weight_kg", 350.0, 120.0, 0.0, 0.85},
    {"spool_length_m", 4.5, 1.5, 0.0, 0.8},
    {"nominal_diameter_mm", 150.0, 60.0, 0.0, 0.8},
    {"wall_thickness_mm", 9.0, 3.0, 0.0, 0.7},
    {"weld_count", 8.0, 3.0, 0.0, 0.75},
    {"flange_count", 3.0, 1.2, 0.0, 0.6},
    {"bend_count", 2.0, 1.0, 0.0, 0.5},
    {"branch_count", 1.0, 0.6, 0.0, 0.4},
    {"coating_layers", 2.0, 0.7, 0.0, 0.0},
    {"ndt_level", 2.0, 0.8, 0.0, 0.0},
    {"drawing_revisions", 2.0, 1.0, 0.0, 0.0},
    {"material_lead_days", 20.0, 8.0, 0.0, 0.0},
    {"workshop_load_pct", 70.0, 10.0, 0.0, 0.0},
    {"priority_class", 2.0, 0.8, 0.0, 0.0},
    {"paint_area_m2", 6.0, 2.0, 0.0, 0.75},
}};

constexpr double kLabelNoise = 12.0;
constexpr double kBumpHeight = 3.0;
constexpr double kBumpWidth = 0.7;

// Latent order size and standardized attributes -> expected throughput time in days.
double expected_days(double size, const double* z) {
  double y = 38.0 + 10.0 * size;
  y += 4.0 * std::tanh(z[16]) + 3.0 * (z[17] > 0.5 ? 1.0 : 0.0) - 2.5 * z[18];
  y += 1.5 * z[13] * z[14] + 1.0 * z[15];
  for (int k = 0; k < 5; ++k) {
    const double u = z[k] / kBumpWidth;
    y += kBumpHeight * u * std::exp(0.5 - 0.5 * u * u);
  }
  return y;
}

Dataset sample_population(Eigen::Index n, bool shifted, std::uint64_t seed) {
  constexpr int d = static_cast<int>(kFeatures.size());
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix X(n, d);
  std::vector<double> y(static_cast<std::size_t>(n));
  std::array<double, d> z{};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double size_factor = normal(rng);
    for (int j = 0; j < d; ++j) {
      const auto& f = kFeatures[j];
      z[j] = f.loading * size_factor + std::sqrt(1.0 - f.loading * f.loading) * normal(rng);
      if (shifted) z[j] += f.shift;
      X(i, j) = f.mean + f.scale * z[j];
    }
    y[static_cast<std::size_t>(i)] = std::max(0.0, expected_days(size_factor, z.data()) + kLabelNoise * normal(rng));
  }
  Dataset data = make_dataset(std::move(X), std::move(y), shifted ? Setting::B : Setting::A);
  for (const auto& f : kFeatures) data.feature_names.emplace_back(f.name);
  return data;
}

}  // namespace

SeedPopulations builtin_seed_data(Eigen::Index n_a, Eigen::Index n_b, std::uint64_t seed) {
  if (n_a < 2 || n_b < 2) throw InsufficientDataError("seed populations need at least two rows each");
  return {sample_population(n_a, false, derive_seed(seed, 101)), sample_population(n_b, true, derive_seed(seed, 102))};
}

}  // namespace shiftsched
