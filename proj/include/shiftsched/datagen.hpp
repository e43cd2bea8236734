#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "shiftsched/nn.hpp"
#include "shiftsched/trees.hpp"

namespace shiftsched {

enum class Setting { A, B };

std::string to_string(Setting s);

/// Why a caller reads throughput-time labels. Setting-B labels may only be
/// read for evaluation (and, in the reveal-window baselines, for the
/// explicitly revealed subset).
enum class LabelPurpose { training, tuning, evaluation, reveal, export_data };

std::string to_string(LabelPurpose p);

struct AuditEvent {
  Setting setting;
  std::string what;  // "labels:<purpose>" or "standardizer_fit"
};

/// Thread-safe append-only record of label reads and standardizer fits.
class AuditLog {
 public:
  void record(Setting setting, std::string what);
  [[nodiscard]] std::vector<AuditEvent> events() const;
  [[nodiscard]] std::size_t count(Setting setting, const std::string& what) const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::vector<AuditEvent> events_;
};

/// Label vector behind an accessor that records every read.
class SealedLabels {
 public:
  SealedLabels() = default;
  SealedLabels(std::vector<double> values, Setting setting, std::shared_ptr<AuditLog> log);

  const std::vector<double>& read(LabelPurpose purpose) const;
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

 private:
  std::vector<double> values_;
  Setting setting_ = Setting::A;
  std::shared_ptr<AuditLog> log_;
};

struct Dataset {
  Matrix features;
  std::optional<SealedLabels> labels;
  Setting setting = Setting::A;
  std::vector<std::string> feature_names;
  std::shared_ptr<AuditLog> audit;  // may be null

  [[nodiscard]] Eigen::Index rows() const { return features.rows(); }
  [[nodiscard]] int dims() const { return static_cast<int>(features.cols()); }
  [[nodiscard]] bool labeled() const { return labels.has_value(); }
  [[nodiscard]] const std::vector<double>& read_labels(LabelPurpose purpose) const;
};

Dataset make_dataset(Matrix features, std::optional<std::vector<double>> labels, Setting setting,
                     std::shared_ptr<AuditLog> log = nullptr);

/// Rows `idx` of `data`; labels (when present) are read under `purpose`.
Dataset select_rows(const Dataset& data, std::span<const Eigen::Index> idx, LabelPurpose purpose);

class InsufficientDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GaussianSpec {
  Vector mean;
  Matrix cov;

  [[nodiscard]] int dims() const { return static_cast<int>(mean.size()); }
  void validate() const;
};

/// Sample mean and (n-1)-denominator covariance.
GaussianSpec estimate_moments(const Matrix& X);

/// Lower factor of cov + jitter*I, jitter escalating over {0, 1e-10, 1e-8, 1e-6}.
Matrix cholesky_psd(const Matrix& cov);

Matrix sample_gaussian(const GaussianSpec& spec, Eigen::Index n, std::uint64_t seed);

/// Mean muA + theta*(muB - muA), covariance of B.
GaussianSpec shifted_spec(const GaussianSpec& a, const GaussianSpec& b, double theta);

enum class NoiseKind { gaussian, uniform };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  double sigma_y = 1.0;  // standard deviation for both kinds; 0 is noiseless

  [[nodiscard]] double uniform_half_width() const;
};

NoiseKind parse_noise_kind(const std::string& s);
std::string to_string(NoiseKind k);

/// y_i = max(0, phi(x_i) + eta_i).
std::vector<double> generate_outcomes(const trees::TreeEnsemble& phi, const Matrix& X, const NoiseSpec& noise,
                                      std::uint64_t seed);

/// d_i = release_i + ceil(max(1, phi_i + nu_i)), release_i ~ U{1..horizon_spread},
/// nu_i ~ N(0, slack_sigma^2).
std::vector<int> assign_due_dates(std::span<const double> phi_values, double slack_sigma, int horizon_spread,
                                  std::uint64_t seed);

enum class PhiKind { forest, boosting };

PhiKind parse_phi_kind(const std::string& s);
std::string to_string(PhiKind k);

struct SemiSyntheticConfig {
  double theta = 1.0;
  Eigen::Index n = 5830;
  Eigen::Index m = 3866;
  NoiseKind noise_kind = NoiseKind::gaussian;
  std::optional<double> sigma_y;  // default: std of the pooled seed labels
  PhiKind phi_kind = PhiKind::forest;
  double slack_sigma = 5.0;
  int horizon_spread = 60;
  std::uint64_t seed = 0;
};

struct SemiSyntheticData {
  Dataset a;
  Dataset b;                  // labels sealed: evaluation only
  std::vector<int> due_dates; // one per setting-B order
  std::vector<double> phi_b;  // noiseless phi(x_B)
  GaussianSpec spec_a;
  GaussianSpec spec_b;
  Vector v_diff;
  std::shared_ptr<AuditLog> audit;
};

/// Moments and the fitted outcome model phi, shared by all replicates of one
/// experiment. Features of A depend only on the replicate seed; features of
/// B use the same standard-normal draws at every theta.
class SemiSyntheticGenerator {
 public:
  SemiSyntheticGenerator(const Dataset& seed_a, const Dataset& seed_b, PhiKind phi_kind, std::uint64_t phi_seed,
                         int threads = 1);
  SemiSyntheticGenerator(GaussianSpec spec_a, GaussianSpec spec_b, trees::TreeEnsemble phi, double sigma_y);

  [[nodiscard]] SemiSyntheticData generate(const SemiSyntheticConfig& cfg) const;

  [[nodiscard]] const GaussianSpec& spec_a() const noexcept { return spec_a_; }
  [[nodiscard]] const GaussianSpec& spec_b() const noexcept { return spec_b_; }
  [[nodiscard]] const trees::TreeEnsemble& phi() const noexcept { return phi_; }
  [[nodiscard]] double seed_label_sd() const noexcept { return sigma_y_; }

 private:
  GaussianSpec spec_a_;
  GaussianSpec spec_b_;
  Matrix chol_a_;
  Matrix chol_b_;
  trees::TreeEnsemble phi_;
  double sigma_y_ = 1.0;
};

SemiSyntheticData build_semisynthetic(const SemiSyntheticConfig& cfg, const Dataset& seed_a, const Dataset& seed_b);

/// Built-in seed populations standing in for the proprietary order data.
struct SeedPopulations {
  Dataset a;
  Dataset b;
};

SeedPopulations builtin_seed_data(Eigen::Index n_a, Eigen::Index n_b, std::uint64_t seed);

/// CSV: header of feature names, optional `throughput_days` column.
Dataset load_csv(const std::filesystem::path& path, Setting setting, std::shared_ptr<AuditLog> log = nullptr);
void write_csv(const Dataset& data, const std::filesystem::path& path, bool include_labels);

}  // namespace shiftsched
