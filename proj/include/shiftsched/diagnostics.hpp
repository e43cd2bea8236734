#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shiftsched/nn.hpp"
#include "shiftsched/trees.hpp"

namespace shiftsched::diag {

class SingleClassError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateVarianceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mann-Whitney area under the ROC curve; tied scores get midranks.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) of Student's t with `dof` degrees.
double student_t_two_sided(double t, double dof);

struct WelchResult {
  double t = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

struct FeatureScore {
  int index = 0;
  std::string name;
  double importance = 0.0;
};

struct ShiftReport {
  double roc_auc = 0.5;                  // mean over repeats of the pooled out-of-fold AUC
  std::vector<double> repeat_auc;        // one per repeat
  std::vector<FeatureScore> ranking;     // descending importance, ties by index
  int folds = 5;
  int repeats = 1;
  std::uint64_t seed = 0;
};

struct AdversarialParams {
  int folds = 5;
  int repeats = 20;
  trees::BoostParams classifier{200, 4, 1, 0.1, trees::BoostLoss::logistic, 256, 0};
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Labels A as 0 and B as 1, pools k-fold out-of-fold scores into one AUC per
/// repeat and ranks features by the gain importance of a full-data fit.
ShiftReport adversarial_validation(const Matrix& xa, const Matrix& xb, const AdversarialParams& params,
                                   const std::vector<std::string>& feature_names = {});

std::string to_text(const ShiftReport& r);
std::string importance_csv(const ShiftReport& r);

/// Per-feature Welch tests of A against B.
std::vector<WelchResult> feature_welch(const Matrix& xa, const Matrix& xb);

}  // namespace shiftsched::diag
