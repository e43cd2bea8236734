#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "shiftsched/diagnostics.hpp"
#include "shiftsched/predictors.hpp"

namespace shiftsched::diag {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(l);
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw SingleClassError("ROC-AUC needs both classes");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[idx[k]] == 1) rank_sum_pos += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  const double x = dof / (dof + t * t);
  return std::clamp(incomplete_beta(0.5 * dof, 0.5, x), 0.0, 1.0);
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InsufficientDataError("Welch test needs two samples of size >= 2");
  const auto moments = [](std::span<const double> s) {
    const double n = static_cast<double>(s.size());
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / (n - 1.0)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double sa = va / static_cast<double>(a.size());
  const double sb = vb / static_cast<double>(b.size());
  const double se2 = sa + sb;
  if (!(se2 > 0.0)) throw DegenerateVarianceError("Welch test undefined: both samples have zero variance");
  WelchResult r;
  r.t = (ma - mb) / std::sqrt(se2);
  r.dof = se2 * se2 /
          (sa * sa / static_cast<double>(a.size() - 1) + sb * sb / static_cast<double>(b.size() - 1));
  r.p_value = student_t_two_sided(r.t, r.dof);
  return r;
}

std::vector<WelchResult> feature_welch(const Matrix& xa, const Matrix& xb) {
  if (xa.cols() != xb.cols()) throw DimensionError("A and B feature counts differ");
  std::vector<WelchResult> out;
  for (Eigen::Index j = 0; j < xa.cols(); ++j) {
    const Vector ca = xa.col(j);
    const Vector cb = xb.col(j);
    out.push_back(welch_t_test({ca.data(), static_cast<std::size_t>(ca.size())},
                               {cb.data(), static_cast<std::size_t>(cb.size())}));
  }
  return out;
}

namespace {

struct Pooled {
  Matrix x;
  std::vector<int> labels;
};

Pooled pool(const Matrix& xa, const Matrix& xb) {
  Pooled p;
  p.x.resize(xa.rows() + xb.rows(), xa.cols());
  p.x << xa, xb;
  p.labels.assign(static_cast<std::size_t>(xa.rows()), 0);
  p.labels.resize(static_cast<std::size_t>(xa.rows() + xb.rows()), 1);
  return p;
}

bool folds_have_both_classes(const FoldPartition& part, const std::vector<int>& labels) {
  for (int f = 0; f < part.k; ++f) {
    std::array<int, 2> val{0, 0};
    std::array<int, 2> train{0, 0};
    for (std::size_t i = 0; i < labels.size(); ++i) {
      (part.fold_of[i] == f ? val : train)[static_cast<std::size_t>(labels[i])]++;
    }
    if (val[0] == 0 || val[1] == 0 || train[0] == 0 || train[1] == 0) return false;
  }
  return true;
}

double out_of_fold_auc(const Pooled& data, const AdversarialParams& params, std::uint64_t repeat_seed) {
  FoldPartition part;
  bool ok = false;
  for (std::uint64_t attempt = 0; attempt < 64 && !ok; ++attempt) {
    part = make_folds(data.x.rows(), params.folds, derive_seed(repeat_seed, attempt));
    ok = folds_have_both_classes(part, data.labels);
  }
  if (!ok) throw SingleClassError("could not form folds containing both classes");

  std::vector<double> scores(data.labels.size(), 0.0);
  for (int f = 0; f < params.folds; ++f) {
    const auto tr = part.train_rows(f);
    const auto va = part.validation_rows(f);
    Matrix xt(static_cast<Eigen::Index>(tr.size()), data.x.cols());
    std::vector<double> yt;
    for (std::size_t r = 0; r < tr.size(); ++r) {
      xt.row(static_cast<Eigen::Index>(r)) = data.x.row(tr[r]);
      yt.push_back(data.labels[static_cast<std::size_t>(tr[r])]);
    }
    Matrix xv(static_cast<Eigen::Index>(va.size()), data.x.cols());
    for (std::size_t r = 0; r < va.size(); ++r) xv.row(static_cast<Eigen::Index>(r)) = data.x.row(va[r]);
    auto bp = params.classifier;
    bp.loss = trees::BoostLoss::logistic;
    bp.seed = derive_seed(repeat_seed, 100 + static_cast<std::uint64_t>(f));
    const auto model = trees::fit_gradient_boosting(xt, yt, bp);
    const auto s = trees::ensemble_predict(model, xv);
    for (std::size_t r = 0; r < va.size(); ++r) scores[static_cast<std::size_t>(va[r])] = s[r];
  }
  return roc_auc(scores, data.labels);
}

}  // namespace

ShiftReport adversarial_validation(const Matrix& xa, const Matrix& xb, const AdversarialParams& params,
                                   const std::vector<std::string>& feature_names) {
  if (xa.rows() < 1 || xb.rows() < 1) throw InsufficientDataError("both settings need at least one row");
  if (xa.cols() != xb.cols()) throw DimensionError("A and B feature counts differ");
  if (params.folds < 2 || params.repeats < 1) throw std::invalid_argument("need folds >= 2 and repeats >= 1");
  const Pooled data = pool(xa, xb);

  ShiftReport rep;
  rep.folds = params.folds;
  rep.repeats = params.repeats;
  rep.seed = params.seed;
  rep.repeat_auc.assign(static_cast<std::size_t>(params.repeats), 0.0);
  parallel_for(static_cast<std::size_t>(params.repeats), params.threads, [&](std::size_t r) {
    rep.repeat_auc[r] = out_of_fold_auc(data, params, derive_seed(params.seed, r));
  });
  rep.roc_auc = std::accumulate(rep.repeat_auc.begin(), rep.repeat_auc.end(), 0.0) /
                static_cast<double>(rep.repeat_auc.size());

  auto bp = params.classifier;
  bp.loss = trees::BoostLoss::logistic;
  bp.seed = derive_seed(params.seed, 9999);
  const std::vector<double> y(data.labels.begin(), data.labels.end());
  const auto full = trees::fit_gradient_boosting(data.x, y, bp);
  const auto imp = trees::feature_importance(full);
  for (std::size_t j = 0; j < imp.size(); ++j) {
    FeatureScore fs;
    fs.index = static_cast<int>(j);
    fs.name = j < feature_names.size() ? feature_names[j] : "x" + std::to_string(j + 1);
    fs.importance = imp[j];
    rep.ranking.push_back(fs);
  }
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                   [](const FeatureScore& a, const FeatureScore& b) { return a.importance > b.importance; });
  return rep;
}

std::string to_text(const ShiftReport& r) {
  nlohmann::json ranking = nlohmann::json::array();
  for (const auto& f : r.ranking) ranking.push_back({{"index", f.index}, {"feature", f.name}, {"importance", f.importance}});
  nlohmann::json j{{"format", "shiftsched.shift_report"},
                   {"roc_auc", r.roc_auc},
                   {"repeat_auc", r.repeat_auc},
                   {"folds", r.folds},
                   {"repeats", r.repeats},
                   {"seed", r.seed},
                   {"ranking", ranking}};
  return j.dump(1);
}

std::string importance_csv(const ShiftReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "feature,importance\n";
  for (const auto& f : r.ranking) out << f.name << ',' << f.importance << '\n';
  return out.str();
}

}  // namespace shiftsched::diag
