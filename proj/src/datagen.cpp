#include "shiftsched/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace shiftsched {

std::string to_string(Setting s) { return s == Setting::A ? "A" : "B"; }

std::string to_string(LabelPurpose p) {
  switch (p) {
    case LabelPurpose::training: return "training";
    case LabelPurpose::tuning: return "tuning";
    case LabelPurpose::evaluation: return "evaluation";
    case LabelPurpose::reveal: return "reveal";
    case LabelPurpose::export_data: return "export";
  }
  return "unknown";
}

void AuditLog::record(Setting setting, std::string what) {
  std::lock_guard lock(mu_);
  events_.push_back({setting, std::move(what)});
}

std::vector<AuditEvent> AuditLog::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::size_t AuditLog::count(Setting setting, const std::string& what) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(events_.begin(), events_.end(), [&](const AuditEvent& e) {
    return e.setting == setting && e.what == what;
  }));
}

void AuditLog::clear() {
  std::lock_guard lock(mu_);
  events_.clear();
}

SealedLabels::SealedLabels(std::vector<double> values, Setting setting, std::shared_ptr<AuditLog> log)
    : values_(std::move(values)), setting_(setting), log_(std::move(log)) {}

const std::vector<double>& SealedLabels::read(LabelPurpose purpose) const {
  if (log_) log_->record(setting_, "labels:" + to_string(purpose));
  return values_;
}

const std::vector<double>& Dataset::read_labels(LabelPurpose purpose) const {
  if (!labels) throw std::logic_error("dataset " + to_string(setting) + " has no labels");
  return labels->read(purpose);
}

Dataset make_dataset(Matrix features, std::optional<std::vector<double>> labels, Setting setting,
                     std::shared_ptr<AuditLog> log) {
  Dataset d;
  if (labels) {
    if (static_cast<Eigen::Index>(labels->size()) != features.rows()) {
      throw DimensionError("label count differs from feature rows");
    }
    for (double y : *labels) {
      if (!(y >= 0.0)) throw std::invalid_argument("throughput times must be nonnegative");
    }
    d.labels = SealedLabels(std::move(*labels), setting, log);
  }
  d.audit = std::move(log);
  d.features = std::move(features);
  d.setting = setting;
  return d;
}

Dataset select_rows(const Dataset& data, std::span<const Eigen::Index> idx, LabelPurpose purpose) {
  Matrix X(static_cast<Eigen::Index>(idx.size()), data.features.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= data.rows()) throw std::out_of_range("row index out of range");
    X.row(static_cast<Eigen::Index>(r)) = data.features.row(idx[r]);
  }
  std::optional<std::vector<double>> y;
  if (data.labeled()) {
    const auto& all = data.read_labels(purpose);
    y.emplace();
    y->reserve(idx.size());
    for (auto i : idx) y->push_back(all[static_cast<std::size_t>(i)]);
  }
  Dataset out = make_dataset(std::move(X), std::move(y), data.setting, data.audit);
  out.feature_names = data.feature_names;
  return out;
}

void GaussianSpec::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw DimensionError("covariance shape does not match mean");
  }
  if (!cov.isApprox(cov.transpose(), 0.0) && (cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("covariance is not symmetric");
  }
}

GaussianSpec estimate_moments(const Matrix& X) {
  if (X.rows() < 2) throw InsufficientDataError("moment estimation needs at least two samples");
  GaussianSpec s;
  s.mean = X.colwise().mean().transpose();
  const Matrix centered = X.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(X.rows() - 1);
  return s;
}

Matrix cholesky_psd(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw DimensionError("covariance must be square");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("covariance is not symmetric");
  }
  const Eigen::Index d = cov.rows();
  for (double jitter : {0.0, 1e-10, 1e-8, 1e-6}) {
    const Matrix a = cov + jitter * Matrix::Identity(d, d);
    Matrix l = Matrix::Zero(d, d);
    bool ok = true;
    for (Eigen::Index j = 0; j < d && ok; ++j) {
      double diag = a(j, j) - l.row(j).head(j).squaredNorm();
      if (!(diag > 0.0)) {
        ok = false;
        break;
      }
      l(j, j) = std::sqrt(diag);
      for (Eigen::Index i = j + 1; i < d; ++i) {
        l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
      }
    }
    if (ok && l.allFinite()) return l;
  }
  throw FactorizationError("covariance is not factorizable even with 1e-6 jitter");
}

namespace {

Matrix sample_with_factor(const Vector& mean, const Matrix& chol, Eigen::Index n, std::uint64_t seed) {
  const Eigen::Index d = mean.size();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = normal(rng);
  }
  Matrix x = z * chol.transpose();
  x.rowwise() += mean.transpose();
  return x;
}

double label_sd(std::span<const double> y) {
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(y.size() - 1));
}

}  // namespace

Matrix sample_gaussian(const GaussianSpec& spec, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");
  spec.validate();
  return sample_with_factor(spec.mean, cholesky_psd(spec.cov), n, seed);
}

GaussianSpec shifted_spec(const GaussianSpec& a, const GaussianSpec& b, double theta) {
  if (a.mean.size() != b.mean.size() || b.cov.rows() != b.mean.size()) {
    throw DimensionError("setting A and B moments have different dimensions");
  }
  GaussianSpec s;
  s.mean = a.mean + theta * (b.mean - a.mean);
  s.cov = b.cov;
  return s;
}

double NoiseSpec::uniform_half_width() const { return std::sqrt(12.0) * sigma_y / 2.0; }

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "uniform") return NoiseKind::uniform;
  throw std::invalid_argument("unknown noise kind: " + s);
}

std::string to_string(NoiseKind k) { return k == NoiseKind::gaussian ? "gaussian" : "uniform"; }

PhiKind parse_phi_kind(const std::string& s) {
  if (s == "forest") return PhiKind::forest;
  if (s == "boosting") return PhiKind::boosting;
  throw std::invalid_argument("unknown phi kind: " + s);
}

std::string to_string(PhiKind k) { return k == PhiKind::forest ? "forest" : "boosting"; }

std::vector<double> generate_outcomes(const trees::TreeEnsemble& phi, const Matrix& X, const NoiseSpec& noise,
                                      std::uint64_t seed) {
  if (!(noise.sigma_y >= 0.0)) throw std::invalid_argument("sigma_y must be nonnegative");
  std::vector<double> y = trees::ensemble_predict(phi, X);
  Rng rng(seed);
  if (noise.kind == NoiseKind::gaussian) {
    std::normal_distribution<double> eta(0.0, 1.0);
    for (auto& v : y) v = std::max(0.0, v + noise.sigma_y * eta(rng));
  } else {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double half = noise.uniform_half_width();
    for (auto& v : y) v = std::max(0.0, v + half * u(rng));
  }
  return y;
}

std::vector<int> assign_due_dates(std::span<const double> phi_values, double slack_sigma, int horizon_spread,
                                  std::uint64_t seed) {
  if (!(slack_sigma >= 0.0)) throw std::invalid_argument("slack_sigma must be nonnegative");
  if (horizon_spread < 1) throw std::invalid_argument("horizon_spread must be >= 1");
  Rng rng(seed);
  std::uniform_int_distribution<int> release(1, horizon_spread);
  std::normal_distribution<double> nu(0.0, 1.0);
  std::vector<int> due(phi_values.size());
  for (std::size_t i = 0; i < phi_values.size(); ++i) {
    const int r = release(rng);
    const double slack = phi_values[i] + slack_sigma * nu(rng);
    due[i] = r + static_cast<int>(std::ceil(std::max(1.0, slack)));
  }
  return due;
}

SemiSyntheticGenerator::SemiSyntheticGenerator(const Dataset& seed_a, const Dataset& seed_b, PhiKind phi_kind,
                                               std::uint64_t phi_seed, int threads) {
  if (seed_a.dims() != seed_b.dims()) throw DimensionError("seed datasets have different feature counts");
  if (!seed_a.labeled() || !seed_b.labeled()) throw std::invalid_argument("seed datasets need labels to fit phi");
  spec_a_ = estimate_moments(seed_a.features);
  spec_b_ = estimate_moments(seed_b.features);
  chol_a_ = cholesky_psd(spec_a_.cov);
  chol_b_ = cholesky_psd(spec_b_.cov);

  Matrix pooled(seed_a.rows() + seed_b.rows(), seed_a.dims());
  pooled << seed_a.features, seed_b.features;
  std::vector<double> y = seed_a.read_labels(LabelPurpose::training);
  const auto& yb = seed_b.read_labels(LabelPurpose::training);
  y.insert(y.end(), yb.begin(), yb.end());
  sigma_y_ = label_sd(y);

  if (phi_kind == PhiKind::forest) {
    trees::ForestParams p;
    p.seed = phi_seed;
    p.threads = threads;
    phi_ = trees::fit_random_forest(pooled, y, p);
  } else {
    trees::BoostParams p;
    p.seed = phi_seed;
    phi_ = trees::fit_gradient_boosting(pooled, y, p);
  }
}

SemiSyntheticGenerator::SemiSyntheticGenerator(GaussianSpec spec_a, GaussianSpec spec_b, trees::TreeEnsemble phi,
                                               double sigma_y)
    : spec_a_(std::move(spec_a)), spec_b_(std::move(spec_b)), phi_(std::move(phi)), sigma_y_(sigma_y) {
  if (spec_a_.dims() != spec_b_.dims() || spec_a_.dims() != phi_.n_features) {
    throw DimensionError("moments and phi disagree on the feature count");
  }
  chol_a_ = cholesky_psd(spec_a_.cov);
  chol_b_ = cholesky_psd(spec_b_.cov);
}

SemiSyntheticData SemiSyntheticGenerator::generate(const SemiSyntheticConfig& cfg) const {
  if (cfg.n < 1 || cfg.m < 1) throw std::invalid_argument("n and m must be >= 1");
  if (!(cfg.theta >= 0.0)) throw std::invalid_argument("theta must be nonnegative");
  SemiSyntheticData out;
  out.audit = std::make_shared<AuditLog>();
  out.spec_a = spec_a_;
  out.spec_b = shifted_spec(spec_a_, spec_b_, cfg.theta);
  out.v_diff = spec_b_.mean - spec_a_.mean;

  const NoiseSpec noise{cfg.noise_kind, cfg.sigma_y.value_or(sigma_y_)};
  Matrix xa = sample_with_factor(spec_a_.mean, chol_a_, cfg.n, derive_seed(cfg.seed, 1));
  std::vector<double> ya = generate_outcomes(phi_, xa, noise, derive_seed(cfg.seed, 2));
  Matrix xb = sample_with_factor(out.spec_b.mean, chol_b_, cfg.m, derive_seed(cfg.seed, 3));
  std::vector<double> yb = generate_outcomes(phi_, xb, noise, derive_seed(cfg.seed, 4));
  out.phi_b = trees::ensemble_predict(phi_, xb);
  out.due_dates = assign_due_dates(out.phi_b, cfg.slack_sigma, cfg.horizon_spread, derive_seed(cfg.seed, 5));

  out.a = make_dataset(std::move(xa), std::move(ya), Setting::A, out.audit);
  out.b = make_dataset(std::move(xb), std::move(yb), Setting::B, out.audit);
  return out;
}

SemiSyntheticData build_semisynthetic(const SemiSyntheticConfig& cfg, const Dataset& seed_a, const Dataset& seed_b) {
  const SemiSyntheticGenerator gen(seed_a, seed_b, cfg.phi_kind, derive_seed(cfg.seed, 0));
  return gen.generate(cfg);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": not a number: '" + s + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, Setting setting, std::shared_ptr<AuditLog> log) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  int label_col = -1;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "throughput_days") {
      label_col = static_cast<int>(c);
    } else {
      names.push_back(header[c]);
    }
  }
  if (names.empty()) throw std::runtime_error(path.string() + ": no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) + " has " +
                               std::to_string(cells.size()) + " cells, header has " + std::to_string(header.size()));
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double v = parse_double(cells[c], line_no);
      if (static_cast<int>(c) == label_col) {
        labels.push_back(v);
      } else {
        row.push_back(v);
      }
    }
    rows.push_back(std::move(row));
  }
  Matrix X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < names.size(); ++j) X(i, j) = rows[i][j];
  }
  std::optional<std::vector<double>> y;
  if (label_col >= 0) y = std::move(labels);
  Dataset d = make_dataset(std::move(X), std::move(y), setting, std::move(log));
  d.feature_names = std::move(names);
  return d;
}

void write_csv(const Dataset& data, const std::filesystem::path& path, bool include_labels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const int d = data.dims();
  for (int j = 0; j < d; ++j) {
    if (j > 0) out << ',';
    out << (j < static_cast<int>(data.feature_names.size()) ? data.feature_names[j] : "x" + std::to_string(j + 1));
  }
  const bool labels = include_labels && data.labeled();
  if (labels) out << ",throughput_days";
  out << '\n';
  const std::vector<double>* y = labels ? &data.read_labels(LabelPurpose::export_data) : nullptr;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (int j = 0; j < d; ++j) {
      if (j > 0) out << ',';
      out << format_double(data.features(i, j));
    }
    if (y) out << ',' << format_double((*y)[i]);
    out << '\n';
  }
}

}  // namespace shiftsched
