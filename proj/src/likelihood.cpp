#include "testbed/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "testbed/rng.hpp"

namespace testbed::likelihood {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

void validate_prob_matrix(const ProbMatrix& probs) {
  if (probs.empty()) throw UsageError("ProbMatrix: needs at least one model");
  const Eigen::Index tau = probs.front().rows();
  const Eigen::Index k = probs.front().cols();
  if (k < 2) throw ShapeError("ProbMatrix: needs at least two classes");
  for (const auto& m : probs) {
    if (m.rows() != tau || m.cols() != k)
      throw ShapeError("ProbMatrix: model slices have differing shapes");
    if ((m.array() < 0.0).any() || (m.array() > 1.0).any() || !m.allFinite())
      throw DomainError("ProbMatrix: entries must lie in [0, 1]");
    for (Eigen::Index t = 0; t < tau; ++t)
      if (std::abs(m.row(t).sum() - 1.0) > 1e-9)
        throw DomainError("ProbMatrix: row does not sum to 1 within 1e-9");
  }
}

void validate_labels(const ProbMatrix& probs, const IntVector& labels) {
  if (probs.empty()) throw UsageError("needs at least one model");
  if (labels.size() != probs.front().rows())
    throw ShapeError("labels length does not match tau");
  const int k = static_cast<int>(probs.front().cols());
  for (Eigen::Index t = 0; t < labels.size(); ++t)
    if (labels(t) < 0 || labels(t) >= k) throw DomainError("label out of range [0, K)");
}

void PartitionConfig::validate() const {
  if (num_hyperplanes < 0) throw DomainError("PartitionConfig: d must be >= 0");
  if (num_hyperplanes > 63)
    throw DomainError("PartitionConfig: d above 63 overflows the cell signature");
  if (!(probit_clip > 0.0) || !(probit_clip < 0.5))
    throw DomainError("PartitionConfig: probit_clip must lie in (0, 0.5)");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double inverse_normal_cdf(double p) {
  if (!(p > 0.0) || !(p < 1.0)) throw DomainError("inverse_normal_cdf: p must lie in (0, 1)");
  // Rational approximation (Acklam's coefficients), then one Newton step on
  // Φ(x) - p with the erfc-based CDF. Accurate to ~1e-9 absolute in p.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const bool upper = p > 0.5;
  const double pp = upper ? 1.0 - p : p;
  double x;
  if (pp < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(pp));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = pp - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double err = normal_cdf(x) - pp;
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  if (pdf > 0.0) x -= err / pdf;
  return upper ? -x : x;
}

double logsumexp(const std::vector<double>& values) {
  double best = kNegInf;
  for (double v : values) best = std::max(best, v);
  if (best == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - best);
  return best + std::log(sum);
}

namespace {

// Σ_t log p_{m,t,Y_t} for one model's table.
double model_log_product(const Matrix& table, const IntVector& labels) {
  double s = 0.0;
  for (Eigen::Index t = 0; t < labels.size(); ++t) s += std::log(table(t, labels(t)));
  return s;
}

}  // namespace

double mc_log_likelihood(const ProbMatrix& probs, const IntVector& labels) {
  validate_prob_matrix(probs);
  validate_labels(probs, labels);
  std::vector<double> per_model(probs.size());
  for (std::size_t m = 0; m < probs.size(); ++m) per_model[m] = model_log_product(probs[m], labels);
  return logsumexp(per_model) - std::log(static_cast<double>(probs.size()));
}

void draw_hyperplanes(int num_hyperplanes, int dim, std::uint64_t seed, Matrix& a, Vector& b) {
  auto eng = rng::make_engine(seed);
  a = rng::gaussian_matrix(num_hyperplanes, dim, eng);
  b = rng::gaussian_vector(num_hyperplanes, eng);
}

double partition_log_likelihood(const ProbMatrix& probs, const IntVector& labels,
                                const PartitionConfig& config) {
  validate_prob_matrix(probs);
  validate_labels(probs, labels);
  config.validate();

  const int num_models = static_cast<int>(probs.size());
  const Eigen::Index tau = probs.front().rows();
  const Eigen::Index k = probs.front().cols();
  const int d = config.num_hyperplanes;
  const double eps = config.probit_clip;

  Matrix a;
  Vector b;
  draw_hyperplanes(d, static_cast<int>(tau * k), config.seed, a, b);

  // Cell signature -> (member count, summed probability table).
  std::map<std::uint64_t, std::pair<int, Matrix>> cells;
  Vector probits(tau * k);
  for (int m = 0; m < num_models; ++m) {
    for (Eigen::Index t = 0; t < tau; ++t)
      for (Eigen::Index kk = 0; kk < k; ++kk)
        probits(t * k + kk) =
            inverse_normal_cdf(std::clamp(probs[m](t, kk), eps, 1.0 - eps));
    std::uint64_t sig = 0;
    if (d > 0) {
      const Vector proj = a * probits + b;
      for (int h = 0; h < d; ++h)
        if (proj(h) >= 0.0) sig |= std::uint64_t{1} << h;
    }
    auto [it, fresh] = cells.try_emplace(sig, 0, Matrix::Zero(tau, k));
    it->second.first += 1;
    it->second.second += probs[m];
  }

  std::vector<double> per_cell;
  per_cell.reserve(cells.size());
  for (const auto& [sig, cell] : cells) {
    const auto& [count, sum] = cell;
    const double log_q =
        std::log(static_cast<double>(count) / static_cast<double>(num_models));
    const Matrix mean = sum / static_cast<double>(count);
    per_cell.push_back(log_q + model_log_product(mean, labels));
  }
  return logsumexp(per_cell);
}

double brute_force_log_likelihood(const Vector& weights, const ProbMatrix& tables,
                                  const IntVector& labels) {
  if (tables.size() > 4096) throw UsageError("brute_force: too many mixture components");
  if (labels.size() > 64) throw UsageError("brute_force: tau too large to trust products");
  if (weights.size() != static_cast<Eigen::Index>(tables.size()))
    throw ShapeError("brute_force: one weight per table required");
  if (weights.minCoeff() < 0.0) throw DomainError("brute_force: weights must be nonnegative");
  if (std::abs(weights.sum() - 1.0) > 1e-9)
    throw DomainError("brute_force: weights must sum to 1");
  validate_prob_matrix(tables);
  validate_labels(tables, labels);

  std::vector<double> terms(tables.size());
  for (std::size_t i = 0; i < tables.size(); ++i)
    terms[i] = std::log(weights(static_cast<Eigen::Index>(i))) +
               model_log_product(tables[i], labels);
  return logsumexp(terms);
}

}  // namespace testbed::likelihood
