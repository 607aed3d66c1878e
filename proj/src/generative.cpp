#include "testbed/generative.hpp"

#include <cmath>
#include <random>

namespace testbed::gen {

void GenerativeConfig::validate() const {
  if (input_dim < 1) throw ShapeError("GenerativeConfig: input_dim must be >= 1");
  if (num_classes < 2) throw ShapeError("GenerativeConfig: num_classes must be >= 2");
  if (temperature <= 0.0 || !std::isfinite(temperature))
    throw DomainError("GenerativeConfig: temperature must be positive");
  for (int h : hidden)
    if (h < 1) throw ShapeError("GenerativeConfig: hidden widths must be >= 1");
}

void Dataset::validate(int num_classes) const {
  if (inputs.rows() != labels.size())
    throw ShapeError("Dataset: inputs and labels row counts differ");
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels(i) < 0 || labels(i) >= num_classes)
      throw DomainError("Dataset: label out of range [0, K)");
}

Environment::Environment(nn::MlpParams params, double temperature)
    : params_(std::move(params)), temperature_(temperature) {
  params_.validate();
  if (temperature_ <= 0.0 || !std::isfinite(temperature_))
    throw DomainError("Environment: temperature must be positive");
}

Matrix Environment::sample_inputs(int n, rng::Engine& eng) const {
  return rng::gaussian_matrix(n, input_dim(), eng);
}

Matrix Environment::class_probs(const Matrix& inputs) const {
  return nn::softmax(nn::forward(params_, inputs), temperature_);
}

CoinEnvironment::CoinEnvironment(double p_heads) : p_heads_(p_heads) {
  if (p_heads < 0.0 || p_heads > 1.0 || !std::isfinite(p_heads))
    throw DomainError("CoinEnvironment: p_heads must lie in [0, 1]");
}

Matrix CoinEnvironment::sample_inputs(int n, rng::Engine& eng) const {
  (void)eng;
  return Matrix::Zero(n, 1);
}

Matrix CoinEnvironment::class_probs(const Matrix& inputs) const {
  Matrix probs(inputs.rows(), 2);
  probs.col(0).setConstant(1.0 - p_heads_);
  probs.col(1).setConstant(p_heads_);
  return probs;
}

Environment sample_environment(const GenerativeConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.uniform_xavier) {
    // Uniform(-a, a) with a = sqrt(6/(fan_in+fan_out)) has the same variance.
    nn::MlpParams p =
        nn::MlpParams::zeros(config.input_dim, config.hidden, config.num_classes);
    auto eng = rng::make_engine(seed);
    for (auto& l : p.layers) {
      const double a = std::sqrt(6.0 / static_cast<double>(l.weights.rows() + l.weights.cols()));
      std::uniform_real_distribution<double> dist(-a, a);
      for (Eigen::Index i = 0; i < l.weights.rows(); ++i)
        for (Eigen::Index j = 0; j < l.weights.cols(); ++j) l.weights(i, j) = dist(eng);
    }
    std::normal_distribution<double> bias_dist(0.0, std::sqrt(0.5));
    for (Eigen::Index i = 0; i < p.layers.front().bias.size(); ++i)
      p.layers.front().bias(i) = bias_dist(eng);
    return Environment(std::move(p), config.temperature);
  }
  nn::MlpParams p = nn::MlpParams::xavier(config.input_dim, config.hidden, config.num_classes,
                                          seed, std::sqrt(0.5));
  return Environment(std::move(p), config.temperature);
}

Dataset sample_data(const DataProcess& env, int n, std::uint64_t seed) {
  if (n < 1) throw UsageError("sample_data: n must be >= 1");
  auto eng = rng::make_engine(seed);
  Dataset out;
  out.inputs = env.sample_inputs(n, eng);
  Matrix probs = env.class_probs(out.inputs);
  out.labels.resize(n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double u = unif(eng);
    double cum = 0.0;
    int label = static_cast<int>(probs.cols()) - 1;
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      cum += probs(i, k);
      if (u < cum) {
        label = static_cast<int>(k);
        break;
      }
    }
    out.labels(i) = label;
  }
  return out;
}

double log_likelihood(const Matrix& probs, const IntVector& labels) {
  if (probs.rows() != labels.size())
    throw ShapeError("log_likelihood: probs and labels row counts differ");
  double total = 0.0;
  for (Eigen::Index t = 0; t < labels.size(); ++t) {
    const int y = labels(t);
    if (y < 0 || y >= probs.cols()) throw DomainError("log_likelihood: label out of range");
    total += std::log(probs(t, y));
  }
  return total;
}

double env_log_likelihood(const DataProcess& env, const Dataset& sample) {
  sample.validate(env.num_classes());
  return log_likelihood(env.class_probs(sample.inputs), sample.labels);
}

std::pair<double, double> coin_agent_likelihoods(int tau) {
  if (tau < 1) throw UsageError("coin_agent_likelihoods: tau must be >= 1");
  const double log_third = -std::log(3.0);
  return {static_cast<double>(tau) * log_third, log_third};
}

}  // namespace testbed::gen
