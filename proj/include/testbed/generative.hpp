#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "testbed/common.hpp"
#include "testbed/nn.hpp"
#include "testbed/rng.hpp"

namespace testbed::gen {

struct GenerativeConfig {
  int input_dim = 2;
  int num_classes = 2;
  std::vector<int> hidden = {50, 50};
  double temperature = 0.1;
  bool uniform_xavier = false;

  void validate() const;
};

struct Dataset {
  Matrix inputs;     // n x D
  IntVector labels;  // n, entries in [0, K)

  int size() const { return static_cast<int>(inputs.rows()); }
  void validate(int num_classes) const;
};

// A τ-sample of held-out test pairs has the same layout as a training set.
using TauSample = Dataset;

// A conditional distribution over class labels given inputs, plus its input law.
class DataProcess {
 public:
  virtual ~DataProcess() = default;
  virtual int input_dim() const = 0;
  virtual int num_classes() const = 0;
  virtual Matrix sample_inputs(int n, rng::Engine& eng) const = 0;
  virtual Matrix class_probs(const Matrix& inputs) const = 0;
};

class Environment : public DataProcess {
 public:
  Environment(nn::MlpParams params, double temperature);

  int input_dim() const override { return params_.input_dim(); }
  int num_classes() const override { return params_.output_dim(); }
  Matrix sample_inputs(int n, rng::Engine& eng) const override;
  Matrix class_probs(const Matrix& inputs) const override;

  const nn::MlpParams& params() const { return params_; }
  double temperature() const { return temperature_; }

 private:
  nn::MlpParams params_;
  double temperature_;
};

// Bernoulli process over {0 = tails, 1 = heads}; input is a dummy scalar.
class CoinEnvironment : public DataProcess {
 public:
  explicit CoinEnvironment(double p_heads);

  int input_dim() const override { return 1; }
  int num_classes() const override { return 2; }
  Matrix sample_inputs(int n, rng::Engine& eng) const override;
  Matrix class_probs(const Matrix& inputs) const override;

  double p_heads() const { return p_heads_; }

 private:
  double p_heads_;
};

Environment sample_environment(const GenerativeConfig& config, std::uint64_t seed);

Dataset sample_data(const DataProcess& env, int n, std::uint64_t seed);

// Sum over rows of log P(labels[t] | inputs[t]).
double env_log_likelihood(const DataProcess& env, const Dataset& sample);
double log_likelihood(const Matrix& probs, const IntVector& labels);

// Log-probabilities the two reference coin agents assign to an all-tails
// τ-sequence: the first holds the single belief p_heads = 2/3, the second a
// 1/3 : 2/3 mixture of the two deterministic coins.
std::pair<double, double> coin_agent_likelihoods(int tau);

}  // namespace testbed::gen
