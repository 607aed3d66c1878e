#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "testbed/common.hpp"
#include "testbed/generative.hpp"
#include "testbed/likelihood.hpp"
#include "testbed/nn.hpp"

namespace testbed::agents {

struct EnvMeta {
  int input_dim = 0;
  int num_classes = 0;
  double temperature = 1.0;
  int train_size = 0;
};

struct AgentSpec {
  std::string id;
  std::string kind;
  std::map<std::string, double> params;
  std::map<std::string, std::string> opts;
  std::uint64_t seed = 0;

  double get(const std::string& key, double fallback) const;
  std::string get_opt(const std::string& key, const std::string& fallback) const;
  // Returns every problem found, one message per offending key.
  std::vector<std::string> validate() const;
};

const std::vector<std::string>& supported_kinds();

// A trained agent's posterior over models. model_fn(inputs, index) returns
// the index-th sampled model's τ x K probability rows; support_size 0 means
// an unbounded family (index seeds fresh randomness), otherwise indices are
// taken modulo the support.
class PosteriorSampler {
 public:
  using ModelFn = std::function<Matrix(const Matrix&, std::uint64_t)>;

  PosteriorSampler(int num_classes, std::uint64_t support_size, ModelFn model_fn);

  int num_classes() const { return num_classes_; }
  std::uint64_t support_size() const { return support_size_; }
  Matrix model_probs(const Matrix& inputs, std::uint64_t index) const;

 private:
  int num_classes_;
  std::uint64_t support_size_;
  ModelFn model_fn_;
};

PosteriorSampler train_agent(const AgentSpec& spec, const gen::Dataset& data,
                             const EnvMeta& meta);

// Draw M conditionally independent models and tabulate their probabilities on
// the test inputs. stream distinguishes independent draws from one sampler.
likelihood::ProbMatrix sample_probs(const PosteriorSampler& sampler, const Matrix& inputs,
                                    int num_models, std::uint64_t stream = 0);

// Langevin sampler over a flat parameter vector; returns thinned snapshots.
// The callback supplies the gradient of the negative log-likelihood (summed
// over the data, or a minibatch estimate of that sum); the Gaussian prior
// term comes from prior_variance and is applied inside the loop.
struct SgldConfig {
  double learning_rate = 5e-4;
  int burn_in_steps = 10000;
  int thin_interval = 200;
  int num_snapshots = 50;
  double prior_variance = 1.0;
  double momentum = 0.0;  // 0 disables the underdamped variant
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<Vector> sgld_sample(const Vector& init,
                                const std::function<Vector(const Vector&)>& grad_neg_log_lik,
                                const SgldConfig& config);

// Both routes to the deep-kernel GP posterior covariance; kept separate so
// they can be checked against each other. phi_train is n x f, phi_test m x f.
Matrix gp_posterior_cov_direct(const Matrix& phi_train, const Matrix& phi_test, double noise);
Matrix gp_posterior_cov_woodbury(const Matrix& phi_train, const Matrix& phi_test, double noise);

}  // namespace testbed::agents
