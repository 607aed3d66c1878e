#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "testbed/agents.hpp"
#include "testbed/generative.hpp"

namespace testbed::eval {

struct TestbedSweepConfig {
  std::vector<double> temperatures = {0.01, 0.1, 0.5};
  std::vector<int> train_sizes = {1, 3, 10, 30, 100, 300, 1000};
  std::vector<int> taus = {1, 100};
  int problems_per_cell = 10;   // J
  int num_test_samples = 1000;  // N
  int num_models = 1000;        // M
  int num_hyperplanes = 7;      // d
  int estimator_switch_tau = 10;
  int input_dim = 2;
  int num_classes = 2;
  std::vector<int> hidden = {50, 50};
  double probit_clip = 1e-6;
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
};

struct EvalRecord {
  std::string agent;
  std::optional<double> beta;
  std::optional<int> train_size;
  int tau = 0;
  double kl = 0.0;  // KL estimate in testbed mode, NLL on real data
  double stderr_ = 0.0;
  long count = 0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
};

struct CellConfig {
  int tau = 1;
  int problems = 10;        // J
  int test_samples = 1000;  // N
  int num_models = 1000;    // M
  int num_hyperplanes = 7;  // d
  int estimator_switch_tau = 10;
  double probit_clip = 1e-6;

  void validate() const;
};

// One problem draw: an environment together with a training set from it.
struct Problem {
  std::unique_ptr<gen::DataProcess> env;
  gen::Dataset train;
};

using ProblemSampler = std::function<Problem(std::uint64_t seed)>;
using AgentFactory =
    std::function<agents::PosteriorSampler(const gen::Dataset&, const gen::DataProcess&,
                                           std::uint64_t seed)>;

// The testbed loop over an arbitrary problem distribution: J problems, one
// agent per problem, N τ-samples each, mean and standard error of
// log p_env - log p̂_agent.
EvalRecord run_cell_core(const ProblemSampler& problems, const AgentFactory& factory,
                         const CellConfig& config, std::uint64_t seed, const std::string& agent_id);

EvalRecord run_cell(const agents::AgentSpec& spec, double beta, int train_size, int tau,
                    const TestbedSweepConfig& sweep, std::uint64_t seed);

std::vector<EvalRecord> run_sweep(const TestbedSweepConfig& sweep,
                                  const std::vector<agents::AgentSpec>& agent_specs);

// Mean over cells per (agent, τ), appended after the cell records.
std::vector<EvalRecord> aggregate_records(const std::vector<EvalRecord>& cells);

enum class BlockSampling {
  kRandom,      // blocks drawn with replacement across, without within
  kSequential,  // consecutive disjoint blocks covering the test set in order
};

struct RealEvalConfig {
  int tau = 1;
  int num_blocks = 1000;  // N
  int num_models = 1000;  // M
  int num_hyperplanes = 10;
  int estimator_switch_tau = 10;
  int num_classes = 0;  // 0: infer from the labels present
  double probit_clip = 1e-6;
  BlockSampling sampling = BlockSampling::kRandom;

  void validate() const;
};

EvalRecord evaluate_nll_real(const agents::AgentSpec& spec, const gen::Dataset& train,
                             const gen::Dataset& test, const RealEvalConfig& config,
                             std::uint64_t seed);

// Block-evaluation half of evaluate_nll_real, usable with any sampler
// (reference fixtures included). num_classes must be resolved by the caller.
EvalRecord evaluate_nll_blocks(const agents::PosteriorSampler& sampler, const gen::Dataset& test,
                               const RealEvalConfig& config, std::uint64_t seed,
                               const std::string& agent_id, int train_size);

}  // namespace testbed::eval
