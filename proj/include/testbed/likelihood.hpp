#pragma once

#include <cstdint>
#include <vector>

#include "testbed/common.hpp"

namespace testbed::likelihood {

// M sampled models' class probabilities on a fixed batch of test inputs.
// Entry m is a τ x K matrix of rows p_{m,t,·}.
using ProbMatrix = std::vector<Matrix>;

void validate_prob_matrix(const ProbMatrix& probs);
void validate_labels(const ProbMatrix& probs, const IntVector& labels);

struct PartitionConfig {
  int num_hyperplanes = 7;
  std::uint64_t seed = 0;
  double probit_clip = 1e-6;

  void validate() const;
};

double normal_cdf(double x);
double inverse_normal_cdf(double p);

// log of (1/M) Σ_m Π_t p_{m,t,Y_t}; zero probabilities propagate as -inf.
double mc_log_likelihood(const ProbMatrix& probs, const IntVector& labels);

// Random-partition estimator: models are hashed into cells by the signs of d
// random affine functions of their stacked probits, cells average member
// probabilities, and the cell mixture is evaluated exactly.
double partition_log_likelihood(const ProbMatrix& probs, const IntVector& labels,
                                const PartitionConfig& config);

// The hyperplane draw is part of the contract: A is d x dim filled row by
// row, then b, all i.i.d. standard normal from the seed.
void draw_hyperplanes(int num_hyperplanes, int dim, std::uint64_t seed, Matrix& a, Vector& b);

// Exact log-likelihood of an explicit finite mixture: log Σ_i w_i Π_t p_{i,t,Y_t}.
double brute_force_log_likelihood(const Vector& weights, const ProbMatrix& tables,
                                  const IntVector& labels);

double logsumexp(const std::vector<double>& values);

}  // namespace testbed::likelihood
