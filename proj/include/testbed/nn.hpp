#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "testbed/common.hpp"

namespace testbed::nn {

enum class Activation { kRelu };

struct DenseLayer {
  Matrix weights;  // fan_in x fan_out
  Vector bias;     // fan_out
};

/// Parameters of a feed-forward ReLU MLP. Hidden layers use the activation
/// tag; the final layer emits raw logits (output width = class count).
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kRelu;

  int input_dim() const;
  int output_dim() const;
  int num_hidden() const { return static_cast<int>(layers.size()) - 1; }
  std::size_t parameter_count() const;

  /// Checks layer dimension chaining and finiteness of all entries.
  void validate() const;

  static MlpParams zeros(int input_dim, const std::vector<int>& hidden, int output_dim);

  /// Xavier (Glorot) initialization: weights ~ N(0, 2/(fan_in+fan_out)).
  /// Biases are zero except the first layer's, drawn N(0, first_bias_stddev^2)
  /// when first_bias_stddev > 0.
  static MlpParams xavier(int input_dim, const std::vector<int>& hidden, int output_dim,
                          std::uint64_t seed, double first_bias_stddev = 0.0);
};

/// Flat view of all parameters in a fixed order (layer by layer, weights
/// column-major then bias). Used by finite-difference checks and SGLD.
Vector flatten(const MlpParams& params);
MlpParams unflatten(const Vector& theta, const MlpParams& shape);

struct TrainConfig {
  double l2_decay_scale = 0.0;  // coefficient on sum of squared weights
  double learning_rate = 1e-3;
  int num_steps = 1000;
  int batch_size = 128;
  std::optional<Vector> per_example_weights;  // bootstrap weights, dataset-aligned
  std::uint64_t seed = 0;
  double dropout_rate = 0.0;  // per-unit drop probability on hidden activations

  /// Full batch for small datasets, minibatch 128 beyond that.
  static int default_batch_size(int dataset_size) {
    return dataset_size <= 256 ? dataset_size : 128;
  }

  void validate(int dataset_size) const;
};

/// Forward pass: inputs (B x D) -> logits (B x K).
Matrix forward(const MlpParams& params, const Matrix& inputs);

/// Forward pass with fixed per-unit masks on hidden activations, one vector
/// per hidden layer. Masks must already carry the inverted-dropout scale.
Matrix forward_masked(const MlpParams& params, const Matrix& inputs,
                      const std::vector<Vector>& hidden_masks);

/// Row-wise temperature softmax, max-subtracted for stability. Output entries
/// are strictly positive and each row sums to 1.
Matrix softmax(const Matrix& logits, double temperature = 1.0);

struct LossGrad {
  double loss = 0.0;
  MlpParams grads;
};

/// Weighted mean cross-entropy plus l2_decay_scale * sum of squared weights
/// (biases are not decayed), with analytic gradients. Weights default to 1.
/// An optional logit offset (B x K, e.g. a fixed additive prior network's
/// output) is added to the logits before the softmax; only `params` receives
/// gradient.
LossGrad loss_and_grad(const MlpParams& params, const Matrix& inputs, const IntVector& labels,
                       const TrainConfig& config, const Matrix* logit_offset = nullptr);

/// Adam on the cross-entropy objective above. Pure function of its arguments:
/// same (params, data, config) in, bit-identical parameters out. With
/// config.dropout_rate > 0, per-example unit masks are resampled each step;
/// rate 0 consumes no mask randomness.
MlpParams train(const MlpParams& init, const Matrix& inputs, const IntVector& labels,
                const TrainConfig& config, const Matrix* logit_offset = nullptr);

}  // namespace testbed::nn
