#include "testbed/nn.hpp"

#include <cfloat>
#include <cmath>
#include <random>

#include "testbed/rng.hpp"

namespace testbed::nn {

namespace {

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw DomainError(std::string(what) + ": non-finite entries");
}

}  // namespace

int MlpParams::input_dim() const {
  if (layers.empty()) throw ShapeError("MlpParams: no layers");
  return static_cast<int>(layers.front().weights.rows());
}

int MlpParams::output_dim() const {
  if (layers.empty()) throw ShapeError("MlpParams: no layers");
  return static_cast<int>(layers.back().weights.cols());
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ShapeError("MlpParams: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.weights.cols())
      throw ShapeError("MlpParams: bias length does not match layer fan-out");
    if (i + 1 < layers.size() && l.weights.cols() != layers[i + 1].weights.rows())
      throw ShapeError("MlpParams: consecutive layer dimensions do not chain");
    if (!l.weights.allFinite() || !l.bias.allFinite())
      throw DomainError("MlpParams: non-finite parameter entries");
  }
}

MlpParams MlpParams::zeros(int input_dim, const std::vector<int>& hidden, int output_dim) {
  if (input_dim < 1 || output_dim < 1) throw ShapeError("MlpParams: dimensions must be positive");
  MlpParams p;
  int fan_in = input_dim;
  for (int h : hidden) {
    if (h < 1) throw ShapeError("MlpParams: hidden width must be positive");
    p.layers.push_back({Matrix::Zero(fan_in, h), Vector::Zero(h)});
    fan_in = h;
  }
  p.layers.push_back({Matrix::Zero(fan_in, output_dim), Vector::Zero(output_dim)});
  return p;
}

MlpParams MlpParams::xavier(int input_dim, const std::vector<int>& hidden, int output_dim,
                            std::uint64_t seed, double first_bias_stddev) {
  MlpParams p = zeros(input_dim, hidden, output_dim);
  auto eng = rng::make_engine(seed);
  for (auto& l : p.layers) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(l.weights.rows() + l.weights.cols()));
    l.weights = rng::gaussian_matrix(static_cast<int>(l.weights.rows()),
                                     static_cast<int>(l.weights.cols()), eng, stddev);
  }
  if (first_bias_stddev > 0.0) {
    p.layers.front().bias =
        rng::gaussian_vector(static_cast<int>(p.layers.front().bias.size()), eng, first_bias_stddev);
  }
  return p;
}

Vector flatten(const MlpParams& params) {
  Vector theta(params.parameter_count());
  Eigen::Index pos = 0;
  for (const auto& l : params.layers) {
    theta.segment(pos, l.weights.size()) = Eigen::Map<const Vector>(l.weights.data(), l.weights.size());
    pos += l.weights.size();
    theta.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
  return theta;
}

MlpParams unflatten(const Vector& theta, const MlpParams& shape) {
  if (theta.size() != static_cast<Eigen::Index>(shape.parameter_count()))
    throw ShapeError("unflatten: length does not match parameter count");
  MlpParams out = shape;
  Eigen::Index pos = 0;
  for (auto& l : out.layers) {
    l.weights = Eigen::Map<const Matrix>(theta.data() + pos, l.weights.rows(), l.weights.cols());
    pos += l.weights.size();
    l.bias = theta.segment(pos, l.bias.size());
    pos += l.bias.size();
  }
  return out;
}

void TrainConfig::validate(int dataset_size) const {
  if (dataset_size < 1) throw UsageError("train: empty dataset");
  if (num_steps < 1) throw UsageError("train: num_steps must be >= 1");
  if (batch_size < 1) throw UsageError("train: batch_size must be >= 1");
  if (learning_rate < 0.0 || !std::isfinite(learning_rate))
    throw DomainError("train: learning_rate must be a nonnegative real");
  if (l2_decay_scale < 0.0) throw DomainError("train: l2_decay_scale must be nonnegative");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw DomainError("train: dropout_rate must lie in [0, 1)");
  if (per_example_weights &&
      per_example_weights->size() != static_cast<Eigen::Index>(dataset_size))
    throw ShapeError("train: per_example_weights length does not match dataset");
  if (per_example_weights && per_example_weights->minCoeff() < 0.0)
    throw DomainError("train: per_example_weights must be nonnegative");
}

namespace {

Matrix affine(const Matrix& h, const DenseLayer& l) {
  return (h * l.weights).rowwise() + l.bias.transpose();
}

struct ForwardTrace {
  std::vector<Matrix> post;  // post[0] = inputs, post[i] = activation after layer i-1
  std::vector<Matrix> pre;   // pre-activation per layer
};

ForwardTrace forward_trace(const MlpParams& params, const Matrix& inputs,
                           const std::vector<Matrix>* unit_masks) {
  ForwardTrace t;
  t.post.push_back(inputs);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    Matrix z = affine(t.post.back(), params.layers[i]);
    t.pre.push_back(z);
    if (i + 1 < params.layers.size()) {
      Matrix h = z.cwiseMax(0.0);
      if (unit_masks) h = h.cwiseProduct((*unit_masks)[i]);
      t.post.push_back(std::move(h));
    } else {
      t.post.push_back(std::move(z));
    }
  }
  return t;
}

}  // namespace

Matrix forward(const MlpParams& params, const Matrix& inputs) {
  params.validate();
  if (inputs.cols() != params.input_dim())
    throw ShapeError("forward: input width does not match first-layer fan-in");
  Matrix h = inputs;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    h = affine(h, params.layers[i]);
    if (i + 1 < params.layers.size()) h = h.cwiseMax(0.0);
  }
  check_finite(h, "forward logits");
  return h;
}

Matrix forward_masked(const MlpParams& params, const Matrix& inputs,
                      const std::vector<Vector>& hidden_masks) {
  params.validate();
  if (inputs.cols() != params.input_dim())
    throw ShapeError("forward_masked: input width does not match first-layer fan-in");
  if (hidden_masks.size() != params.layers.size() - 1)
    throw ShapeError("forward_masked: one mask per hidden layer required");
  Matrix h = inputs;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    h = affine(h, params.layers[i]);
    if (i + 1 < params.layers.size()) {
      if (hidden_masks[i].size() != h.cols())
        throw ShapeError("forward_masked: mask width does not match layer");
      h = h.cwiseMax(0.0) * hidden_masks[i].asDiagonal();
    }
  }
  check_finite(h, "forward_masked logits");
  return h;
}

Matrix softmax(const Matrix& logits, double temperature) {
  if (temperature <= 0.0 || !std::isfinite(temperature))
    throw DomainError("softmax: temperature must be positive");
  Matrix probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::RowVectorXd row = logits.row(i) / temperature;
    const double m = row.maxCoeff();
    Eigen::RowVectorXd e = (row.array() - m).exp();
    // Keep entries strictly positive even when the shifted exponent underflows.
    e = e.cwiseMax(DBL_MIN);
    probs.row(i) = e / e.sum();
  }
  return probs;
}

namespace {

// Cross-entropy for logits that already include any offset; writes
// (softmax - onehot) * w_i / batch into dlogits.
double cross_entropy_and_dlogits(const Matrix& logits, const IntVector& labels,
                                 const Vector* weights, Matrix& dlogits) {
  const Eigen::Index batch = logits.rows();
  const int num_classes = static_cast<int>(logits.cols());
  Matrix probs = softmax(logits, 1.0);
  dlogits = probs;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int y = labels(i);
    if (y < 0 || y >= num_classes) throw DomainError("loss: label out of range [0, K)");
    const double w = weights ? (*weights)(i) : 1.0;
    loss += -w * std::log(probs(i, y));
    dlogits(i, y) -= 1.0;
    dlogits.row(i) *= w / static_cast<double>(batch);
  }
  return loss / static_cast<double>(batch);
}

double squared_weight_norm(const MlpParams& params) {
  double s = 0.0;
  for (const auto& l : params.layers) s += l.weights.squaredNorm();
  return s;
}

LossGrad loss_and_grad_impl(const MlpParams& params, const Matrix& inputs,
                            const IntVector& labels, const TrainConfig& config,
                            const Matrix* logit_offset, const Vector* batch_weights,
                            const std::vector<Matrix>* unit_masks) {
  if (inputs.rows() != labels.size())
    throw ShapeError("loss: inputs and labels row counts differ");
  if (inputs.cols() != params.input_dim())
    throw ShapeError("loss: input width does not match first-layer fan-in");
  if (logit_offset &&
      (logit_offset->rows() != inputs.rows() || logit_offset->cols() != params.output_dim()))
    throw ShapeError("loss: logit offset shape does not match batch x classes");

  ForwardTrace trace = forward_trace(params, inputs, unit_masks);
  Matrix logits = trace.post.back();
  if (logit_offset) logits += *logit_offset;

  LossGrad out;
  out.grads = params;
  Matrix delta;  // gradient wrt current layer pre-activation
  out.loss = cross_entropy_and_dlogits(logits, labels, batch_weights, delta);
  out.loss += config.l2_decay_scale * squared_weight_norm(params);

  for (int i = static_cast<int>(params.layers.size()) - 1; i >= 0; --i) {
    const Matrix& h_in = trace.post[i];
    out.grads.layers[i].weights =
        h_in.transpose() * delta + 2.0 * config.l2_decay_scale * params.layers[i].weights;
    out.grads.layers[i].bias = delta.colwise().sum();
    if (i > 0) {
      Matrix dh = delta * params.layers[i].weights.transpose();
      if (unit_masks) dh = dh.cwiseProduct((*unit_masks)[i - 1]);
      delta = dh.cwiseProduct((trace.pre[i - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

}  // namespace

LossGrad loss_and_grad(const MlpParams& params, const Matrix& inputs, const IntVector& labels,
                       const TrainConfig& config, const Matrix* logit_offset) {
  const Vector* w = config.per_example_weights ? &*config.per_example_weights : nullptr;
  if (w && w->size() != inputs.rows())
    throw ShapeError("loss: per_example_weights length does not match batch");
  return loss_and_grad_impl(params, inputs, labels, config, logit_offset, w, nullptr);
}

MlpParams train(const MlpParams& init, const Matrix& inputs, const IntVector& labels,
                const TrainConfig& config, const Matrix* logit_offset) {
  const int dataset_size = static_cast<int>(inputs.rows());
  config.validate(dataset_size);
  init.validate();
  if (inputs.rows() != labels.size())
    throw ShapeError("train: inputs and labels row counts differ");

  const int batch = std::min(config.batch_size, dataset_size);
  const bool full_batch = batch == dataset_size;
  const int num_hidden = init.num_hidden();
  auto eng = rng::make_engine(rng::derive(config.seed, {rng::hash_string("train")}));

  MlpParams params = init;
  MlpParams m1 = init;
  for (auto& l : m1.layers) {
    l.weights.setZero();
    l.bias.setZero();
  }
  MlpParams m2 = m1;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  std::uniform_int_distribution<int> pick(0, dataset_size - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double keep = 1.0 - config.dropout_rate;

  Matrix batch_x;
  IntVector batch_y;
  Matrix batch_offset;
  Vector batch_w;

  for (int step = 1; step <= config.num_steps; ++step) {
    const Matrix* x = &inputs;
    const IntVector* y = &labels;
    const Matrix* offset = logit_offset;
    const Vector* w = config.per_example_weights ? &*config.per_example_weights : nullptr;

    if (!full_batch) {
      batch_x.resize(batch, inputs.cols());
      batch_y.resize(batch);
      if (logit_offset) batch_offset.resize(batch, logit_offset->cols());
      if (w) batch_w.resize(batch);
      for (int i = 0; i < batch; ++i) {
        const int idx = pick(eng);
        batch_x.row(i) = inputs.row(idx);
        batch_y(i) = labels(idx);
        if (logit_offset) batch_offset.row(i) = logit_offset->row(idx);
        if (w) batch_w(i) = (*config.per_example_weights)(idx);
      }
      x = &batch_x;
      y = &batch_y;
      if (logit_offset) offset = &batch_offset;
      if (w) w = &batch_w;
    }

    std::vector<Matrix> masks;
    const std::vector<Matrix>* masks_ptr = nullptr;
    if (config.dropout_rate > 0.0) {
      masks.reserve(num_hidden);
      for (int l = 0; l < num_hidden; ++l) {
        Matrix mask(x->rows(), params.layers[l].weights.cols());
        for (Eigen::Index r = 0; r < mask.rows(); ++r)
          for (Eigen::Index c = 0; c < mask.cols(); ++c)
            mask(r, c) = unif(eng) < keep ? 1.0 / keep : 0.0;
        masks.push_back(std::move(mask));
      }
      masks_ptr = &masks;
    }

    LossGrad lg = loss_and_grad_impl(params, *x, *y, config, offset, w, masks_ptr);

    const double bc1 = 1.0 - std::pow(kBeta1, step);
    const double bc2 = 1.0 - std::pow(kBeta2, step);
    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
      m = kBeta1 * m + (1.0 - kBeta1) * g;
      v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
      p.array() -= config.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kEps);
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      update(params.layers[l].weights, m1.layers[l].weights, m2.layers[l].weights,
             lg.grads.layers[l].weights);
      update(params.layers[l].bias, m1.layers[l].bias, m2.layers[l].bias, lg.grads.layers[l].bias);
    }
  }
  params.validate();
  return params;
}

}  // namespace testbed::nn
