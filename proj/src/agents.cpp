#include "testbed/agents.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "testbed/rng.hpp"

namespace testbed::agents {

namespace {

std::uint64_t tag(std::string_view s) { return rng::hash_string(s); }

std::vector<int> parse_widths(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw UsageError("agent: bad hidden width list '" + text + "'");
    }
  }
  return out;
}

Matrix affine(const Matrix& h, const nn::DenseLayer& l) {
  return (h * l.weights).rowwise() + l.bias.transpose();
}

// Activations feeding the final linear layer.
Matrix penultimate(const nn::MlpParams& p, const Matrix& x) {
  Matrix h = x;
  for (std::size_t i = 0; i + 1 < p.layers.size(); ++i) h = affine(h, p.layers[i]).cwiseMax(0.0);
  return h;
}

}  // namespace

double AgentSpec::get(const std::string& key, double fallback) const {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

std::string AgentSpec::get_opt(const std::string& key, const std::string& fallback) const {
  auto it = opts.find(key);
  return it == opts.end() ? fallback : it->second;
}

const std::vector<std::string>& supported_kinds() {
  static const std::vector<std::string> kinds = {
      "mlp", "ensemble", "ensemble_plus", "dropout", "sgld", "deep_kernel", "knn"};
  return kinds;
}

std::vector<std::string> AgentSpec::validate() const {
  std::vector<std::string> errors;
  auto complain = [&](const std::string& msg) { errors.push_back(msg); };

  const auto& kinds = supported_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    std::string msg = "unknown agent kind '" + kind + "'; supported kinds:";
    for (const auto& k : kinds) msg += " " + k;
    complain(msg);
    return errors;
  }

  auto check_positive = [&](const std::string& key, double fallback) {
    const double v = get(key, fallback);
    if (!(v > 0.0) || !std::isfinite(v)) complain(key + " must be positive, got " + std::to_string(v));
  };
  auto check_nonneg = [&](const std::string& key, double fallback) {
    const double v = get(key, fallback);
    if (v < 0.0 || !std::isfinite(v)) complain(key + " must be nonnegative, got " + std::to_string(v));
  };
  auto check_count = [&](const std::string& key, double fallback) {
    const double v = get(key, fallback);
    if (v < 1.0 || v != std::floor(v)) complain(key + " must be a positive integer, got " + std::to_string(v));
  };
  auto check_opt_in = [&](const std::string& key, const std::string& fallback,
                          std::initializer_list<const char*> allowed) {
    const std::string v = get_opt(key, fallback);
    for (const char* a : allowed)
      if (v == a) return;
    std::string msg = key + " must be one of {";
    bool first = true;
    for (const char* a : allowed) {
      if (!first) msg += ", ";
      msg += a;
      first = false;
    }
    complain(msg + "}, got '" + v + "'");
  };

  if (kind != "knn") {
    check_nonneg("lambda", 1.0);
    check_positive("learning_rate", kind == "sgld" ? 5e-4 : 1e-3);
    check_count("steps", 1000);
    if (params.count("batch")) check_count("batch", 128);
    try {
      for (int w : parse_widths(get_opt("hidden", "50,50")))
        if (w < 1) complain("hidden widths must be >= 1");
    } catch (const UsageError& e) {
      complain(e.what());
    }
  }

  if (kind == "mlp" || kind == "ensemble" || kind == "ensemble_plus" || kind == "deep_kernel")
    check_opt_in("decay_form", "plain", {"plain", "scaled"});
  if (kind == "ensemble" || kind == "ensemble_plus") check_count("ensemble_size", 10);
  if (kind == "ensemble_plus") {
    check_nonneg("prior_scale", 1.0);
    check_opt_in("bootstrap", "none", {"none", "exponential", "bernoulli"});
  }
  if (kind == "dropout") {
    const double rate = get("rate", 0.5);
    if (!(rate >= 0.0) || !(rate < 1.0)) complain("rate must lie in [0, 1)");
    check_positive("length_scale", 1.0);
    check_opt_in("decay_form", "length_scale", {"length_scale", "scaled"});
  }
  if (kind == "sgld") {
    check_positive("lambda", 0.5);
    check_nonneg("burn_in", 10000);
    check_count("thin", 200);
    check_count("snapshots", 50);
    check_opt_in("momentum", "off", {"off", "on"});
  }
  if (kind == "deep_kernel") check_positive("noise", 1.0);
  if (kind == "knn") {
    check_count("k", 10);
    check_opt_in("weighting", "uniform", {"uniform", "distance"});
  }
  return errors;
}

PosteriorSampler::PosteriorSampler(int num_classes, std::uint64_t support_size, ModelFn model_fn)
    : num_classes_(num_classes), support_size_(support_size), model_fn_(std::move(model_fn)) {
  if (num_classes_ < 2) throw ShapeError("PosteriorSampler: needs at least two classes");
  if (!model_fn_) throw UsageError("PosteriorSampler: null model function");
}

Matrix PosteriorSampler::model_probs(const Matrix& inputs, std::uint64_t index) const {
  if (support_size_ > 0) index %= support_size_;
  Matrix probs = model_fn_(inputs, index);
  if (probs.rows() != inputs.rows() || probs.cols() != num_classes_)
    throw ShapeError("PosteriorSampler: model output shape mismatch");
  return probs;
}

namespace {

nn::TrainConfig base_train_config(const AgentSpec& spec, int dataset_size) {
  nn::TrainConfig c;
  c.learning_rate = spec.get("learning_rate", 1e-3);
  c.num_steps = static_cast<int>(spec.get("steps", 1000));
  c.batch_size =
      static_cast<int>(spec.get("batch", nn::TrainConfig::default_batch_size(dataset_size)));
  return c;
}

// λ/(M_ens·T), or with decay_form=scaled λ·D·√β/(M_ens·T).
double l2_scale(const AgentSpec& spec, const EnvMeta& meta, int ensemble_size) {
  double lambda = spec.get("lambda", 1.0);
  if (spec.get_opt("decay_form", "plain") == "scaled")
    lambda *= meta.input_dim * std::sqrt(meta.temperature);
  return lambda / (static_cast<double>(ensemble_size) * meta.train_size);
}

// l²(1−p)/(2T), or with decay_form=scaled D·√β·l/T.
double dropout_l2_scale(const AgentSpec& spec, const EnvMeta& meta) {
  const double l = spec.get("length_scale", 1.0);
  if (spec.get_opt("decay_form", "length_scale") == "scaled")
    return meta.input_dim * std::sqrt(meta.temperature) * l / meta.train_size;
  const double rate = spec.get("rate", 0.5);
  return l * l * (1.0 - rate) / (2.0 * meta.train_size);
}

Vector bootstrap_weights(const std::string& kind, int n, std::uint64_t seed) {
  auto eng = rng::make_engine(seed);
  Vector w(n);
  if (kind == "exponential") {
    std::exponential_distribution<double> dist(1.0);
    for (int i = 0; i < n; ++i) w(i) = dist(eng);
  } else {  // bernoulli: keep half the examples at double weight
    std::bernoulli_distribution dist(0.5);
    for (int i = 0; i < n; ++i) w(i) = dist(eng) ? 2.0 : 0.0;
  }
  return w;
}

PosteriorSampler build_mlp(const AgentSpec& spec, const gen::Dataset& data, const EnvMeta& meta) {
  const auto hidden = parse_widths(spec.get_opt("hidden", "50,50"));
  nn::MlpParams init = nn::MlpParams::xavier(meta.input_dim, hidden, meta.num_classes,
                                             rng::derive(spec.seed, {tag("init"), 0}));
  nn::TrainConfig cfg = base_train_config(spec, data.size());
  cfg.l2_decay_scale = l2_scale(spec, meta, 1);
  cfg.seed = rng::derive(spec.seed, {tag("train"), 0});
  nn::MlpParams trained = nn::train(init, data.inputs, data.labels, cfg);
  return PosteriorSampler(meta.num_classes, 1,
                          [trained = std::move(trained)](const Matrix& x, std::uint64_t) {
                            return nn::softmax(nn::forward(trained, x));
                          });
}

PosteriorSampler build_ensemble(const AgentSpec& spec, const gen::Dataset& data,
                                const EnvMeta& meta, bool with_prior) {
  const auto hidden = parse_widths(spec.get_opt("hidden", "50,50"));
  const int m_ens = static_cast<int>(spec.get("ensemble_size", 10));
  const double prior_scale = with_prior ? spec.get("prior_scale", 1.0) : 0.0;
  const std::string bootstrap = with_prior ? spec.get_opt("bootstrap", "none") : "none";
  // A function drawn from the generative process has logits forward(net)/temperature,
  // so the additive prior carries the same scaling.
  const double prior_gain = prior_scale / meta.temperature;

  std::vector<nn::MlpParams> members;
  std::vector<nn::MlpParams> priors;
  members.reserve(m_ens);
  for (int i = 0; i < m_ens; ++i) {
    nn::MlpParams init = nn::MlpParams::xavier(meta.input_dim, hidden, meta.num_classes,
                                               rng::derive(spec.seed, {tag("init"), std::uint64_t(i)}));
    nn::TrainConfig cfg = base_train_config(spec, data.size());
    cfg.l2_decay_scale = l2_scale(spec, meta, m_ens);
    cfg.seed = rng::derive(spec.seed, {tag("train"), std::uint64_t(i)});
    if (bootstrap != "none")
      cfg.per_example_weights = bootstrap_weights(
          bootstrap, data.size(), rng::derive(spec.seed, {tag("boot"), std::uint64_t(i)}));

    Matrix prior_logits;
    const Matrix* offset = nullptr;
    if (prior_scale > 0.0) {
      gen::GenerativeConfig prior_cfg;
      prior_cfg.input_dim = meta.input_dim;
      prior_cfg.num_classes = meta.num_classes;
      prior_cfg.hidden = parse_widths(spec.get_opt("prior_hidden", "50,50"));
      prior_cfg.temperature = meta.temperature;
      priors.push_back(
          gen::sample_environment(prior_cfg, rng::derive(spec.seed, {tag("prior"), std::uint64_t(i)}))
              .params());
      prior_logits = prior_gain * nn::forward(priors.back(), data.inputs);
      offset = &prior_logits;
    }
    members.push_back(nn::train(init, data.inputs, data.labels, cfg, offset));
  }

  return PosteriorSampler(
      meta.num_classes, static_cast<std::uint64_t>(m_ens),
      [members = std::move(members), priors = std::move(priors), prior_gain](
          const Matrix& x, std::uint64_t idx) {
        Matrix logits = nn::forward(members[idx], x);
        if (!priors.empty()) logits += prior_gain * nn::forward(priors[idx], x);
        return nn::softmax(logits);
      });
}

PosteriorSampler build_dropout(const AgentSpec& spec, const gen::Dataset& data,
                               const EnvMeta& meta) {
  const auto hidden = parse_widths(spec.get_opt("hidden", "50,50"));
  const double rate = spec.get("rate", 0.5);
  nn::MlpParams init = nn::MlpParams::xavier(meta.input_dim, hidden, meta.num_classes,
                                             rng::derive(spec.seed, {tag("init"), 0}));
  nn::TrainConfig cfg = base_train_config(spec, data.size());
  cfg.l2_decay_scale = dropout_l2_scale(spec, meta);
  cfg.dropout_rate = rate;
  cfg.seed = rng::derive(spec.seed, {tag("train"), 0});
  nn::MlpParams trained = nn::train(init, data.inputs, data.labels, cfg);

  std::vector<int> widths;
  for (std::size_t l = 0; l + 1 < trained.layers.size(); ++l)
    widths.push_back(static_cast<int>(trained.layers[l].weights.cols()));

  // One sampled model = one fresh set of unit masks, fixed across test inputs.
  return PosteriorSampler(
      meta.num_classes, 0,
      [trained = std::move(trained), widths, rate](const Matrix& x, std::uint64_t idx) {
        const double keep = 1.0 - rate;
        auto eng = rng::make_engine(idx);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<Vector> masks;
        masks.reserve(widths.size());
        for (int w : widths) {
          Vector mask(w);
          for (int j = 0; j < w; ++j) mask(j) = unif(eng) < keep ? 1.0 / keep : 0.0;
          masks.push_back(std::move(mask));
        }
        return nn::softmax(nn::forward_masked(trained, x, masks));
      });
}

PosteriorSampler build_sgld(const AgentSpec& spec, const gen::Dataset& data, const EnvMeta& meta) {
  const auto hidden = parse_widths(spec.get_opt("hidden", "50,50"));
  nn::MlpParams shape = nn::MlpParams::xavier(meta.input_dim, hidden, meta.num_classes,
                                              rng::derive(spec.seed, {tag("init"), 0}));
  const double lambda = spec.get("lambda", 0.5);

  SgldConfig scfg;
  scfg.learning_rate = spec.get("learning_rate", 5e-4);
  scfg.burn_in_steps = static_cast<int>(spec.get("burn_in", 10000));
  scfg.thin_interval = static_cast<int>(spec.get("thin", 200));
  scfg.num_snapshots = static_cast<int>(spec.get("snapshots", 50));
  scfg.momentum = spec.get_opt("momentum", "off") == "on" ? 0.9 : 0.0;
  scfg.prior_variance = lambda * meta.train_size / (meta.input_dim * meta.temperature);
  scfg.seed = rng::derive(spec.seed, {tag("sgld")});

  const int n = data.size();
  const int batch = std::min(n, static_cast<int>(spec.get("batch", 128)));
  auto batch_eng = std::make_shared<rng::Engine>(
      rng::make_engine(rng::derive(spec.seed, {tag("sgld_batch")})));

  // Minibatch estimate of the summed negative log-likelihood gradient.
  auto grad = [&data, shape, n, batch, batch_eng](const Vector& theta) {
    nn::MlpParams p = nn::unflatten(theta, shape);
    nn::TrainConfig plain;
    nn::LossGrad lg;
    if (batch == n) {
      lg = nn::loss_and_grad(p, data.inputs, data.labels, plain);
    } else {
      std::uniform_int_distribution<int> pick(0, n - 1);
      Matrix bx(batch, data.inputs.cols());
      IntVector by(batch);
      for (int i = 0; i < batch; ++i) {
        const int idx = pick(*batch_eng);
        bx.row(i) = data.inputs.row(idx);
        by(i) = data.labels(idx);
      }
      lg = nn::loss_and_grad(p, bx, by, plain);
    }
    return Vector(nn::flatten(lg.grads) * static_cast<double>(n));
  };

  std::vector<Vector> snaps = sgld_sample(nn::flatten(shape), grad, scfg);
  std::vector<nn::MlpParams> models;
  models.reserve(snaps.size());
  for (const auto& s : snaps) models.push_back(nn::unflatten(s, shape));

  // Take the size before the move: constructor argument order is unspecified.
  const std::uint64_t support = models.size();
  return PosteriorSampler(meta.num_classes, support,
                          [models = std::move(models)](const Matrix& x, std::uint64_t idx) {
                            return nn::softmax(nn::forward(models[idx], x));
                          });
}

PosteriorSampler build_deep_kernel(const AgentSpec& spec, const gen::Dataset& data,
                                   const EnvMeta& meta) {
  const auto hidden = parse_widths(spec.get_opt("hidden", "50,50"));
  nn::MlpParams init = nn::MlpParams::xavier(meta.input_dim, hidden, meta.num_classes,
                                             rng::derive(spec.seed, {tag("init"), 0}));
  nn::TrainConfig cfg = base_train_config(spec, data.size());
  cfg.l2_decay_scale = l2_scale(spec, meta, 1);
  cfg.seed = rng::derive(spec.seed, {tag("train"), 0});
  nn::MlpParams trained = nn::train(init, data.inputs, data.labels, cfg);

  const double noise = spec.get("noise", 1.0);
  const Matrix phi = penultimate(trained, data.inputs);
  const int feat = static_cast<int>(phi.cols());
  Matrix gram = noise * noise * Matrix::Identity(feat, feat) + phi.transpose() * phi;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success)
    throw DomainError("deep_kernel: feature Gram matrix is not positive definite");
  const Matrix u = llt.matrixU();

  const int num_classes = meta.num_classes;
  return PosteriorSampler(
      num_classes, 0,
      [trained = std::move(trained), u, noise, feat, num_classes](const Matrix& x,
                                                                  std::uint64_t idx) {
        const Matrix mu = nn::forward(trained, x);
        const Matrix phi_test = penultimate(trained, x);
        auto eng = rng::make_engine(idx);
        Matrix zeta = rng::gaussian_matrix(feat, num_classes, eng);
        const Matrix logits =
            mu + noise * phi_test * u.triangularView<Eigen::Upper>().solve(zeta);
        return nn::softmax(logits);
      });
}

PosteriorSampler build_knn(const AgentSpec& spec, const gen::Dataset& data, const EnvMeta& meta) {
  const int k = std::min(static_cast<int>(spec.get("k", 10)), data.size());
  const bool by_distance = spec.get_opt("weighting", "uniform") == "distance";
  const int num_classes = meta.num_classes;
  const Matrix train_x = data.inputs;
  const IntVector train_y = data.labels;

  return PosteriorSampler(
      num_classes, 1,
      [train_x, train_y, k, by_distance, num_classes](const Matrix& x, std::uint64_t) {
        const int n = static_cast<int>(train_x.rows());
        Matrix probs(x.rows(), num_classes);
        std::vector<std::pair<double, int>> dist(n);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
          for (int i = 0; i < n; ++i)
            dist[i] = {(train_x.row(i) - x.row(r)).squaredNorm(), i};
          // Ties break toward the lowest training index.
          std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
          Vector weight = Vector::Zero(num_classes);
          if (by_distance && dist[0].first == 0.0) {
            for (int i = 0; i < k && dist[i].first == 0.0; ++i) weight(train_y(dist[i].second)) += 1.0;
          } else {
            for (int i = 0; i < k; ++i) {
              const double w = by_distance ? 1.0 / std::sqrt(dist[i].first) : 1.0;
              weight(train_y(dist[i].second)) += w;
            }
          }
          Vector row = weight / weight.sum();
          row = row.cwiseMax(0.01).cwiseMin(0.99);
          probs.row(r) = row / row.sum();
        }
        return probs;
      });
}

}  // namespace

PosteriorSampler train_agent(const AgentSpec& spec, const gen::Dataset& data,
                             const EnvMeta& meta) {
  auto errors = spec.validate();
  if (!errors.empty()) {
    std::string msg = "agent '" + spec.id + "':";
    for (const auto& e : errors) msg += "\n  " + e;
    throw UsageError(msg);
  }
  if (meta.input_dim < 1 || meta.num_classes < 2)
    throw ShapeError("train_agent: bad env meta dimensions");
  if (!(meta.temperature > 0.0)) throw DomainError("train_agent: temperature must be positive");
  if (meta.train_size != data.size())
    throw ShapeError("train_agent: meta train_size does not match dataset");
  if (data.inputs.cols() != meta.input_dim)
    throw ShapeError("train_agent: dataset width does not match env meta");
  data.validate(meta.num_classes);

  if (spec.kind == "mlp") return build_mlp(spec, data, meta);
  if (spec.kind == "ensemble") return build_ensemble(spec, data, meta, false);
  if (spec.kind == "ensemble_plus") return build_ensemble(spec, data, meta, true);
  if (spec.kind == "dropout") return build_dropout(spec, data, meta);
  if (spec.kind == "sgld") return build_sgld(spec, data, meta);
  if (spec.kind == "deep_kernel") return build_deep_kernel(spec, data, meta);
  return build_knn(spec, data, meta);
}

likelihood::ProbMatrix sample_probs(const PosteriorSampler& sampler, const Matrix& inputs,
                                    int num_models, std::uint64_t stream) {
  if (num_models < 1) throw UsageError("sample_probs: need at least one model");
  likelihood::ProbMatrix out(num_models);
  if (sampler.support_size() > 0) {
    // Finite-support samplers repeat members; tabulate each member once.
    std::unordered_map<std::uint64_t, Matrix> cache;
    for (int m = 0; m < num_models; ++m) {
      const std::uint64_t member =
          rng::derive(stream, {std::uint64_t(m)}) % sampler.support_size();
      auto it = cache.find(member);
      if (it == cache.end()) it = cache.emplace(member, sampler.model_probs(inputs, member)).first;
      out[m] = it->second;
    }
  } else {
    for (int m = 0; m < num_models; ++m)
      out[m] = sampler.model_probs(inputs, rng::derive(stream, {std::uint64_t(m)}));
  }
  return out;
}

void SgldConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DomainError("sgld: learning_rate must be positive");
  if (burn_in_steps < 0) throw DomainError("sgld: burn_in_steps must be nonnegative");
  if (thin_interval < 1) throw DomainError("sgld: thin_interval must be >= 1");
  if (num_snapshots < 1) throw DomainError("sgld: num_snapshots must be >= 1");
  if (!(prior_variance > 0.0)) throw DomainError("sgld: prior_variance must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw DomainError("sgld: momentum must lie in [0, 1)");
}

std::vector<Vector> sgld_sample(const Vector& init,
                                const std::function<Vector(const Vector&)>& grad_neg_log_lik,
                                const SgldConfig& config) {
  config.validate();
  if (!grad_neg_log_lik) throw UsageError("sgld: null gradient function");

  auto eng = rng::make_engine(config.seed);
  const double eps = config.learning_rate;
  const double m = config.momentum;
  Vector theta = init;
  Vector vel = Vector::Zero(init.size());
  const int total = config.burn_in_steps + config.thin_interval * config.num_snapshots;
  std::vector<Vector> snapshots;
  snapshots.reserve(config.num_snapshots);

  for (int step = 1; step <= total; ++step) {
    Vector grad_u = grad_neg_log_lik(theta);
    if (grad_u.size() != theta.size()) throw ShapeError("sgld: gradient length mismatch");
    grad_u += theta / config.prior_variance;
    if (m > 0.0) {
      // Noise variance eps*(1-m) keeps the stationary distribution of the
      // momentum chain aligned with the overdamped update below (for a
      // quadratic potential the two match to first order in eps).
      vel = m * vel - 0.5 * eps * grad_u +
            std::sqrt(eps * (1.0 - m)) * rng::gaussian_vector(static_cast<int>(theta.size()), eng);
      theta += vel;
    } else {
      theta += -0.5 * eps * grad_u +
               std::sqrt(eps) * rng::gaussian_vector(static_cast<int>(theta.size()), eng);
    }
    if (step > config.burn_in_steps && (step - config.burn_in_steps) % config.thin_interval == 0)
      snapshots.push_back(theta);
  }
  return snapshots;
}

Matrix gp_posterior_cov_direct(const Matrix& phi_train, const Matrix& phi_test, double noise) {
  if (phi_train.cols() != phi_test.cols())
    throw ShapeError("gp covariance: feature widths differ");
  if (!(noise > 0.0)) throw DomainError("gp covariance: noise must be positive");
  const Eigen::Index n = phi_train.rows();
  const Matrix k_train = phi_train * phi_train.transpose() +
                         noise * noise * Matrix::Identity(n, n);
  const Matrix k_cross = phi_test * phi_train.transpose();
  return phi_test * phi_test.transpose() -
         k_cross * k_train.ldlt().solve(k_cross.transpose());
}

Matrix gp_posterior_cov_woodbury(const Matrix& phi_train, const Matrix& phi_test, double noise) {
  if (phi_train.cols() != phi_test.cols())
    throw ShapeError("gp covariance: feature widths differ");
  if (!(noise > 0.0)) throw DomainError("gp covariance: noise must be positive");
  const Eigen::Index f = phi_train.cols();
  const Matrix gram = noise * noise * Matrix::Identity(f, f) + phi_train.transpose() * phi_train;
  return noise * noise * phi_test * gram.ldlt().solve(phi_test.transpose());
}

}  // namespace testbed::agents
