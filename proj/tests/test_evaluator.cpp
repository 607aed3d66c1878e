#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <set>
#include <vector>

#include "testbed/evaluator.hpp"
#include "testbed/generative.hpp"
#include "testbed/nn.hpp"
#include "testbed/rng.hpp"

using testbed::DomainError;
using testbed::IntVector;
using testbed::Matrix;
using testbed::ShapeError;
using testbed::UsageError;
using testbed::Vector;
namespace agents = testbed::agents;
namespace eval = testbed::eval;
namespace gen = testbed::gen;
namespace nn = testbed::nn;
namespace rng = testbed::rng;

namespace {

eval::ProblemSampler mlp_problems(int train_size) {
  return [train_size](std::uint64_t seed) {
    gen::GenerativeConfig cfg;
    cfg.input_dim = 2;
    cfg.num_classes = 2;
    cfg.hidden = {8};
    cfg.temperature = 0.1;
    eval::Problem p;
    p.env = std::make_unique<gen::Environment>(
        gen::sample_environment(cfg, rng::derive(seed, {1})));
    p.train = gen::sample_data(*p.env, train_size, rng::derive(seed, {2}));
    return p;
  };
}

// The agent that answers with the environment's own conditional distribution.
eval::AgentFactory perfect_factory() {
  return [](const gen::Dataset&, const gen::DataProcess& env, std::uint64_t) {
    return agents::PosteriorSampler(
        env.num_classes(), 1,
        [e = &env](const Matrix& x, std::uint64_t) { return e->class_probs(x); });
  };
}

// Deterministic coin problems: heads-coin with probability 2/3, else tails.
eval::ProblemSampler coin_problems() {
  return [](std::uint64_t seed) {
    auto eng = rng::make_engine(seed);
    std::bernoulli_distribution heads(2.0 / 3.0);
    eval::Problem p;
    p.env = std::make_unique<gen::CoinEnvironment>(heads(eng) ? 1.0 : 0.0);
    p.train = gen::sample_data(*p.env, 1, rng::derive(seed, {3}));
    return p;
  };
}

Matrix constant_coin_table(Eigen::Index rows, double p_heads) {
  Matrix t(rows, 2);
  t.col(0).setConstant(1.0 - p_heads);
  t.col(1).setConstant(p_heads);
  return t;
}

// Belief 1: a single i.i.d. coin with p_heads = 2/3.
eval::AgentFactory single_belief_factory() {
  return [](const gen::Dataset&, const gen::DataProcess&, std::uint64_t) {
    return agents::PosteriorSampler(2, 1, [](const Matrix& x, std::uint64_t) {
      return constant_coin_table(x.rows(), 2.0 / 3.0);
    });
  };
}

// Belief 2: a 2/3 : 1/3 mixture of the deterministic heads and tails coins.
eval::AgentFactory mixture_belief_factory() {
  return [](const gen::Dataset&, const gen::DataProcess&, std::uint64_t) {
    return agents::PosteriorSampler(2, 0, [](const Matrix& x, std::uint64_t idx) {
      auto eng = rng::make_engine(idx);
      std::bernoulli_distribution heads(2.0 / 3.0);
      return constant_coin_table(x.rows(), heads(eng) ? 1.0 : 0.0);
    });
  };
}

eval::CellConfig small_cell(int tau) {
  eval::CellConfig cc;
  cc.tau = tau;
  cc.problems = 3;
  cc.test_samples = 50;
  cc.num_models = 8;
  cc.num_hyperplanes = 5;
  return cc;
}

gen::Dataset threshold_data(int n, std::uint64_t seed) {
  auto eng = rng::make_engine(seed);
  gen::Dataset d;
  d.inputs = rng::gaussian_matrix(n, 2, eng);
  d.labels.resize(n);
  for (int i = 0; i < n; ++i) d.labels(i) = d.inputs(i, 0) + d.inputs(i, 1) > 0.0 ? 1 : 0;
  return d;
}

bool same_ignoring_seconds(const eval::EvalRecord& a, const eval::EvalRecord& b) {
  return a.agent == b.agent && a.beta == b.beta && a.train_size == b.train_size &&
         a.tau == b.tau && a.kl == b.kl && a.stderr_ == b.stderr_ && a.count == b.count &&
         a.seed == b.seed && a.failed == b.failed;
}

}  // namespace

TEST_CASE("a perfect agent scores zero KL at every tau") {
  for (int tau : {1, 5, 12}) {
    CAPTURE(tau);
    eval::EvalRecord r =
        eval::run_cell_core(mlp_problems(4), perfect_factory(), small_cell(tau), 42, "perfect");
    CHECK(r.count == 150);
    CHECK(std::abs(r.kl) <= 3.0 * r.stderr_ + 1e-12);
  }
}

TEST_CASE("coin beliefs with identical marginals separate only in the joint") {
  eval::CellConfig cc;
  cc.problems = 4;
  cc.test_samples = 300;
  cc.num_models = 400;
  cc.num_hyperplanes = 7;

  cc.tau = 1;
  eval::EvalRecord single1 =
      eval::run_cell_core(coin_problems(), single_belief_factory(), cc, 7, "single");
  eval::EvalRecord mixture1 =
      eval::run_cell_core(coin_problems(), mixture_belief_factory(), cc, 7, "mixture");
  CHECK(std::abs(single1.kl - mixture1.kl) <=
        3.0 * (single1.stderr_ + mixture1.stderr_) + 0.02);

  cc.tau = 10;  // at the estimator switch: the partition handles the joint
  eval::EvalRecord single10 =
      eval::run_cell_core(coin_problems(), single_belief_factory(), cc, 7, "single");
  eval::EvalRecord mixture10 =
      eval::run_cell_core(coin_problems(), mixture_belief_factory(), cc, 7, "mixture");
  CHECK(std::isfinite(mixture10.kl));
  CHECK(single10.kl - 3.0 * single10.stderr_ > mixture10.kl + 3.0 * mixture10.stderr_);
  CHECK(single10.kl > 5.0 * mixture10.kl);
  // The single belief factorizes, so its joint loss is tau times its marginal.
  CHECK(single10.kl == doctest::Approx(10.0 * single1.kl).epsilon(0.05));
}

TEST_CASE("run_cell_core reports problem index and agent id on failure") {
  eval::AgentFactory broken = [](const gen::Dataset&, const gen::DataProcess&,
                                 std::uint64_t) -> agents::PosteriorSampler {
    throw DomainError("synthetic breakage");
  };
  CHECK_THROWS_WITH_AS(
      eval::run_cell_core(mlp_problems(4), broken, small_cell(1), 3, "fragile"),
      doctest::Contains("agent 'fragile' failed on problem j=0"), UsageError);
}

TEST_CASE("run_cell_core validates callbacks and config") {
  CHECK_THROWS_AS(eval::run_cell_core(nullptr, perfect_factory(), small_cell(1), 0, "x"),
                  UsageError);
  CHECK_THROWS_AS(eval::run_cell_core(mlp_problems(4), nullptr, small_cell(1), 0, "x"),
                  UsageError);
  eval::CellConfig bad = small_cell(0);
  CHECK_THROWS_AS(eval::run_cell_core(mlp_problems(4), perfect_factory(), bad, 0, "x"),
                  DomainError);
  bad = small_cell(1);
  bad.probit_clip = 0.5;
  CHECK_THROWS_AS(eval::run_cell_core(mlp_problems(4), perfect_factory(), bad, 0, "x"),
                  DomainError);
}

TEST_CASE("standard error shrinks like the square root of the sample count") {
  agents::AgentSpec spec;
  spec.id = "knn";
  spec.kind = "knn";
  spec.params["k"] = 3;

  eval::TestbedSweepConfig sweep;
  sweep.hidden = {8};
  sweep.problems_per_cell = 2;
  sweep.num_models = 20;
  sweep.seed = 31;

  sweep.num_test_samples = 200;
  eval::EvalRecord narrow = eval::run_cell(spec, 0.1, 10, 1, sweep, 5);
  sweep.num_test_samples = 800;
  eval::EvalRecord wide = eval::run_cell(spec, 0.1, 10, 1, sweep, 5);
  CHECK(narrow.count == 400);
  CHECK(wide.count == 1600);
  const double ratio = wide.stderr_ / narrow.stderr_;
  CHECK(ratio > 0.35);
  CHECK(ratio < 0.65);
}

TEST_CASE("aggregate_records averages cells and skips failures") {
  eval::EvalRecord a1;
  a1.agent = "a";
  a1.beta = 0.1;
  a1.train_size = 1;
  a1.tau = 1;
  a1.kl = 1.0;
  a1.stderr_ = 0.1;
  a1.count = 100;
  a1.seconds = 2.0;
  eval::EvalRecord a2 = a1;
  a2.beta = 0.5;
  a2.kl = 3.0;
  a2.stderr_ = 0.2;
  a2.seconds = 1.0;
  eval::EvalRecord failed = a1;
  failed.kl = 999.0;
  failed.failed = true;
  eval::EvalRecord stale_aggregate;  // no beta, no train size: not a cell
  stale_aggregate.agent = "a";
  stale_aggregate.tau = 1;
  stale_aggregate.kl = 777.0;
  eval::EvalRecord b = a1;
  b.agent = "b";
  b.tau = 2;

  auto aggs = eval::aggregate_records({a1, a2, failed, stale_aggregate, b});
  REQUIRE(aggs.size() == 2);
  CHECK(aggs[0].agent == "a");
  CHECK(aggs[0].tau == 1);
  CHECK(aggs[0].kl == (1.0 + 3.0) / 2.0);
  CHECK(aggs[0].stderr_ == doctest::Approx(std::sqrt(0.01 + 0.04) / 2.0).epsilon(1e-15));
  CHECK(aggs[0].count == 200);
  CHECK(aggs[0].seconds == 3.0);
  CHECK(!aggs[0].beta);
  CHECK(!aggs[0].train_size);
  CHECK(aggs[1].agent == "b");
  CHECK(aggs[1].kl == 1.0);
}

TEST_CASE("run_sweep output is canonical and worker-invariant") {
  agents::AgentSpec knn;
  knn.id = "knn";
  knn.kind = "knn";
  agents::AgentSpec mlp;
  mlp.id = "mlp";
  mlp.kind = "mlp";
  mlp.params["steps"] = 30;
  mlp.opts["hidden"] = "4";

  eval::TestbedSweepConfig sweep;
  sweep.temperatures = {0.1};
  sweep.train_sizes = {3, 7};
  sweep.taus = {1, 12};
  sweep.problems_per_cell = 2;
  sweep.num_test_samples = 25;
  sweep.num_models = 30;
  sweep.num_hyperplanes = 5;
  sweep.hidden = {8};
  sweep.seed = 99;

  sweep.workers = 1;
  auto serial = eval::run_sweep(sweep, {knn, mlp});
  sweep.workers = 3;
  auto parallel = eval::run_sweep(sweep, {mlp, knn});  // order must not matter

  REQUIRE(serial.size() == 8 + 4);  // 2 agents x 1 beta x 2 T x 2 tau, plus aggregates
  REQUIRE(parallel.size() == serial.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CAPTURE(i);
    CHECK(same_ignoring_seconds(serial[i], parallel[i]));
  }

  // Cell rows are sorted by agent, beta, train size, tau; aggregates follow.
  for (int i = 0; i < 8; ++i) {
    CHECK(serial[i].beta.has_value());
    CHECK(serial[i].train_size.has_value());
  }
  CHECK(serial[0].agent == "knn");
  CHECK(serial[4].agent == "mlp");
  CHECK(*serial[0].train_size == 3);
  CHECK(serial[0].tau == 1);
  CHECK(serial[1].tau == 12);
  for (int i = 8; i < 12; ++i) {
    CHECK(!serial[i].beta.has_value());
    CHECK(serial[i].count == 2 * 2 * 25);  // two cells of J x N samples each
  }

  // Each aggregate is the mean of its two cells.
  CHECK(serial[8].agent == "knn");
  CHECK(serial[8].tau == 1);
  CHECK(serial[8].kl == (serial[0].kl + serial[2].kl) / 2.0);
}

TEST_CASE("run_sweep isolates failing cells instead of aborting") {
  agents::AgentSpec knn;
  knn.id = "knn";
  knn.kind = "knn";
  agents::AgentSpec doomed;
  doomed.id = "doomed";
  doomed.kind = "mlp";
  doomed.opts["hidden"] = "4";
  doomed.params["steps"] = 5;
  doomed.params["learning_rate"] = 1e308;  // valid but guaranteed to overflow

  eval::TestbedSweepConfig sweep;
  sweep.temperatures = {0.1};
  sweep.train_sizes = {4};
  sweep.taus = {1};
  sweep.problems_per_cell = 1;
  sweep.num_test_samples = 10;
  sweep.num_models = 5;
  sweep.hidden = {8};
  sweep.seed = 17;

  auto records = eval::run_sweep(sweep, {knn, doomed});
  REQUIRE(records.size() == 3);  // two cells plus the surviving knn aggregate
  CHECK(records[0].agent == "doomed");
  CHECK(records[0].failed);
  CHECK(records[0].count == 0);
  CHECK(records[0].beta == 0.1);
  CHECK(records[1].agent == "knn");
  CHECK(!records[1].failed);
  CHECK(records[2].agent == "knn");
  CHECK(!records[2].beta.has_value());
}

TEST_CASE("run_sweep validates its inputs up front") {
  eval::TestbedSweepConfig sweep;
  CHECK_THROWS_AS(eval::run_sweep(sweep, {}), UsageError);

  agents::AgentSpec bad;
  bad.id = "x";
  bad.kind = "bbb";
  CHECK_THROWS_AS(eval::run_sweep(sweep, {bad}), UsageError);

  sweep.temperatures = {};
  agents::AgentSpec knn;
  knn.id = "knn";
  knn.kind = "knn";
  CHECK_THROWS_AS(eval::run_sweep(sweep, {knn}), UsageError);
  sweep = {};
  sweep.workers = 0;
  CHECK_THROWS_AS(eval::run_sweep(sweep, {knn}), DomainError);
  sweep = {};
  sweep.probit_clip = 0.5;
  CHECK_THROWS_AS(eval::run_sweep(sweep, {knn}), DomainError);
}

TEST_CASE("real-data NLL with sequential full coverage equals naive cross-entropy") {
  gen::Dataset train = threshold_data(30, 1);
  gen::Dataset test = threshold_data(20, 2);
  agents::AgentSpec spec;
  spec.id = "knn";
  spec.kind = "knn";
  spec.params["k"] = 5;

  eval::RealEvalConfig cfg;
  cfg.tau = 1;
  cfg.num_blocks = 20;
  cfg.num_models = 50;
  cfg.sampling = eval::BlockSampling::kSequential;
  eval::EvalRecord r = eval::evaluate_nll_real(spec, train, test, cfg, 9);

  agents::EnvMeta meta;
  meta.input_dim = 2;
  meta.num_classes = 2;
  meta.train_size = 30;
  agents::PosteriorSampler sampler = agents::train_agent(spec, train, meta);
  Matrix probs = sampler.model_probs(test.inputs, 0);
  double naive = 0.0;
  for (int i = 0; i < test.size(); ++i) naive -= std::log(probs(i, test.labels(i)));
  naive /= test.size();

  CHECK(r.kl == doctest::Approx(naive).epsilon(1e-9));
  CHECK(r.count == 20);
  CHECK(r.tau == 1);
  CHECK(*r.train_size == 30);
  CHECK(!r.beta.has_value());
}

TEST_CASE("an agent with uniform beliefs pays log K per step") {
  gen::Dataset train;
  train.inputs = Matrix::Zero(9, 1);
  train.labels.resize(9);
  train.labels << 0, 1, 2, 0, 1, 2, 0, 1, 2;
  for (int i = 0; i < 9; ++i) train.inputs(i, 0) = i;
  gen::Dataset test;
  test.inputs = Matrix::Zero(20, 1);
  test.labels.resize(20);
  for (int i = 0; i < 20; ++i) {
    test.inputs(i, 0) = 100 + i;
    test.labels(i) = i % 3;
  }

  agents::AgentSpec spec;
  spec.id = "knn";
  spec.kind = "knn";
  spec.params["k"] = 9;  // every neighbor votes: exactly uniform over 3 classes

  eval::RealEvalConfig cfg;
  cfg.tau = 1;
  cfg.num_blocks = 20;
  cfg.num_models = 10;
  cfg.sampling = eval::BlockSampling::kSequential;
  eval::EvalRecord r1 = eval::evaluate_nll_real(spec, train, test, cfg, 3);
  CHECK(r1.kl == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(r1.stderr_ <= 1e-12);

  cfg.tau = 2;
  cfg.num_blocks = 10;
  eval::EvalRecord r2 = eval::evaluate_nll_real(spec, train, test, cfg, 3);
  CHECK(r2.kl == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("block sampling draws distinct rows randomly or in sequence") {
  gen::Dataset test;
  test.inputs.resize(20, 1);
  test.labels.resize(20);
  for (int i = 0; i < 20; ++i) {
    test.inputs(i, 0) = i;
    test.labels(i) = i % 2;
  }

  auto rows_ok = std::make_shared<bool>(true);
  auto first_col = std::make_shared<std::vector<double>>();
  agents::PosteriorSampler spy(2, 1, [rows_ok, first_col](const Matrix& x, std::uint64_t) {
    std::set<double> seen;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      if (x(r, 0) < 0.0 || x(r, 0) > 19.0 || !seen.insert(x(r, 0)).second) *rows_ok = false;
      first_col->push_back(x(r, 0));
    }
    return Matrix::Constant(x.rows(), 2, 0.5).eval();
  });

  eval::RealEvalConfig cfg;
  cfg.tau = 5;
  cfg.num_blocks = 30;
  cfg.num_models = 1;  // one model per block keeps the spy trace readable
  cfg.sampling = eval::BlockSampling::kRandom;
  eval::evaluate_nll_blocks(spy, test, cfg, 11, "spy", 0);
  CHECK(*rows_ok);
  CHECK(first_col->size() == 30u * 5u);

  first_col->clear();
  cfg.tau = 2;
  cfg.num_blocks = 10;
  cfg.sampling = eval::BlockSampling::kSequential;
  eval::evaluate_nll_blocks(spy, test, cfg, 11, "spy", 0);
  REQUIRE(first_col->size() == 20);
  for (int i = 0; i < 20; ++i) CHECK((*first_col)[i] == static_cast<double>(i));
}

TEST_CASE("real-data evaluation validates shapes and block limits") {
  gen::Dataset train = threshold_data(12, 4);
  gen::Dataset test = threshold_data(6, 5);
  agents::AgentSpec spec;
  spec.id = "knn";
  spec.kind = "knn";

  eval::RealEvalConfig cfg;
  cfg.tau = 7;  // larger than the test set
  cfg.num_blocks = 1;
  CHECK_THROWS_AS(eval::evaluate_nll_real(spec, train, test, cfg, 0), UsageError);

  cfg.tau = 2;
  cfg.num_blocks = 4;  // 8 sequential rows > 6 available
  cfg.sampling = eval::BlockSampling::kSequential;
  CHECK_THROWS_AS(eval::evaluate_nll_real(spec, train, test, cfg, 0), UsageError);

  cfg = {};
  cfg.tau = 0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = {};
  cfg.num_classes = 1;
  CHECK_THROWS_AS(cfg.validate(), DomainError);

  gen::Dataset narrow = train;
  narrow.inputs = Matrix::Zero(12, 3);
  eval::RealEvalConfig ok;
  CHECK_THROWS_AS(eval::evaluate_nll_real(spec, narrow, test, ok, 0), ShapeError);
}
