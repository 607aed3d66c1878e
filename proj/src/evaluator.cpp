#include "testbed/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include "testbed/likelihood.hpp"
#include "testbed/rng.hpp"

namespace testbed::eval {

namespace {

std::uint64_t tag(std::string_view s) { return rng::hash_string(s); }

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct RunningStats {
  double sum = 0.0;
  double sumsq = 0.0;
  long n = 0;

  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double stderr_of_mean() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = (sumsq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
    return std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  }
};

}  // namespace

void TestbedSweepConfig::validate() const {
  if (temperatures.empty() || train_sizes.empty() || taus.empty())
    throw UsageError("sweep: temperatures, train_sizes, and taus must be nonempty");
  for (double b : temperatures)
    if (!(b > 0.0)) throw DomainError("sweep: temperatures must be positive");
  for (int t : train_sizes)
    if (t < 1) throw DomainError("sweep: train sizes must be >= 1");
  for (int t : taus)
    if (t < 1) throw DomainError("sweep: taus must be >= 1");
  if (problems_per_cell < 1 || num_test_samples < 1 || num_models < 1)
    throw DomainError("sweep: J, N, M must all be >= 1");
  if (num_hyperplanes < 0) throw DomainError("sweep: num_hyperplanes must be >= 0");
  if (input_dim < 1 || num_classes < 2) throw ShapeError("sweep: bad generative dimensions");
  if (!(probit_clip > 0.0) || !(probit_clip < 0.5))
    throw DomainError("sweep: probit_clip must lie in (0, 0.5)");
  if (workers < 1) throw DomainError("sweep: workers must be >= 1");
}

void CellConfig::validate() const {
  if (tau < 1) throw DomainError("cell: tau must be >= 1");
  if (problems < 1 || test_samples < 1 || num_models < 1)
    throw DomainError("cell: J, N, M must all be >= 1");
  if (num_hyperplanes < 0) throw DomainError("cell: num_hyperplanes must be >= 0");
  if (!(probit_clip > 0.0) || !(probit_clip < 0.5))
    throw DomainError("cell: probit_clip must lie in (0, 0.5)");
}

EvalRecord run_cell_core(const ProblemSampler& problems, const AgentFactory& factory,
                         const CellConfig& config, std::uint64_t seed,
                         const std::string& agent_id) {
  config.validate();
  if (!problems || !factory) throw UsageError("run_cell: null problem sampler or agent factory");
  const auto start = std::chrono::steady_clock::now();
  const bool use_partition = config.tau >= config.estimator_switch_tau;

  // Problems, test draws, and hyperplanes depend only on the cell seed, so
  // every agent evaluated with the same seed faces the same benchmark;
  // training and posterior sampling mix in the agent id.
  const std::uint64_t agent_stream = rng::hash_string(agent_id);

  RunningStats stats;
  for (int j = 0; j < config.problems; ++j) {
    Problem problem = problems(rng::derive(seed, {tag("problem"), std::uint64_t(j)}));
    if (!problem.env) throw UsageError("run_cell: problem sampler returned no environment");

    agents::PosteriorSampler sampler = [&]() {
      try {
        return factory(problem.train, *problem.env,
                       rng::derive(seed, {tag("agent"), agent_stream, std::uint64_t(j)}));
      } catch (const std::exception& e) {
        throw UsageError("agent '" + agent_id + "' failed on problem j=" + std::to_string(j) +
                         " (cell seed " + std::to_string(seed) + "): " + e.what());
      }
    }();

    for (int t = 0; t < config.test_samples; ++t) {
      const gen::TauSample test = gen::sample_data(
          *problem.env, config.tau, rng::derive(seed, {tag("test"), std::uint64_t(j), std::uint64_t(t)}));
      const double lp_env = gen::env_log_likelihood(*problem.env, test);
      const likelihood::ProbMatrix probs = agents::sample_probs(
          sampler, test.inputs, config.num_models,
          rng::derive(seed, {tag("models"), agent_stream, std::uint64_t(j), std::uint64_t(t)}));
      double lp_hat;
      if (use_partition) {
        likelihood::PartitionConfig pc;
        pc.num_hyperplanes = config.num_hyperplanes;
        pc.seed = rng::derive(seed, {tag("hyperplanes"), std::uint64_t(j), std::uint64_t(t)});
        pc.probit_clip = config.probit_clip;
        lp_hat = likelihood::partition_log_likelihood(probs, test.labels, pc);
      } else {
        lp_hat = likelihood::mc_log_likelihood(probs, test.labels);
      }
      stats.add(lp_env - lp_hat);
    }
  }

  EvalRecord record;
  record.agent = agent_id;
  record.tau = config.tau;
  record.kl = stats.mean();
  record.stderr_ = stats.stderr_of_mean();
  record.count = stats.n;
  record.seconds = elapsed_seconds(start);
  record.seed = seed;
  return record;
}

EvalRecord run_cell(const agents::AgentSpec& spec, double beta, int train_size, int tau,
                    const TestbedSweepConfig& sweep, std::uint64_t seed) {
  gen::GenerativeConfig gcfg;
  gcfg.input_dim = sweep.input_dim;
  gcfg.num_classes = sweep.num_classes;
  gcfg.hidden = sweep.hidden;
  gcfg.temperature = beta;

  ProblemSampler problems = [gcfg, train_size](std::uint64_t s) {
    Problem p;
    p.env = std::make_unique<gen::Environment>(
        gen::sample_environment(gcfg, rng::derive(s, {tag("env")})));
    p.train = gen::sample_data(*p.env, train_size, rng::derive(s, {tag("data")}));
    return p;
  };

  agents::EnvMeta meta;
  meta.input_dim = sweep.input_dim;
  meta.num_classes = sweep.num_classes;
  meta.temperature = beta;
  meta.train_size = train_size;
  AgentFactory factory = [spec, meta](const gen::Dataset& data, const gen::DataProcess&,
                                      std::uint64_t s) {
    agents::AgentSpec seeded = spec;
    seeded.seed = s;
    return agents::train_agent(seeded, data, meta);
  };

  CellConfig cc;
  cc.tau = tau;
  cc.problems = sweep.problems_per_cell;
  cc.test_samples = sweep.num_test_samples;
  cc.num_models = sweep.num_models;
  cc.num_hyperplanes = sweep.num_hyperplanes;
  cc.estimator_switch_tau = sweep.estimator_switch_tau;
  cc.probit_clip = sweep.probit_clip;

  EvalRecord record = run_cell_core(problems, factory, cc, seed, spec.id);
  record.beta = beta;
  record.train_size = train_size;
  return record;
}

std::vector<EvalRecord> run_sweep(const TestbedSweepConfig& sweep,
                                  const std::vector<agents::AgentSpec>& agent_specs) {
  sweep.validate();
  if (agent_specs.empty()) throw UsageError("run_sweep: no agents given");
  for (const auto& spec : agent_specs) {
    auto errors = spec.validate();
    if (!errors.empty()) {
      std::string msg = "agent '" + spec.id + "':";
      for (const auto& e : errors) msg += "\n  " + e;
      throw UsageError(msg);
    }
  }

  struct Task {
    const agents::AgentSpec* spec;
    double beta;
    int train_size;
    int tau;
  };
  std::vector<Task> tasks;
  for (const auto& spec : agent_specs)
    for (double beta : sweep.temperatures)
      for (int t : sweep.train_sizes)
        for (int tau : sweep.taus) tasks.push_back({&spec, beta, t, tau});

  std::vector<EvalRecord> records(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      // Seeded by (beta, train size, tau), not task position or agent id, so
      // results do not depend on sweep composition or scheduling and every
      // agent in the sweep is scored on the same sampled problems.
      const std::uint64_t cell_seed =
          rng::derive(sweep.seed, {std::bit_cast<std::uint64_t>(task.beta),
                                   std::uint64_t(task.train_size), std::uint64_t(task.tau)});
      try {
        records[i] = run_cell(*task.spec, task.beta, task.train_size, task.tau, sweep, cell_seed);
      } catch (const std::exception&) {
        EvalRecord failed;
        failed.agent = task.spec->id;
        failed.beta = task.beta;
        failed.train_size = task.train_size;
        failed.tau = task.tau;
        failed.seed = cell_seed;
        failed.failed = true;
        records[i] = failed;
      }
    }
  };

  const int workers = std::min<int>(sweep.workers, static_cast<int>(tasks.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    if (a.agent != b.agent) return a.agent < b.agent;
    if (a.beta != b.beta) return a.beta < b.beta;
    if (a.train_size != b.train_size) return a.train_size < b.train_size;
    return a.tau < b.tau;
  });

  std::vector<EvalRecord> aggregates = aggregate_records(records);
  records.insert(records.end(), aggregates.begin(), aggregates.end());
  return records;
}

std::vector<EvalRecord> aggregate_records(const std::vector<EvalRecord>& cells) {
  // Aggregates carry no beta/train_size; only cell rows (which have both, or
  // at least a train_size in real mode) feed them. Failed cells are skipped.
  std::map<std::pair<std::string, int>, std::vector<const EvalRecord*>> groups;
  for (const auto& r : cells) {
    if (r.failed || (!r.beta && !r.train_size)) continue;
    groups[{r.agent, r.tau}].push_back(&r);
  }
  std::vector<EvalRecord> out;
  out.reserve(groups.size());
  for (const auto& [key, members] : groups) {
    EvalRecord agg;
    agg.agent = key.first;
    agg.tau = key.second;
    double sum = 0.0, sumsq_se = 0.0, seconds = 0.0;
    for (const EvalRecord* r : members) {
      sum += r->kl;
      sumsq_se += r->stderr_ * r->stderr_;
      agg.count += r->count;
      seconds += r->seconds;
    }
    const double c = static_cast<double>(members.size());
    agg.kl = sum / c;
    agg.stderr_ = std::sqrt(sumsq_se) / c;
    agg.seconds = seconds;
    agg.seed = 0;
    out.push_back(agg);
  }
  return out;
}

void RealEvalConfig::validate() const {
  if (tau < 1) throw DomainError("real eval: tau must be >= 1");
  if (num_blocks < 1 || num_models < 1) throw DomainError("real eval: N and M must be >= 1");
  if (num_hyperplanes < 0) throw DomainError("real eval: num_hyperplanes must be >= 0");
  if (num_classes != 0 && num_classes < 2)
    throw DomainError("real eval: num_classes must be 0 (infer) or >= 2");
  if (!(probit_clip > 0.0) || !(probit_clip < 0.5))
    throw DomainError("real eval: probit_clip must lie in (0, 0.5)");
}

EvalRecord evaluate_nll_real(const agents::AgentSpec& spec, const gen::Dataset& train,
                             const gen::Dataset& test, const RealEvalConfig& config,
                             std::uint64_t seed) {
  config.validate();
  if (train.size() < 1 || test.size() < 1) throw UsageError("real eval: empty split");
  if (train.inputs.cols() != test.inputs.cols())
    throw ShapeError("real eval: train and test widths differ");
  if (test.size() < config.tau) throw UsageError("real eval: test set smaller than tau");
  if (config.sampling == BlockSampling::kSequential &&
      static_cast<long>(config.num_blocks) * config.tau > test.size())
    throw UsageError("real eval: sequential blocks exceed the test set");

  int num_classes = config.num_classes;
  if (num_classes == 0) {
    num_classes = 2;
    for (Eigen::Index i = 0; i < train.labels.size(); ++i)
      num_classes = std::max(num_classes, train.labels(i) + 1);
    for (Eigen::Index i = 0; i < test.labels.size(); ++i)
      num_classes = std::max(num_classes, test.labels(i) + 1);
  }
  train.validate(num_classes);
  test.validate(num_classes);

  const auto start = std::chrono::steady_clock::now();
  agents::EnvMeta meta;
  meta.input_dim = static_cast<int>(train.inputs.cols());
  meta.num_classes = num_classes;
  meta.temperature = 1.0;
  meta.train_size = train.size();
  agents::AgentSpec seeded = spec;
  seeded.seed = rng::derive(seed, {tag("agent"), rng::hash_string(spec.id)});
  agents::PosteriorSampler sampler = agents::train_agent(seeded, train, meta);

  EvalRecord record = evaluate_nll_blocks(sampler, test, config, seed, spec.id, train.size());
  record.seconds = elapsed_seconds(start);
  return record;
}

EvalRecord evaluate_nll_blocks(const agents::PosteriorSampler& sampler, const gen::Dataset& test,
                               const RealEvalConfig& config, std::uint64_t seed,
                               const std::string& agent_id, int train_size) {
  config.validate();
  if (test.size() < 1) throw UsageError("real eval: empty test set");
  if (test.size() < config.tau) throw UsageError("real eval: test set smaller than tau");
  if (config.sampling == BlockSampling::kSequential &&
      static_cast<long>(config.num_blocks) * config.tau > test.size())
    throw UsageError("real eval: sequential blocks exceed the test set");
  test.validate(sampler.num_classes());

  const auto start = std::chrono::steady_clock::now();
  const bool use_partition = config.tau >= config.estimator_switch_tau;
  // Block draws depend only on the seed so agents sharing it score the same
  // test blocks; model sampling mixes in the agent id.
  const std::uint64_t agent_stream = rng::hash_string(agent_id);
  RunningStats stats;
  std::vector<int> indices(test.size());
  for (int b = 0; b < config.num_blocks; ++b) {
    gen::TauSample block;
    block.inputs.resize(config.tau, test.inputs.cols());
    block.labels.resize(config.tau);
    if (config.sampling == BlockSampling::kSequential) {
      for (int t = 0; t < config.tau; ++t) {
        const int idx = b * config.tau + t;
        block.inputs.row(t) = test.inputs.row(idx);
        block.labels(t) = test.labels(idx);
      }
    } else {
      // Partial Fisher-Yates: tau distinct test indices per block.
      auto eng = rng::make_engine(rng::derive(seed, {tag("block"), std::uint64_t(b)}));
      for (int i = 0; i < test.size(); ++i) indices[i] = i;
      for (int t = 0; t < config.tau; ++t) {
        std::uniform_int_distribution<int> pick(t, test.size() - 1);
        std::swap(indices[t], indices[pick(eng)]);
        block.inputs.row(t) = test.inputs.row(indices[t]);
        block.labels(t) = test.labels(indices[t]);
      }
    }

    const likelihood::ProbMatrix probs = agents::sample_probs(
        sampler, block.inputs, config.num_models,
        rng::derive(seed, {tag("models"), agent_stream, std::uint64_t(b)}));
    double lp_hat;
    if (use_partition) {
      likelihood::PartitionConfig pc;
      pc.num_hyperplanes = config.num_hyperplanes;
      pc.seed = rng::derive(seed, {tag("hyperplanes"), std::uint64_t(b)});
      pc.probit_clip = config.probit_clip;
      lp_hat = likelihood::partition_log_likelihood(probs, block.labels, pc);
    } else {
      lp_hat = likelihood::mc_log_likelihood(probs, block.labels);
    }
    stats.add(-lp_hat);
  }

  EvalRecord record;
  record.agent = agent_id;
  record.train_size = train_size;
  record.tau = config.tau;
  record.kl = stats.mean();
  record.stderr_ = stats.stderr_of_mean();
  record.count = stats.n;
  record.seconds = elapsed_seconds(start);
  record.seed = seed;
  return record;
}

}  // namespace testbed::eval
