#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "testbed/config.hpp"
#include "testbed/csv_dataset.hpp"
#include "testbed/evaluator.hpp"
#include "testbed/report.hpp"
#include "testbed/rng.hpp"

namespace fs = std::filesystem;
using namespace testbed;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw UsageError("failed writing '" + path.string() + "'");
}

void log_records(const std::vector<eval::EvalRecord>& records) {
  for (const auto& r : records) {
    std::cerr << "cell agent=" << r.agent;
    if (r.beta) std::cerr << " beta=" << cli::format_double(*r.beta);
    if (r.train_size) std::cerr << " T=" << *r.train_size;
    std::cerr << " tau=" << r.tau;
    if (r.failed)
      std::cerr << " FAILED";
    else
      std::cerr << " score=" << cli::format_double(r.kl) << " +- "
                << cli::format_double(r.stderr_) << " (" << cli::format_double(r.seconds) << "s)";
    std::cerr << "\n";
  }
}

std::vector<eval::EvalRecord> run_real_mode(const cli::RunConfig& config) {
  cli::CsvLoadOptions opt;
  opt.label_column = config.real.label_column;
  opt.test_ratio = config.real.test_ratio;
  opt.normalize = config.real.normalize;
  opt.seed = config.seed;
  const cli::DatasetSplit split = cli::load_csv_dataset(config.real.dataset_path, opt);

  std::vector<int> sizes = config.real.train_sizes;
  if (sizes.empty()) sizes = {split.train.size()};
  for (int t : sizes)
    if (t > split.train.size())
      throw UsageError("real: train size " + std::to_string(t) + " exceeds the training split (" +
                       std::to_string(split.train.size()) + " rows)");

  std::vector<eval::EvalRecord> records;
  for (const auto& spec : config.agents) {
    for (int t : sizes) {
      gen::Dataset train;
      train.inputs = split.train.inputs.topRows(t);
      train.labels = split.train.labels.head(t);
      for (int tau : config.real.taus) {
        eval::RealEvalConfig rc;
        rc.tau = tau;
        rc.num_blocks = config.real.num_blocks;
        rc.num_models = config.real.num_models;
        rc.num_hyperplanes = config.real.num_hyperplanes;
        rc.estimator_switch_tau = config.real.estimator_switch_tau;
        rc.num_classes = split.num_classes;
        rc.probit_clip = config.real.probit_clip;
        const std::uint64_t seed =
            rng::derive(config.seed, {std::uint64_t(t), std::uint64_t(tau)});
        try {
          records.push_back(eval::evaluate_nll_real(spec, train, split.test, rc, seed));
        } catch (const std::exception&) {
          eval::EvalRecord failed;
          failed.agent = spec.id;
          failed.train_size = t;
          failed.tau = tau;
          failed.seed = seed;
          failed.failed = true;
          records.push_back(failed);
        }
      }
    }
  }
  std::sort(records.begin(), records.end(), [](const eval::EvalRecord& a, const eval::EvalRecord& b) {
    if (a.agent != b.agent) return a.agent < b.agent;
    if (a.train_size != b.train_size) return a.train_size < b.train_size;
    return a.tau < b.tau;
  });
  const auto aggregates = eval::aggregate_records(records);
  records.insert(records.end(), aggregates.begin(), aggregates.end());
  return records;
}

struct RunOptions {
  std::string config_path;
  std::string output;
  int workers = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string baseline;
};

int cmd_run(const RunOptions& opt) {
  cli::RunConfig config = cli::parse_config(opt.config_path);
  if (!opt.output.empty()) config.output_dir = opt.output;
  if (opt.workers > 0) {
    config.workers = opt.workers;
    config.sweep.workers = opt.workers;
  }
  if (opt.seed_set) {
    config.seed = opt.seed;
    config.sweep.seed = opt.seed;
  }
  if (!opt.baseline.empty()) config.baseline = opt.baseline;

  fs::create_directories(config.output_dir);
  const std::vector<eval::EvalRecord> records =
      config.mode == "real" ? run_real_mode(config) : eval::run_sweep(config.sweep, config.agents);
  log_records(records);

  const fs::path records_path = fs::path(config.output_dir) / "records.csv";
  cli::write_records(records_path.string(), records);
  std::cout << "wrote " << records_path.string() << "\n";

  if (!config.baseline.empty()) {
    const cli::Report report = cli::make_report(records, config.baseline);
    const fs::path csv_path = fs::path(config.output_dir) / "leaderboard.csv";
    const fs::path json_path = fs::path(config.output_dir) / "leaderboard.json";
    write_text(csv_path, cli::report_to_csv(report));
    write_text(json_path, cli::report_to_json(report));
    std::cout << "wrote " << csv_path.string() << "\n";
    std::cout << "wrote " << json_path.string() << "\n";
  }
  return 0;
}

struct ReportOptions {
  std::string records_path;
  std::string baseline;
  std::string output = ".";
};

int cmd_report(const ReportOptions& opt) {
  const auto records = cli::read_records(opt.records_path);
  const cli::Report report = cli::make_report(records, opt.baseline);
  fs::create_directories(opt.output);
  const fs::path csv_path = fs::path(opt.output) / "leaderboard.csv";
  const fs::path json_path = fs::path(opt.output) / "leaderboard.json";
  write_text(csv_path, cli::report_to_csv(report));
  write_text(json_path, cli::report_to_json(report));
  std::cout << cli::report_to_csv(report);
  return 0;
}

struct CorrelateOptions {
  std::string testbed_path;
  std::string real_path;
  std::string output = ".";
  int n_bootstrap = 1000;
  std::uint64_t seed = 0;
  std::vector<int> low_data_sizes;
};

int cmd_correlate(const CorrelateOptions& opt) {
  const auto testbed_records = cli::read_records(opt.testbed_path);
  const auto real_records = cli::read_records(opt.real_path);
  cli::CorrelationConfig cfg;
  cfg.n_bootstrap = opt.n_bootstrap;
  cfg.seed = opt.seed;
  if (!opt.low_data_sizes.empty()) cfg.low_data_sizes = opt.low_data_sizes;
  const auto entries = cli::correlation_report(testbed_records, real_records, cfg);
  fs::create_directories(opt.output);
  write_text(fs::path(opt.output) / "correlation.csv", cli::correlation_to_csv(entries));
  write_text(fs::path(opt.output) / "correlation.json", cli::correlation_to_json(entries));
  std::cout << cli::correlation_to_csv(entries);
  return 0;
}

struct DatasetCheckOptions {
  std::string path;
  std::string label_column;
  double test_ratio = 0.2;
  std::uint64_t seed = 0;
  bool no_normalize = false;
};

int cmd_dataset_check(const DatasetCheckOptions& opt) {
  cli::CsvLoadOptions load;
  load.label_column = opt.label_column;
  load.test_ratio = opt.test_ratio;
  load.normalize = !opt.no_normalize;
  load.seed = opt.seed;
  const cli::DatasetSplit split = cli::load_csv_dataset(opt.path, load);
  std::cout << "dataset ok: " << split.train.size() + split.test.size() << " rows, "
            << split.feature_names.size() << " features, " << split.num_classes << " classes\n";
  std::cout << "split: " << split.train.size() << " train / " << split.test.size() << " test\n";
  std::cout << "classes:";
  for (const auto& c : split.class_names) std::cout << " " << c;
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evaluation harness for marginal and joint predictive distributions"};
  app.require_subcommand(1);

  RunOptions run_opt;
  auto* run = app.add_subcommand("run", "execute a sweep described by a JSON config");
  run->add_option("--config", run_opt.config_path, "JSON run config")->required();
  run->add_option("--output", run_opt.output, "output directory (overrides config)");
  run->add_option("--workers", run_opt.workers, "worker threads (overrides config)");
  auto* seed_opt = run->add_option("--seed", run_opt.seed, "master seed (overrides config)");
  run->add_option("--baseline", run_opt.baseline, "baseline agent id for the leaderboard");

  ReportOptions report_opt;
  auto* report = app.add_subcommand("report", "turn a records CSV into a leaderboard");
  report->add_option("records", report_opt.records_path, "records CSV")->required();
  report->add_option("--baseline", report_opt.baseline, "baseline agent id")->required();
  report->add_option("--output", report_opt.output, "output directory");

  CorrelateOptions corr_opt;
  auto* correlate = app.add_subcommand("correlate", "correlate two record sets");
  correlate->add_option("testbed", corr_opt.testbed_path, "testbed records CSV")->required();
  correlate->add_option("real", corr_opt.real_path, "real-data records CSV")->required();
  correlate->add_option("--output", corr_opt.output, "output directory");
  correlate->add_option("--bootstrap", corr_opt.n_bootstrap, "bootstrap resamples");
  correlate->add_option("--seed", corr_opt.seed, "bootstrap seed");
  correlate->add_option("--low-data-sizes", corr_opt.low_data_sizes,
                        "train sizes forming the low-data regime");

  DatasetCheckOptions ds_opt;
  auto* dataset = app.add_subcommand("dataset", "dataset utilities");
  dataset->require_subcommand(1);
  auto* check = dataset->add_subcommand("check", "parse and summarize a CSV dataset");
  check->add_option("path", ds_opt.path, "CSV file")->required();
  check->add_option("--label-column", ds_opt.label_column, "label column name (default: last)");
  check->add_option("--test-ratio", ds_opt.test_ratio, "held-out fraction");
  check->add_option("--seed", ds_opt.seed, "split seed");
  check->add_flag("--no-normalize", ds_opt.no_normalize, "skip feature standardization");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      run_opt.seed_set = seed_opt->count() > 0;
      return cmd_run(run_opt);
    }
    if (*report) return cmd_report(report_opt);
    if (*correlate) return cmd_correlate(corr_opt);
    if (*check) return cmd_dataset_check(ds_opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
