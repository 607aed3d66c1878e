#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "testbed/evaluator.hpp"

namespace testbed::cli {

// Records CSV: versioned comment header, then one row per record with
// columns agent,beta,train_size,tau,kl_or_nll,stderr,count,seconds,seed,failed.
// Doubles print as shortest round-trip decimals so parsing back is exact.
std::string records_to_csv(const std::vector<eval::EvalRecord>& records);
std::vector<eval::EvalRecord> records_from_csv(const std::string& text);
void write_records(const std::string& path, const std::vector<eval::EvalRecord>& records);
std::vector<eval::EvalRecord> read_records(const std::string& path);

struct LeaderboardRow {
  std::string agent;
  int tau = 0;
  double kl = 0.0;
  double stderr_ = 0.0;
  double normalized = 0.0;
  long count = 0;
};

struct Report {
  std::vector<LeaderboardRow> rows;
  std::string baseline;
};

// Aggregates cell records per (agent, τ) and normalizes by the baseline
// agent's aggregate at the same τ.
Report make_report(const std::vector<eval::EvalRecord>& records, const std::string& baseline);
std::string report_to_csv(const Report& report);
std::string report_to_json(const Report& report);

struct CorrelationEntry {
  std::string family;    // agent id prefix before any '[' suffix
  std::string regime;    // "low" or "high"
  double r = 0.0;
  double lo = 0.0;       // bootstrap 5th percentile
  double hi = 0.0;       // bootstrap 95th percentile
  int pairs = 0;
};

struct CorrelationConfig {
  int n_bootstrap = 1000;
  double lo_percentile = 5.0;
  double hi_percentile = 95.0;
  std::vector<int> low_data_sizes = {1, 10};
  std::uint64_t seed = 0;
};

double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Pairs testbed and real-data aggregate scores per agent id, groups by agent
// family, and reports Pearson r with percentile-bootstrap bounds per data
// regime.
std::vector<CorrelationEntry> correlation_report(const std::vector<eval::EvalRecord>& testbed,
                                                 const std::vector<eval::EvalRecord>& real,
                                                 const CorrelationConfig& config);
std::string correlation_to_csv(const std::vector<CorrelationEntry>& entries);
std::string correlation_to_json(const std::vector<CorrelationEntry>& entries);

std::string format_double(double v);

}  // namespace testbed::cli
