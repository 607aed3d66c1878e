#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "testbed/agents.hpp"
#include "testbed/evaluator.hpp"

namespace testbed::cli {

struct RealConfig {
  std::string dataset_path;
  std::string label_column;  // empty: last column
  double test_ratio = 0.2;
  bool normalize = true;
  std::vector<int> taus = {1, 100};
  std::vector<int> train_sizes;  // empty: use the full training split
  int num_blocks = 1000;
  int num_models = 1000;
  int num_hyperplanes = 10;
  int estimator_switch_tau = 10;
  double probit_clip = 1e-6;
};

struct RunConfig {
  std::string mode = "testbed";  // "testbed" or "real"
  std::uint64_t seed = 0;
  int workers = 1;
  std::string output_dir = ".";
  std::string baseline;
  eval::TestbedSweepConfig sweep;
  std::vector<agents::AgentSpec> agents;
  RealConfig real;
};

// Carries every validation problem found, each message prefixed with the
// JSON path of the offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

}  // namespace testbed::cli
