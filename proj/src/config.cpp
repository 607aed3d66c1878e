#include "testbed/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "testbed/report.hpp"
#include "testbed/rng.hpp"

namespace testbed::cli {

using nlohmann::json;

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::string msg = "config validation failed:";
  for (const auto& e : errors) msg += "\n  " + e;
  return msg;
}

// Collects every problem instead of stopping at the first, so one run of the
// tool reports all config mistakes at once.
struct Walker {
  std::vector<std::string> errors;

  void err(const std::string& path, const std::string& msg) {
    errors.push_back(path + ": " + msg);
  }

  void check_keys(const json& obj, const std::string& path,
                  std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
      if (std::find_if(allowed.begin(), allowed.end(),
                       [&](const char* a) { return key == a; }) == allowed.end())
        err(path + "." + key, "unknown key");
    }
  }

  bool get_string(const json& obj, const std::string& path, const char* key, std::string& out,
                  bool required = false) {
    if (!obj.contains(key)) {
      if (required) err(path + "." + key, "missing required key");
      return false;
    }
    if (!obj[key].is_string()) {
      err(path + "." + key, "expected a string");
      return false;
    }
    out = obj[key].get<std::string>();
    return true;
  }

  bool get_bool(const json& obj, const std::string& path, const char* key, bool& out) {
    if (!obj.contains(key)) return false;
    if (!obj[key].is_boolean()) {
      err(path + "." + key, "expected a boolean");
      return false;
    }
    out = obj[key].get<bool>();
    return true;
  }

  bool get_double(const json& obj, const std::string& path, const char* key, double& out,
                  double lo, double hi) {
    if (!obj.contains(key)) return false;
    if (!obj[key].is_number()) {
      err(path + "." + key, "expected a number");
      return false;
    }
    const double v = obj[key].get<double>();
    if (!(v >= lo) || !(v <= hi)) {
      err(path + "." + key, "value " + format_double(v) + " outside [" + format_double(lo) +
                                ", " + format_double(hi) + "]");
      return false;
    }
    out = v;
    return true;
  }

  bool get_int(const json& obj, const std::string& path, const char* key, int& out, int lo,
               int hi = std::numeric_limits<int>::max()) {
    if (!obj.contains(key)) return false;
    if (!obj[key].is_number_integer()) {
      err(path + "." + key, "expected an integer");
      return false;
    }
    const long v = obj[key].get<long>();
    if (v < lo || v > hi) {
      err(path + "." + key, "value " + std::to_string(v) + " outside [" + std::to_string(lo) +
                                ", " + std::to_string(hi) + "]");
      return false;
    }
    out = static_cast<int>(v);
    return true;
  }

  bool get_u64(const json& obj, const std::string& path, const char* key, std::uint64_t& out) {
    if (!obj.contains(key)) return false;
    if (!obj[key].is_number_unsigned() && !obj[key].is_number_integer()) {
      err(path + "." + key, "expected a nonnegative integer");
      return false;
    }
    if (obj[key].is_number_integer() && obj[key].get<long long>() < 0) {
      err(path + "." + key, "expected a nonnegative integer");
      return false;
    }
    out = obj[key].get<std::uint64_t>();
    return true;
  }

  bool get_int_list(const json& obj, const std::string& path, const char* key,
                    std::vector<int>& out, int lo) {
    if (!obj.contains(key)) return false;
    if (!obj[key].is_array() || obj[key].empty()) {
      err(path + "." + key, "expected a nonempty array of integers");
      return false;
    }
    std::vector<int> values;
    for (std::size_t i = 0; i < obj[key].size(); ++i) {
      const auto& v = obj[key][i];
      if (!v.is_number_integer() || v.get<long>() < lo) {
        err(path + "." + key + "[" + std::to_string(i) + "]",
            "expected an integer >= " + std::to_string(lo));
        return false;
      }
      values.push_back(v.get<int>());
    }
    out = std::move(values);
    return true;
  }

  bool get_double_list(const json& obj, const std::string& path, const char* key,
                       std::vector<double>& out, bool positive) {
    if (!obj.contains(key)) return false;
    if (!obj[key].is_array() || obj[key].empty()) {
      err(path + "." + key, "expected a nonempty array of numbers");
      return false;
    }
    std::vector<double> values;
    for (std::size_t i = 0; i < obj[key].size(); ++i) {
      const auto& v = obj[key][i];
      if (!v.is_number() || (positive && !(v.get<double>() > 0.0))) {
        err(path + "." + key + "[" + std::to_string(i) + "]",
            positive ? "expected a positive number" : "expected a number");
        return false;
      }
      values.push_back(v.get<double>());
    }
    out = std::move(values);
    return true;
  }
};

void parse_sweep(Walker& w, const json& obj, const std::string& path,
                 eval::TestbedSweepConfig& sweep) {
  if (!obj.is_object()) {
    w.err(path, "expected an object");
    return;
  }
  w.check_keys(obj, path,
               {"temperatures", "train_sizes", "taus", "problems_per_cell", "num_test_samples",
                "num_models", "num_hyperplanes", "estimator_switch_tau", "input_dim",
                "num_classes", "hidden", "probit_clip"});
  w.get_double_list(obj, path, "temperatures", sweep.temperatures, true);
  w.get_int_list(obj, path, "train_sizes", sweep.train_sizes, 1);
  w.get_int_list(obj, path, "taus", sweep.taus, 1);
  w.get_int(obj, path, "problems_per_cell", sweep.problems_per_cell, 1);
  w.get_int(obj, path, "num_test_samples", sweep.num_test_samples, 1);
  w.get_int(obj, path, "num_models", sweep.num_models, 1);
  w.get_int(obj, path, "num_hyperplanes", sweep.num_hyperplanes, 0, 63);
  w.get_int(obj, path, "estimator_switch_tau", sweep.estimator_switch_tau, 1);
  w.get_int(obj, path, "input_dim", sweep.input_dim, 1);
  w.get_int(obj, path, "num_classes", sweep.num_classes, 2);
  w.get_int_list(obj, path, "hidden", sweep.hidden, 1);
  w.get_double(obj, path, "probit_clip", sweep.probit_clip, 1e-300, 0.499);
}

void parse_real(Walker& w, const json& obj, const std::string& path, RealConfig& real) {
  if (!obj.is_object()) {
    w.err(path, "expected an object");
    return;
  }
  w.check_keys(obj, path,
               {"dataset", "label_column", "test_ratio", "normalize", "taus", "train_sizes",
                "num_blocks", "num_models", "num_hyperplanes", "estimator_switch_tau",
                "probit_clip"});
  w.get_string(obj, path, "dataset", real.dataset_path, true);
  w.get_string(obj, path, "label_column", real.label_column);
  w.get_double(obj, path, "test_ratio", real.test_ratio, 0.01, 0.99);
  w.get_bool(obj, path, "normalize", real.normalize);
  w.get_int_list(obj, path, "taus", real.taus, 1);
  w.get_int_list(obj, path, "train_sizes", real.train_sizes, 1);
  w.get_int(obj, path, "num_blocks", real.num_blocks, 1);
  w.get_int(obj, path, "num_models", real.num_models, 1);
  w.get_int(obj, path, "num_hyperplanes", real.num_hyperplanes, 0, 63);
  w.get_int(obj, path, "estimator_switch_tau", real.estimator_switch_tau, 1);
  w.get_double(obj, path, "probit_clip", real.probit_clip, 1e-300, 0.499);
  if (!real.dataset_path.empty() && !std::filesystem::exists(real.dataset_path))
    w.err(path + ".dataset", "file '" + real.dataset_path + "' does not exist");
}

// Joined with ';' because agent ids end up as bare fields in the records CSV.
std::string grid_suffix(const std::vector<std::pair<std::string, double>>& assignment) {
  std::string s = "[";
  bool first = true;
  for (const auto& [key, value] : assignment) {
    if (!first) s += ";";
    s += key + "=" + format_double(value);
    first = false;
  }
  return s + "]";
}

void parse_agents(Walker& w, const json& arr, const std::string& path, std::uint64_t master_seed,
                  std::vector<agents::AgentSpec>& out) {
  if (!arr.is_array() || arr.empty()) {
    w.err(path, "expected a nonempty array of agent entries");
    return;
  }
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string apath = path + "[" + std::to_string(i) + "]";
    const json& entry = arr[i];
    if (!entry.is_object()) {
      w.err(apath, "expected an object");
      continue;
    }
    w.check_keys(entry, apath, {"id", "kind", "seed", "params", "opts", "grid"});

    agents::AgentSpec base;
    if (!w.get_string(entry, apath, "kind", base.kind, true)) continue;
    base.id = base.kind;
    w.get_string(entry, apath, "id", base.id);
    base.seed = rng::derive(master_seed, {rng::hash_string(base.id)});
    w.get_u64(entry, apath, "seed", base.seed);

    if (entry.contains("params")) {
      if (!entry["params"].is_object()) {
        w.err(apath + ".params", "expected an object of numbers");
      } else {
        for (const auto& [key, value] : entry["params"].items()) {
          if (!value.is_number()) {
            w.err(apath + ".params." + key, "expected a number");
            continue;
          }
          base.params[key] = value.get<double>();
        }
      }
    }
    if (entry.contains("opts")) {
      if (!entry["opts"].is_object()) {
        w.err(apath + ".opts", "expected an object of strings");
      } else {
        for (const auto& [key, value] : entry["opts"].items()) {
          if (!value.is_string()) {
            w.err(apath + ".opts." + key, "expected a string");
            continue;
          }
          base.opts[key] = value.get<std::string>();
        }
      }
    }

    // A grid entry expands into one agent per cartesian point, with the
    // assignment appended to the id so records stay distinguishable.
    std::vector<std::pair<std::string, std::vector<double>>> grid;
    if (entry.contains("grid")) {
      if (!entry["grid"].is_object() || entry["grid"].empty()) {
        w.err(apath + ".grid", "expected a nonempty object of number arrays");
      } else {
        for (const auto& [key, value] : entry["grid"].items()) {
          if (!value.is_array() || value.empty()) {
            w.err(apath + ".grid." + key, "expected a nonempty array of numbers");
            continue;
          }
          std::vector<double> values;
          for (const auto& v : value) {
            if (!v.is_number()) {
              w.err(apath + ".grid." + key, "expected numbers only");
              values.clear();
              break;
            }
            values.push_back(v.get<double>());
          }
          if (!values.empty()) grid.emplace_back(key, std::move(values));
        }
      }
    }

    if (grid.empty()) {
      for (const auto& e : base.validate()) w.err(apath, e);
      out.push_back(std::move(base));
      continue;
    }

    std::vector<std::vector<std::pair<std::string, double>>> assignments = {{}};
    for (const auto& [key, values] : grid) {
      std::vector<std::vector<std::pair<std::string, double>>> next;
      for (const auto& partial : assignments)
        for (double v : values) {
          auto extended = partial;
          extended.emplace_back(key, v);
          next.push_back(std::move(extended));
        }
      assignments = std::move(next);
    }
    for (const auto& assignment : assignments) {
      agents::AgentSpec spec = base;
      for (const auto& [key, value] : assignment) spec.params[key] = value;
      spec.id = base.id + grid_suffix(assignment);
      spec.seed = rng::derive(master_seed, {rng::hash_string(spec.id)});
      for (const auto& e : spec.validate()) w.err(apath + " (" + spec.id + ")", e);
      out.push_back(std::move(spec));
    }
  }

  std::set<std::string> seen;
  for (const auto& spec : out) {
    if (!seen.insert(spec.id).second) w.err(path, "duplicate agent id '" + spec.id + "'");
    if (spec.id.find_first_of(",\"\n\r") != std::string::npos)
      w.err(path, "agent id '" + spec.id + "' contains characters reserved for the records CSV");
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError(origin + ": top level must be a JSON object");

  Walker w;
  RunConfig config;
  w.check_keys(doc, origin,
               {"mode", "seed", "workers", "output", "baseline", "sweep", "agents", "real"});
  w.get_string(doc, origin, "mode", config.mode);
  if (config.mode != "testbed" && config.mode != "real")
    w.err(origin + ".mode", "must be 'testbed' or 'real', got '" + config.mode + "'");
  w.get_u64(doc, origin, "seed", config.seed);
  w.get_int(doc, origin, "workers", config.workers, 1, 1024);
  w.get_string(doc, origin, "output", config.output_dir);
  w.get_string(doc, origin, "baseline", config.baseline);

  if (doc.contains("sweep")) parse_sweep(w, doc["sweep"], origin + ".sweep", config.sweep);
  config.sweep.seed = config.seed;
  config.sweep.workers = config.workers;

  if (!doc.contains("agents")) {
    w.err(origin + ".agents", "missing required key");
  } else {
    parse_agents(w, doc["agents"], origin + ".agents", config.seed, config.agents);
  }

  if (config.mode == "real") {
    if (!doc.contains("real"))
      w.err(origin + ".real", "missing required key in real mode");
    else
      parse_real(w, doc["real"], origin + ".real", config.real);
  } else if (doc.contains("real")) {
    parse_real(w, doc["real"], origin + ".real", config.real);
  }

  if (!config.baseline.empty()) {
    const bool found = std::any_of(config.agents.begin(), config.agents.end(),
                                   [&](const agents::AgentSpec& s) { return s.id == config.baseline; });
    if (!found)
      w.err(origin + ".baseline", "agent '" + config.baseline + "' is not in the agent list");
  }

  if (!w.errors.empty()) throw ConfigError(std::move(w.errors));
  return config;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

}  // namespace testbed::cli
