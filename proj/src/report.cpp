#include "testbed/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "testbed/rng.hpp"

namespace testbed::cli {

namespace {

constexpr const char* kRecordsHeader = "# eval-records v1";
constexpr const char* kRecordsColumns =
    "agent,beta,train_size,tau,kl_or_nll,stderr,count,seconds,seed,failed";
constexpr const char* kLeaderboardHeader = "# leaderboard v1";
constexpr const char* kCorrelationHeader = "# correlation v1";

void check_agent_id(const std::string& id) {
  if (id.empty()) throw UsageError("record: empty agent id");
  if (id.find_first_of(",\"\n\r") != std::string::npos)
    throw UsageError("record: agent id '" + id + "' contains CSV delimiters");
}

double parse_double(const std::string& s, const std::string& where) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ParseError(where + ": bad number '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const std::string& where) {
  long v;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ParseError(where + ": bad integer '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& where) {
  std::uint64_t v;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ParseError(where + ": bad unsigned integer '" + s + "'");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string records_to_csv(const std::vector<eval::EvalRecord>& records) {
  std::string out;
  out += kRecordsHeader;
  out += '\n';
  out += kRecordsColumns;
  out += '\n';
  for (const auto& r : records) {
    check_agent_id(r.agent);
    out += r.agent;
    out += ',';
    if (r.beta) out += format_double(*r.beta);
    out += ',';
    if (r.train_size) out += std::to_string(*r.train_size);
    out += ',';
    out += std::to_string(r.tau);
    out += ',';
    out += format_double(r.kl);
    out += ',';
    out += format_double(r.stderr_);
    out += ',';
    out += std::to_string(r.count);
    out += ',';
    out += format_double(r.seconds);
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += r.failed ? '1' : '0';
    out += '\n';
  }
  return out;
}

std::vector<eval::EvalRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<eval::EvalRecord> out;
  int line_no = 0;
  bool saw_columns = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    const std::string where = "records csv line " + std::to_string(line_no);
    if (!saw_columns) {
      if (line != kRecordsColumns)
        throw ParseError(where + ": expected column header '" + kRecordsColumns + "'");
      saw_columns = true;
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 10)
      throw ParseError(where + ": expected 10 fields, got " + std::to_string(fields.size()));
    eval::EvalRecord r;
    r.agent = fields[0];
    if (!fields[1].empty()) r.beta = parse_double(fields[1], where + " (beta)");
    if (!fields[2].empty())
      r.train_size = static_cast<int>(parse_long(fields[2], where + " (train_size)"));
    r.tau = static_cast<int>(parse_long(fields[3], where + " (tau)"));
    r.kl = parse_double(fields[4], where + " (kl_or_nll)");
    r.stderr_ = parse_double(fields[5], where + " (stderr)");
    r.count = parse_long(fields[6], where + " (count)");
    r.seconds = parse_double(fields[7], where + " (seconds)");
    r.seed = parse_u64(fields[8], where + " (seed)");
    if (fields[9] != "0" && fields[9] != "1")
      throw ParseError(where + ": failed flag must be 0 or 1");
    r.failed = fields[9] == "1";
    out.push_back(std::move(r));
  }
  if (!saw_columns) throw ParseError("records csv: missing column header");
  return out;
}

void write_records(const std::string& path, const std::vector<eval::EvalRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open '" + path + "' for writing");
  out << records_to_csv(records);
  if (!out) throw UsageError("failed writing '" + path + "'");
}

std::vector<eval::EvalRecord> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return records_from_csv(buf.str());
}

Report make_report(const std::vector<eval::EvalRecord>& records, const std::string& baseline) {
  if (baseline.empty()) throw UsageError("report: baseline agent id required");
  const std::vector<eval::EvalRecord> aggregates = eval::aggregate_records(records);
  if (aggregates.empty()) throw UsageError("report: no evaluable cell records");

  std::map<int, double> baseline_kl;
  for (const auto& a : aggregates)
    if (a.agent == baseline) baseline_kl[a.tau] = a.kl;
  if (baseline_kl.empty())
    throw UsageError("report: baseline agent '" + baseline + "' has no records");

  Report report;
  report.baseline = baseline;
  for (const auto& a : aggregates) {
    const auto it = baseline_kl.find(a.tau);
    if (it == baseline_kl.end())
      throw UsageError("report: baseline agent '" + baseline + "' has no records at tau=" +
                       std::to_string(a.tau));
    LeaderboardRow row;
    row.agent = a.agent;
    row.tau = a.tau;
    row.kl = a.kl;
    row.stderr_ = a.stderr_;
    row.normalized = a.kl / it->second;
    row.count = a.count;
    report.rows.push_back(std::move(row));
  }
  std::sort(report.rows.begin(), report.rows.end(),
            [](const LeaderboardRow& a, const LeaderboardRow& b) {
              if (a.agent != b.agent) return a.agent < b.agent;
              return a.tau < b.tau;
            });
  return report;
}

std::string report_to_csv(const Report& report) {
  std::string out;
  out += kLeaderboardHeader;
  out += '\n';
  out += "agent,tau,kl,stderr,normalized,count\n";
  for (const auto& row : report.rows) {
    check_agent_id(row.agent);
    out += row.agent;
    out += ',';
    out += std::to_string(row.tau);
    out += ',';
    out += format_double(row.kl);
    out += ',';
    out += format_double(row.stderr_);
    out += ',';
    out += format_double(row.normalized);
    out += ',';
    out += std::to_string(row.count);
    out += '\n';
  }
  return out;
}

std::string report_to_json(const Report& report) {
  nlohmann::json doc;
  doc["baseline"] = report.baseline;
  doc["rows"] = nlohmann::json::array();
  for (const auto& row : report.rows) {
    doc["rows"].push_back({{"agent", row.agent},
                           {"tau", row.tau},
                           {"kl", row.kl},
                           {"stderr", row.stderr_},
                           {"normalized", row.normalized},
                           {"count", row.count}});
  }
  return doc.dump(2) + "\n";
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw UsageError("pearson: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);  // NaN on degenerate input, by design
}

namespace {

// Per-τ aggregate scores combined as Σ_τ score(τ)/τ, the weighting used when
// one number must summarize marginal and joint quality together.
std::map<std::string, double> combined_scores(const std::vector<eval::EvalRecord>& records,
                                              const std::set<int>& keep_sizes) {
  std::vector<eval::EvalRecord> kept;
  for (const auto& r : records) {
    if (r.failed || (!r.beta && !r.train_size)) continue;
    if (!r.train_size || !keep_sizes.count(*r.train_size)) continue;
    kept.push_back(r);
  }
  std::map<std::string, double> scores;
  for (const auto& a : eval::aggregate_records(kept))
    scores[a.agent] += a.kl / static_cast<double>(a.tau);
  return scores;
}

std::set<int> regime_sizes(const std::vector<eval::EvalRecord>& records, bool low,
                           const std::vector<int>& low_data_sizes) {
  std::set<int> present;
  for (const auto& r : records)
    if (!r.failed && r.train_size) present.insert(*r.train_size);
  if (present.empty()) return present;
  if (low) {
    std::set<int> out;
    for (int t : low_data_sizes)
      if (present.count(t)) out.insert(t);
    return out;
  }
  return {*present.rbegin()};
}

double percentile(std::vector<double> sorted, double pct) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * pct / 100.0;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::string family_of(const std::string& id) {
  const auto pos = id.find('[');
  return pos == std::string::npos ? id : id.substr(0, pos);
}

}  // namespace

std::vector<CorrelationEntry> correlation_report(const std::vector<eval::EvalRecord>& testbed,
                                                 const std::vector<eval::EvalRecord>& real,
                                                 const CorrelationConfig& config) {
  if (config.n_bootstrap < 1) throw DomainError("correlation: n_bootstrap must be >= 1");
  if (!(config.lo_percentile < config.hi_percentile))
    throw DomainError("correlation: percentile bounds out of order");

  std::vector<CorrelationEntry> out;
  for (const bool low : {true, false}) {
    const std::string regime = low ? "low" : "high";
    const auto scores_tb =
        combined_scores(testbed, regime_sizes(testbed, low, config.low_data_sizes));
    const auto scores_re = combined_scores(real, regime_sizes(real, low, config.low_data_sizes));

    // Pair on the full agent id (kind plus hyperparameter suffix).
    std::map<std::string, std::vector<std::pair<double, double>>> families;
    std::vector<std::string> unmatched;
    for (const auto& [id, s] : scores_tb) {
      const auto it = scores_re.find(id);
      if (it == scores_re.end()) {
        unmatched.push_back(id + " (testbed only)");
        continue;
      }
      families[family_of(id)].emplace_back(s, it->second);
      families["all"].emplace_back(s, it->second);
    }
    for (const auto& [id, s] : scores_re)
      if (!scores_tb.count(id)) unmatched.push_back(id + " (real only)");

    if (!unmatched.empty()) {
      std::string msg = "correlation (" + regime + " data regime): unmatched agent keys:";
      for (const auto& u : unmatched) msg += " " + u;
      throw UsageError(msg);
    }
    if (families["all"].size() < 3)
      throw UsageError("correlation (" + regime + " data regime): need >= 3 matched pairs, got " +
                       std::to_string(families["all"].size()));

    for (const auto& [family, pairs] : families) {
      if (pairs.size() < 3) continue;
      std::vector<double> x, y;
      for (const auto& [a, b] : pairs) {
        x.push_back(a);
        y.push_back(b);
      }
      CorrelationEntry entry;
      entry.family = family;
      entry.regime = regime;
      entry.pairs = static_cast<int>(pairs.size());
      entry.r = pearson(x, y);

      auto eng = rng::make_engine(
          rng::derive(config.seed, {rng::hash_string(family), rng::hash_string(regime)}));
      std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
      std::vector<double> rs;
      rs.reserve(config.n_bootstrap);
      std::vector<double> bx(pairs.size()), by(pairs.size());
      for (int b = 0; b < config.n_bootstrap; ++b) {
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          const auto& p = pairs[pick(eng)];
          bx[i] = p.first;
          by[i] = p.second;
        }
        const double r = pearson(bx, by);
        if (std::isfinite(r)) rs.push_back(r);
      }
      std::sort(rs.begin(), rs.end());
      entry.lo = percentile(rs, config.lo_percentile);
      entry.hi = percentile(rs, config.hi_percentile);
      out.push_back(std::move(entry));
    }
  }
  std::sort(out.begin(), out.end(), [](const CorrelationEntry& a, const CorrelationEntry& b) {
    if (a.family != b.family) return a.family < b.family;
    return a.regime < b.regime;
  });
  return out;
}

std::string correlation_to_csv(const std::vector<CorrelationEntry>& entries) {
  std::string out;
  out += kCorrelationHeader;
  out += '\n';
  out += "family,regime,r,lo,hi,pairs\n";
  for (const auto& e : entries) {
    out += e.family;
    out += ',';
    out += e.regime;
    out += ',';
    out += format_double(e.r);
    out += ',';
    out += format_double(e.lo);
    out += ',';
    out += format_double(e.hi);
    out += ',';
    out += std::to_string(e.pairs);
    out += '\n';
  }
  return out;
}

std::string correlation_to_json(const std::vector<CorrelationEntry>& entries) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : entries) {
    doc.push_back({{"family", e.family},
                   {"regime", e.regime},
                   {"r", e.r},
                   {"lo", e.lo},
                   {"hi", e.hi},
                   {"pairs", e.pairs}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace testbed::cli
