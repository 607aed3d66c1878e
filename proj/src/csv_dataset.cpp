#include "testbed/csv_dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "testbed/rng.hpp"

namespace testbed::cli {

namespace {

std::vector<std::string> split_line(const std::string& line) {
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

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && p == t.data() + t.size();
}

bool parse_integer(const std::string& s, long& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && p == t.data() + t.size();
}

}  // namespace

DatasetSplit load_csv_dataset_text(const std::string& text, const CsvLoadOptions& options,
                                   const std::string& origin) {
  if (!(options.test_ratio > 0.0) || !(options.test_ratio < 1.0))
    throw UsageError(origin + ": test_ratio must lie in (0, 1)");

  std::istringstream in(text);
  std::string line;
  int line_no = 0;

  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_line(line);
      break;
    }
  }
  if (header.empty()) throw ParseError(origin + ": missing header row");
  for (auto& h : header) h = trim(h);

  int label_col = static_cast<int>(header.size()) - 1;
  if (!options.label_column.empty()) {
    const auto it = std::find(header.begin(), header.end(), options.label_column);
    if (it == header.end())
      throw UsageError(origin + ": label column '" + options.label_column + "' not in header");
    label_col = static_cast<int>(it - header.begin());
  }
  const int num_features = static_cast<int>(header.size()) - 1;
  if (num_features < 1) throw UsageError(origin + ": need at least one feature column");

  std::vector<std::vector<double>> features;
  std::vector<std::string> raw_labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != header.size())
      throw ParseError(origin + " line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    std::vector<double> row;
    row.reserve(num_features);
    for (int c = 0; c < static_cast<int>(fields.size()); ++c) {
      if (c == label_col) {
        raw_labels.push_back(trim(fields[c]));
        continue;
      }
      double v;
      if (!parse_number(fields[c], v))
        throw ParseError(origin + " line " + std::to_string(line_no) + " column '" + header[c] +
                         "': non-numeric value '" + trim(fields[c]) + "'");
      row.push_back(v);
    }
    features.push_back(std::move(row));
  }

  const int n = static_cast<int>(features.size());
  if (n < 2) throw UsageError(origin + ": need at least two data rows to split");

  // Class names sort numerically when every label is an integer, otherwise
  // lexicographically; indices follow that order.
  std::vector<std::string> distinct = raw_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) throw UsageError(origin + ": need at least two distinct labels");
  bool all_integer = true;
  for (const auto& s : distinct) {
    long v;
    if (!parse_integer(s, v)) {
      all_integer = false;
      break;
    }
  }
  if (all_integer) {
    std::sort(distinct.begin(), distinct.end(), [](const std::string& a, const std::string& b) {
      long va = 0, vb = 0;
      parse_integer(a, va);
      parse_integer(b, vb);
      return va < vb;
    });
  }
  std::map<std::string, int> label_index;
  for (int i = 0; i < static_cast<int>(distinct.size()); ++i) label_index[distinct[i]] = i;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto eng = rng::make_engine(options.seed);
  std::shuffle(order.begin(), order.end(), eng);

  const int n_train = std::clamp(
      static_cast<int>(std::llround((1.0 - options.test_ratio) * n)), 1, n - 1);

  DatasetSplit split;
  split.num_classes = static_cast<int>(distinct.size());
  split.class_names = distinct;
  for (int c = 0; c < static_cast<int>(header.size()); ++c)
    if (c != label_col) split.feature_names.push_back(header[c]);

  auto fill = [&](gen::Dataset& ds, int begin, int end) {
    ds.inputs.resize(end - begin, num_features);
    ds.labels.resize(end - begin);
    for (int i = begin; i < end; ++i) {
      const int src = order[i];
      for (int f = 0; f < num_features; ++f) ds.inputs(i - begin, f) = features[src][f];
      ds.labels(i - begin) = label_index.at(raw_labels[src]);
    }
  };
  fill(split.train, 0, n_train);
  fill(split.test, n_train, n);

  if (options.normalize) {
    for (int f = 0; f < num_features; ++f) {
      const double mean = split.train.inputs.col(f).mean();
      const double var =
          (split.train.inputs.col(f).array() - mean).square().sum() / split.train.size();
      const double scale = var > 0.0 ? std::sqrt(var) : 1.0;
      split.train.inputs.col(f) = (split.train.inputs.col(f).array() - mean) / scale;
      split.test.inputs.col(f) = (split.test.inputs.col(f).array() - mean) / scale;
    }
  }
  return split;
}

DatasetSplit load_csv_dataset(const std::string& path, const CsvLoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open dataset '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_csv_dataset_text(buf.str(), options, path);
}

}  // namespace testbed::cli
