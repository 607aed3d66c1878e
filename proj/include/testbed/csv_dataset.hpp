#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "testbed/generative.hpp"

namespace testbed::cli {

struct DatasetSplit {
  gen::Dataset train;
  gen::Dataset test;
  int num_classes = 0;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;
};

struct CsvLoadOptions {
  std::string label_column;  // empty: last column
  double test_ratio = 0.2;
  bool normalize = true;
  std::uint64_t seed = 0;
};

// Reads a headered CSV of numeric features plus one label column, shuffles,
// splits, and standardizes features using train-split statistics only.
DatasetSplit load_csv_dataset(const std::string& path, const CsvLoadOptions& options);
DatasetSplit load_csv_dataset_text(const std::string& text, const CsvLoadOptions& options,
                                   const std::string& origin);

}  // namespace testbed::cli
