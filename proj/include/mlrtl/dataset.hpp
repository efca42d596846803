#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mlrtl {

struct Dataset {
  std::size_t n_features = 0;
  std::vector<double> features;  // row-major, rows() x n_features
  std::vector<int> labels;
  std::vector<std::string> column_names;  // optional, n_features entries

  std::size_t rows() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * n_features, n_features};
  }
  bool operator==(const Dataset&) const = default;
};

// CSV: a header row, then one row per sample; every column is a float
// feature except the last, which is an integer class label.
Dataset parse_csv(const std::string& text);
Dataset read_csv(const std::filesystem::path& path);
std::string to_csv(const Dataset& d);

// Throws Error(InvalidArgument) when the column count disagrees.
void check_feature_count(const Dataset& d, std::size_t n_features);

}  // namespace mlrtl
