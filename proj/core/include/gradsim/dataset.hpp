#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace gradsim {

struct Sample {
  std::vector<double> input;
  std::vector<double> label;
};

/// Ordered (input, label) pairs. `provenance` records how the data was made
/// (generator name and parameters, source file, subset seed, ...).
struct Dataset {
  std::vector<Sample> samples;
  std::map<std::string, std::string> provenance;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t input_dim() const { return samples.empty() ? 0 : samples.front().input.size(); }
  std::size_t label_dim() const { return samples.empty() ? 0 : samples.front().label.size(); }

  /// Throws ShapeError when inputs or labels have inconsistent lengths, or do
  /// not match the given dimensions (0 = don't check).
  void validate(std::size_t input_dim = 0, std::size_t label_dim = 0) const;

  /// Subset in the order given by `indices`; provenance is copied.
  Dataset subset(std::span<const std::size_t> indices) const;
};

} // namespace gradsim
