#include "gradsim/dataset.hpp"

#include "gradsim/error.hpp"

#include <string>

namespace gradsim {

void Dataset::validate(std::size_t in_dim, std::size_t out_dim) const {
  if (samples.empty()) {
    return;
  }
  const std::size_t di = in_dim ? in_dim : input_dim();
  const std::size_t dl = out_dim ? out_dim : label_dim();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].input.size() != di) {
      throw ShapeError("sample " + std::to_string(i) + " has input length " +
                       std::to_string(samples[i].input.size()) + ", expected " + std::to_string(di));
    }
    if (samples[i].label.size() != dl) {
      throw ShapeError("sample " + std::to_string(i) + " has label length " +
                       std::to_string(samples[i].label.size()) + ", expected " + std::to_string(dl));
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.provenance = provenance;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples.size()) {
      throw ShapeError("subset index " + std::to_string(i) + " out of range");
    }
    out.samples.push_back(samples[i]);
  }
  return out;
}

} // namespace gradsim
