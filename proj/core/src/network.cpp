#include "gradsim/network.hpp"

#include "gradsim/error.hpp"
#include "gradsim/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gradsim {

std::string_view to_string(Activation a) {
  switch (a) {
  case Activation::tanh:
    return "tanh";
  case Activation::relu:
    return "relu";
  case Activation::sigmoid:
    return "sigmoid";
  case Activation::identity:
    break;
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") {
    return Activation::tanh;
  }
  if (name == "relu") {
    return Activation::relu;
  }
  if (name == "sigmoid") {
    return Activation::sigmoid;
  }
  if (name == "identity" || name == "linear") {
    return Activation::identity;
  }
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(ParamKind k) { return k == ParamKind::weight ? "weight" : "bias"; }

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) {
    throw ShapeError("network needs at least an input and an output size");
  }
  for (std::size_t s : layer_sizes) {
    if (s == 0) {
      throw ShapeError("layer sizes must be positive");
    }
  }
  if (activations.size() != layer_sizes.size() - 2) {
    throw ShapeError("expected " + std::to_string(layer_sizes.size() - 2) +
                     " hidden activations, got " + std::to_string(activations.size()));
  }
}

std::size_t NetworkSpec::param_count() const {
  std::size_t p = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    p += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  }
  return p;
}

NetworkSpec NetworkSpec::mlp(std::size_t input, std::vector<std::size_t> hidden, std::size_t output,
                             Activation hidden_activation, Activation output_activation) {
  NetworkSpec spec;
  spec.layer_sizes.push_back(input);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.layer_sizes.push_back(output);
  spec.activations.assign(hidden.size(), hidden_activation);
  spec.output_activation = output_activation;
  spec.validate();
  return spec;
}

std::vector<LayoutEntry> make_layout(const NetworkSpec& spec) {
  spec.validate();
  std::vector<LayoutEntry> layout;
  layout.reserve(2 * spec.depth());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec.depth(); ++l) {
    const std::size_t fan_in = spec.layer_sizes[l];
    const std::size_t fan_out = spec.layer_sizes[l + 1];
    layout.push_back({l, ParamKind::weight, fan_out, fan_in, offset});
    offset += fan_out * fan_in;
    layout.push_back({l, ParamKind::bias, fan_out, 1, offset});
    offset += fan_out;
  }
  return layout;
}

ParamVector::ParamVector(std::vector<double> values, std::vector<LayoutEntry> layout)
    : values_(std::move(values)), layout_(std::move(layout)) {
  std::size_t expected = 0;
  for (const LayoutEntry& e : layout_) {
    if (e.offset != expected) {
      throw ShapeError("parameter layout is not contiguous at offset " + std::to_string(e.offset));
    }
    expected += e.size();
  }
  if (expected != values_.size()) {
    throw ShapeError("parameter layout covers " + std::to_string(expected) + " values, vector has " +
                     std::to_string(values_.size()));
  }
}

ParamVector ParamVector::zeros(const NetworkSpec& spec) {
  return ParamVector(std::vector<double>(spec.param_count(), 0.0), make_layout(spec));
}

ParamVector ParamVector::initialize(const NetworkSpec& spec, std::uint64_t seed, double gain) {
  if (!(gain > 0.0) || !std::isfinite(gain)) {
    throw std::invalid_argument("initialization gain must be positive");
  }
  ParamVector params = zeros(spec);
  CounterRng rng(seed, "init");
  for (const LayoutEntry& e : params.layout_) {
    const double bound = gain / std::sqrt(static_cast<double>(spec.layer_sizes[e.layer]));
    for (std::size_t k = 0; k < e.size(); ++k) {
      params.values_[e.offset + k] = rng.uniform(-bound, bound);
    }
  }
  return params;
}

void ParamVector::check_matches(const NetworkSpec& spec) const {
  if (layout_ != make_layout(spec)) {
    throw ShapeError("parameter layout does not match the network spec");
  }
}

GradientMatrix::GradientMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)), norms_(rows, 0.0) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeError("gradient matrix values do not match rows x cols");
  }
  for (std::size_t i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (double v : row(i)) {
      s += v * v;
    }
    norms_[i] = std::sqrt(s);
  }
}

GradientMatrix GradientMatrix::from_row(std::vector<double> row) {
  const std::size_t p = row.size();
  return GradientMatrix(1, p, std::move(row));
}

} // namespace gradsim
