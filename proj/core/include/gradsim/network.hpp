#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gradsim {

enum class Activation { tanh, relu, sigmoid, identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

/// Fully-connected feed-forward architecture.
///
/// layer_sizes = {input, hidden..., output}; activations[l] applies after
/// hidden layer l; output_activation applies after the last affine map.
/// Zero hidden layers (a single affine map) is accepted so that linear models
/// share the same engine.
struct NetworkSpec {
  std::vector<std::size_t> layer_sizes;
  std::vector<Activation> activations;
  Activation output_activation = Activation::identity;

  /// Throws ShapeError when the invariants do not hold.
  void validate() const;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  /// Number of affine maps.
  std::size_t depth() const { return layer_sizes.size() - 1; }
  std::size_t param_count() const;
  Activation activation_after(std::size_t layer) const {
    return layer + 1 < depth() ? activations[layer] : output_activation;
  }

  /// Same activation on every hidden layer.
  static NetworkSpec mlp(std::size_t input, std::vector<std::size_t> hidden, std::size_t output,
                         Activation hidden_activation = Activation::tanh,
                         Activation output_activation = Activation::identity);

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

enum class ParamKind { weight, bias };

std::string_view to_string(ParamKind k);

/// One contiguous block of the flat parameter vector. Weights are row-major
/// with shape (fan_out, fan_in); biases have shape (fan_out, 1).
struct LayoutEntry {
  std::size_t layer = 0;
  ParamKind kind = ParamKind::weight;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const LayoutEntry&, const LayoutEntry&) = default;
};

/// Canonical flattening: layer-major, weight block then bias block.
std::vector<LayoutEntry> make_layout(const NetworkSpec& spec);

/// Flat vector of every network parameter plus its layout.
class ParamVector {
public:
  ParamVector() = default;
  ParamVector(std::vector<double> values, std::vector<LayoutEntry> layout);

  static ParamVector zeros(const NetworkSpec& spec);
  /// Per-layer uniform in [-gain/sqrt(fan_in), gain/sqrt(fan_in)], drawn from
  /// the counter-based stream "init" of `seed`.
  static ParamVector initialize(const NetworkSpec& spec, std::uint64_t seed, double gain = 1.0);

  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<LayoutEntry>& layout() const { return layout_; }

  std::span<const double> block(const LayoutEntry& e) const {
    return std::span<const double>(values_).subspan(e.offset, e.size());
  }

  /// Throws ShapeError unless the layout equals make_layout(spec).
  void check_matches(const NetworkSpec& spec) const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
  std::vector<double> values_;
  std::vector<LayoutEntry> layout_;
};

/// Per-output-coordinate parameter gradients: row i is grad_theta f^i(x).
class GradientMatrix {
public:
  GradientMatrix() = default;
  GradientMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * cols_, cols_);
  }
  std::span<const double> values() const { return values_; }
  double norm(std::size_t i) const { return norms_[i]; }
  std::span<const double> norms() const { return norms_; }

  /// Single-row matrix from a plain vector.
  static GradientMatrix from_row(std::vector<double> row);

  friend bool operator==(const GradientMatrix& a, const GradientMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.values_ == b.values_;
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
  std::vector<double> norms_;
};

/// Intermediate values of one forward pass; activations[0] is the input and
/// activations[l + 1] = act(pre_activations[l]).
struct ForwardTrace {
  std::vector<std::vector<double>> pre_activations;
  std::vector<std::vector<double>> activations;

  std::span<const double> output() const { return activations.back(); }
};

std::vector<double> forward(const NetworkSpec& spec, const ParamVector& params,
                            std::span<const double> x);

ForwardTrace forward_trace(const NetworkSpec& spec, const ParamVector& params,
                           std::span<const double> x);

/// Exact reverse-mode gradient of every output coordinate.
GradientMatrix per_sample_gradient(const NetworkSpec& spec, const ParamVector& params,
                                   std::span<const double> x);

/// grad_theta (seed . f(x)) for an output-space cotangent `seed`.
std::vector<double> vector_jacobian(const NetworkSpec& spec, const ParamVector& params,
                                    std::span<const double> x, std::span<const double> seed);

/// Hessian-vector product H(x) w with H = d^2 f^c / d theta^2, i.e. the
/// parameter gradient of grad_theta f^c(x) . w at fixed w. Computed by
/// propagating dual numbers (theta + t w) through the reverse pass.
/// `output` must be given when the network has more than one output.
std::vector<double> grad_of_inner_product(const NetworkSpec& spec, const ParamVector& params,
                                          std::span<const double> x, std::span<const double> w,
                                          std::optional<std::size_t> output = std::nullopt);

/// Same quantity by central differences of gradients, step 1e-4/|w|.
std::vector<double> grad_of_inner_product_fd(const NetworkSpec& spec, const ParamVector& params,
                                             std::span<const double> x,
                                             std::span<const double> w,
                                             std::optional<std::size_t> output = std::nullopt);

} // namespace gradsim
