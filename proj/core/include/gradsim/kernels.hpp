#pragma once

#include "gradsim/network.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace gradsim {

enum class SimilarityKind { influence, inner, correlation, trace, rotation };

/// A scalar similarity. `value` is empty when the kernel is undefined at the
/// given inputs (a zero gradient, a degenerate self-kernel); callers decide
/// whether to treat that as 0 or to propagate it.
struct SimilarityValue {
  SimilarityKind kind = SimilarityKind::correlation;
  std::optional<double> value;

  bool defined() const { return value.has_value(); }
  double value_or(double fallback) const { return value.value_or(fallback); }
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// k^I = g . g'
SimilarityValue k_inner(const GradientMatrix& g, const GradientMatrix& g_other);
/// Cosine of the two gradients, in [-1, 1].
SimilarityValue k_corr(const GradientMatrix& g, const GradientMatrix& g_other);
/// (g_s . g_t) / |g_s|^2: first-order change of f at the target per unit
/// change requested at the source. Not symmetric.
SimilarityValue k_influence(const GradientMatrix& g_source, const GradientMatrix& g_target);

/// Span overloads used by the estimators.
double k_inner(std::span<const double> g, std::span<const double> g_other);
SimilarityValue k_corr(std::span<const double> g, std::span<const double> g_other);
SimilarityValue k_influence(std::span<const double> g_source, std::span<const double> g_target);

enum class KernelKind { raw, normalized };

/// Row-major d x d kernel matrix.
class KernelMatrix {
public:
  KernelMatrix() = default;
  KernelMatrix(std::size_t d, std::vector<double> values, KernelKind kind = KernelKind::raw);

  static KernelMatrix identity(std::size_t d, KernelKind kind = KernelKind::normalized);

  std::size_t dim() const { return d_; }
  KernelKind kind() const { return kind_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * d_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * d_ + j]; }
  std::span<const double> values() const { return values_; }

  KernelMatrix transposed() const;
  double trace() const;
  double frobenius() const;

private:
  std::size_t d_ = 0;
  std::vector<double> values_;
  KernelKind kind_ = KernelKind::raw;
};

/// K^{ij} = G_left_i . G_right_j. kernel_matrix(G(x'), G(x)) is the K(x', x)
/// that maps a requested output move at x to the induced move at x'.
KernelMatrix kernel_matrix(const GradientMatrix& left, const GradientMatrix& right);

/// Inverse square root of a symmetric PSD matrix through its eigenbasis, with
/// eigenvalues floored at floor_ratio * max eigenvalue.
struct InverseSqrt {
  std::optional<KernelMatrix> inv_sqrt; ///< empty when max eigenvalue <= 0 or non-finite
  KernelMatrix sqrt;                    ///< floored square root (for recomposition)
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  bool floored = false; ///< some eigenvalue was raised to the floor
};

inline constexpr double kEigenFloorRatio = 1e-10;

InverseSqrt inverse_sqrt_psd(const KernelMatrix& k, double floor_ratio = kEigenFloorRatio);

/// Result of whitening a cross kernel; `matrix` is empty when either self
/// kernel is degenerate or needed the eigenvalue floor, and the eigenvalue
/// diagnostics say why.
struct NormalizedKernel {
  std::optional<KernelMatrix> matrix;
  double min_eigenvalue_left = 0.0;
  double min_eigenvalue_right = 0.0;
  bool floored = false;
};

/// K^C = Kxx^{-1/2} Kxx' Kx'x'^{-1/2}.
NormalizedKernel normalize_kernel_matrix(const KernelMatrix& k_cross, const KernelMatrix& k_left,
                                         const KernelMatrix& k_right);

/// (1/d) Tr K^C.
SimilarityValue trace_similarity(const KernelMatrix& kc);

/// max over output rotations R of (1/2) Tr(K^C R), closed form
/// (1/2) sqrt(|K^C|_F^2 + 2 det K^C). Only defined for d = 2.
SimilarityValue rot_similarity(const KernelMatrix& kc);

/// Collapse a pre-softmax gradient matrix to one row: the right-class row,
/// or the right-class row minus the adversary-class row.
GradientMatrix binarize_classification_gradient(const GradientMatrix& g, std::size_t right_class,
                                                std::optional<std::size_t> adversary_class = {});

/// Contribution of one parameter block to k^I.
struct LayerContribution {
  std::size_t layer = 0;
  ParamKind kind = ParamKind::weight;
  double value = 0.0;
};

/// Splits k^I(g, g') into per-(layer, weight/bias) partial inner products;
/// the partials sum to k^I.
std::vector<LayerContribution> layer_decomposition(std::span<const double> g,
                                                   std::span<const double> g_other,
                                                   const std::vector<LayoutEntry>& layout);

} // namespace gradsim
