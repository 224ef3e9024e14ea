#include "gradsim/kernels.hpp"

#include "gradsim/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace gradsim {

namespace {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MatrixRM to_eigen(const KernelMatrix& k) {
  return Eigen::Map<const MatrixRM>(k.values().data(), static_cast<Eigen::Index>(k.dim()),
                                    static_cast<Eigen::Index>(k.dim()));
}

KernelMatrix from_eigen(const MatrixRM& m, KernelKind kind) {
  const std::size_t d = static_cast<std::size_t>(m.rows());
  return KernelMatrix(d, std::vector<double>(m.data(), m.data() + d * d), kind);
}

void require_single_row(const GradientMatrix& g) {
  if (g.rows() != 1) {
    throw ShapeError("scalar kernels need single-output gradients; got " + std::to_string(g.rows()) +
                     " rows");
  }
}

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) {
    throw ShapeError("gradient lengths differ: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

} // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size());
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    s += a[k] * b[k];
  }
  return s;
}

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) {
    s += v * v;
  }
  return std::sqrt(s);
}

double k_inner(std::span<const double> g, std::span<const double> g_other) { return dot(g, g_other); }

SimilarityValue k_corr(std::span<const double> g, std::span<const double> g_other) {
  const double ng = norm(g);
  const double no = norm(g_other);
  const double ip = dot(g, g_other);
  if (!(ng > 0.0) || !(no > 0.0)) {
    return {SimilarityKind::correlation, std::nullopt};
  }
  double c = ip / (ng * no);
  // Rounding can push |c| past 1 by an ulp or two for parallel vectors.
  c = std::clamp(c, -1.0, 1.0);
  return {SimilarityKind::correlation, c};
}

SimilarityValue k_influence(std::span<const double> g_source, std::span<const double> g_target) {
  const double ns = dot(g_source, g_source);
  const double ip = dot(g_source, g_target);
  if (!(ns > 0.0)) {
    return {SimilarityKind::influence, std::nullopt};
  }
  return {SimilarityKind::influence, ip / ns};
}

SimilarityValue k_inner(const GradientMatrix& g, const GradientMatrix& g_other) {
  require_single_row(g);
  require_single_row(g_other);
  return {SimilarityKind::inner, k_inner(g.row(0), g_other.row(0))};
}

SimilarityValue k_corr(const GradientMatrix& g, const GradientMatrix& g_other) {
  require_single_row(g);
  require_single_row(g_other);
  return k_corr(g.row(0), g_other.row(0));
}

SimilarityValue k_influence(const GradientMatrix& g_source, const GradientMatrix& g_target) {
  require_single_row(g_source);
  require_single_row(g_target);
  return k_influence(g_source.row(0), g_target.row(0));
}

KernelMatrix::KernelMatrix(std::size_t d, std::vector<double> values, KernelKind kind)
    : d_(d), values_(std::move(values)), kind_(kind) {
  if (values_.size() != d_ * d_) {
    throw ShapeError("kernel matrix needs d*d values");
  }
}

KernelMatrix KernelMatrix::identity(std::size_t d, KernelKind kind) {
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    v[i * d + i] = 1.0;
  }
  return KernelMatrix(d, std::move(v), kind);
}

KernelMatrix KernelMatrix::transposed() const {
  KernelMatrix t = *this;
  for (std::size_t i = 0; i < d_; ++i) {
    for (std::size_t j = 0; j < d_; ++j) {
      t(i, j) = (*this)(j, i);
    }
  }
  return t;
}

double KernelMatrix::trace() const {
  double s = 0.0;
  for (std::size_t i = 0; i < d_; ++i) {
    s += (*this)(i, i);
  }
  return s;
}

double KernelMatrix::frobenius() const { return norm(values_); }

KernelMatrix kernel_matrix(const GradientMatrix& left, const GradientMatrix& right) {
  if (left.rows() != right.rows()) {
    throw ShapeError("kernel matrix needs equal output dimensions");
  }
  require_same_length(left.cols(), right.cols());
  const std::size_t d = left.rows();
  std::vector<double> v(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      v[i * d + j] = dot(left.row(i), right.row(j));
    }
  }
  return KernelMatrix(d, std::move(v), KernelKind::raw);
}

InverseSqrt inverse_sqrt_psd(const KernelMatrix& k, double floor_ratio) {
  const MatrixRM m = to_eigen(k);
  const MatrixRM sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixRM> eig(sym);
  InverseSqrt out;
  const auto& lambda = eig.eigenvalues();
  out.min_eigenvalue = lambda.minCoeff();
  out.max_eigenvalue = lambda.maxCoeff();
  if (!(out.max_eigenvalue > 0.0) || !std::isfinite(out.max_eigenvalue) ||
      eig.info() != Eigen::Success) {
    out.sqrt = KernelMatrix(k.dim(), std::vector<double>(k.dim() * k.dim(), 0.0));
    return out;
  }
  const double floor = floor_ratio * out.max_eigenvalue;
  Eigen::VectorXd root(lambda.size());
  Eigen::VectorXd inv_root(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    double l = lambda[i];
    if (l < floor) {
      l = floor;
      out.floored = true;
    }
    root[i] = std::sqrt(l);
    inv_root[i] = 1.0 / root[i];
  }
  const MatrixRM& v = eig.eigenvectors();
  out.inv_sqrt = from_eigen(v * inv_root.asDiagonal() * v.transpose(), KernelKind::raw);
  out.sqrt = from_eigen(v * root.asDiagonal() * v.transpose(), KernelKind::raw);
  return out;
}

NormalizedKernel normalize_kernel_matrix(const KernelMatrix& k_cross, const KernelMatrix& k_left,
                                         const KernelMatrix& k_right) {
  const std::size_t d = k_cross.dim();
  if (k_left.dim() != d || k_right.dim() != d) {
    throw ShapeError("kernel matrices must share the output dimension");
  }
  const InverseSqrt left = inverse_sqrt_psd(k_left);
  const InverseSqrt right = inverse_sqrt_psd(k_right);
  NormalizedKernel out;
  out.min_eigenvalue_left = left.min_eigenvalue;
  out.min_eigenvalue_right = right.min_eigenvalue;
  out.floored = left.floored || right.floored;
  // A floored self-kernel cannot whiten to the identity; report it instead of
  // returning a matrix that breaks K^C(x, x) = I.
  if (!left.inv_sqrt || !right.inv_sqrt || out.floored) {
    return out;
  }
  const MatrixRM kc = to_eigen(*left.inv_sqrt) * to_eigen(k_cross) * to_eigen(*right.inv_sqrt);
  out.matrix = from_eigen(kc, KernelKind::normalized);
  return out;
}

SimilarityValue trace_similarity(const KernelMatrix& kc) {
  if (kc.dim() == 0) {
    return {SimilarityKind::trace, std::nullopt};
  }
  return {SimilarityKind::trace, kc.trace() / static_cast<double>(kc.dim())};
}

SimilarityValue rot_similarity(const KernelMatrix& kc) {
  if (kc.dim() != 2) {
    throw ShapeError("rotation-invariant similarity is only defined for 2 outputs");
  }
  // |M|_F^2 + 2 det M = (M11 + M22)^2 + (M12 - M21)^2, which is never negative.
  const double s = kc(0, 0) + kc(1, 1);
  const double a = kc(0, 1) - kc(1, 0);
  return {SimilarityKind::rotation, 0.5 * std::sqrt(s * s + a * a)};
}

GradientMatrix binarize_classification_gradient(const GradientMatrix& g, std::size_t right_class,
                                                std::optional<std::size_t> adversary_class) {
  if (right_class >= g.rows()) {
    throw ShapeError("right class " + std::to_string(right_class) + " out of range");
  }
  const auto right = g.row(right_class);
  std::vector<double> row(right.begin(), right.end());
  if (adversary_class) {
    if (*adversary_class >= g.rows()) {
      throw ShapeError("adversary class " + std::to_string(*adversary_class) + " out of range");
    }
    if (*adversary_class == right_class) {
      throw std::invalid_argument("adversary class must differ from the right class");
    }
    const auto adv = g.row(*adversary_class);
    for (std::size_t k = 0; k < row.size(); ++k) {
      row[k] -= adv[k];
    }
  }
  return GradientMatrix::from_row(std::move(row));
}

std::vector<LayerContribution> layer_decomposition(std::span<const double> g,
                                                   std::span<const double> g_other,
                                                   const std::vector<LayoutEntry>& layout) {
  require_same_length(g.size(), g_other.size());
  std::size_t covered = 0;
  for (const LayoutEntry& e : layout) {
    if (e.offset != covered) {
      throw ShapeError("layout is not contiguous");
    }
    covered += e.size();
  }
  if (covered != g.size()) {
    throw ShapeError("layout covers " + std::to_string(covered) + " parameters, gradient has " +
                     std::to_string(g.size()));
  }
  std::vector<LayerContribution> parts;
  parts.reserve(layout.size());
  for (const LayoutEntry& e : layout) {
    parts.push_back({e.layer, e.kind, dot(g.subspan(e.offset, e.size()), g_other.subspan(e.offset, e.size()))});
  }
  return parts;
}

} // namespace gradsim
