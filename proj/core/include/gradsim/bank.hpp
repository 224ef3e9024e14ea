#pragma once

#include "gradsim/dataset.hpp"
#include "gradsim/kernels.hpp"
#include "gradsim/network.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace gradsim {

/// How per-sample gradients are collected into a bank.
struct BankOptions {
  /// Keep a single output coordinate (d becomes 1).
  std::optional<std::size_t> output;
  /// Classification: keep the row of the labelled class (argmax of the label
  /// vector). With `adversary_seed`, subtract the row of an adversary class
  /// drawn uniformly per sample from the other classes.
  bool binarize_by_label = false;
  std::optional<std::uint64_t> adversary_seed;
  std::size_t threads = 1;
};

/// Per-sample gradients of a dataset in normalized form, index-aligned with
/// the dataset.
///
/// For one output the stored rows are g / |g|. For d outputs they are the
/// whitened rows K(x,x)^{-1/2} G(x), which form an orthonormal family, so the
/// matrix kernel K^C(x_i, x_j) is the d x d table of their dot products.
/// Samples whose gradient vanishes (d = 1) or whose self-kernel needed the
/// eigenvalue floor (d > 1) are marked undefined: their stored rows are zero
/// and every similarity involving them counts as 0.
class GradientBank {
public:
  GradientBank() = default;

  static GradientBank from_gradients(std::span<const GradientMatrix> gradients,
                                     std::size_t threads = 1);
  static GradientBank build(const NetworkSpec& spec, const ParamVector& params,
                            const Dataset& dataset, const BankOptions& options = {});

  std::size_t size() const { return n_; }
  std::size_t output_dim() const { return d_; }
  std::size_t param_count() const { return p_; }

  bool defined(std::size_t i) const { return defined_[i] != 0; }
  /// Indices of undefined samples, ascending.
  std::vector<std::size_t> excluded() const;

  /// Normalized (d = 1) or whitened (d > 1) row r of sample i.
  std::span<const double> unit(std::size_t i, std::size_t r = 0) const {
    return std::span<const double>(unit_).subspan((i * d_ + r) * p_, p_);
  }
  /// Norm of raw gradient row r of sample i.
  double norm(std::size_t i, std::size_t r = 0) const { return norms_[i * d_ + r]; }
  /// Raw self-kernel K(x_i, x_i) and its (floored) square root.
  KernelMatrix self_kernel(std::size_t i) const;
  KernelMatrix self_kernel_sqrt(std::size_t i) const;

  /// k^C(x_i, x_j) for d = 1, (1/d) Tr K^C(x_i, x_j) otherwise; 0 when either
  /// sample is undefined, and exactly 1 on the diagonal of a defined sample.
  double similarity(std::size_t i, std::size_t j) const;
  /// Same, keeping undefinedness visible.
  SimilarityValue similarity_value(std::size_t i, std::size_t j) const;
  /// Full K^C(x_i, x_j); empty when undefined.
  std::optional<KernelMatrix> normalized_kernel(std::size_t i, std::size_t j) const;
  /// Raw K(x_i, x_j) recomposed from the stored whitened rows.
  KernelMatrix raw_kernel(std::size_t i, std::size_t j) const;
  /// k^I(x_i, x_j) for single-output banks.
  double inner(std::size_t i, std::size_t j) const;

  /// Row i of the similarity matrix.
  void similarity_row(std::size_t i, std::span<double> out) const;

  std::size_t threads() const { return threads_; }
  void set_threads(std::size_t t) { threads_ = t == 0 ? 1 : t; }

  /// Flat binary spill file: fixed header, an index of per-sample offsets and
  /// flags, then the per-sample records.
  void save(const std::filesystem::path& path) const;
  static GradientBank load(const std::filesystem::path& path);

  /// Equal stored data (the thread setting is not compared).
  friend bool operator==(const GradientBank& a, const GradientBank& b);

private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::size_t p_ = 0;
  std::size_t threads_ = 1;
  std::vector<double> unit_;      // n * d * p
  std::vector<double> norms_;     // n * d
  std::vector<double> self_;      // n * d * d
  std::vector<double> self_sqrt_; // n * d * d
  std::vector<unsigned char> defined_;

  void require_single_output(const char* what) const;
};

/// Sum over samples of a per-sample p-vector, computed in fixed-size blocks
/// reduced by a fixed binary tree, independent of the thread count.
std::vector<double> deterministic_sum(std::size_t n, std::size_t p, std::size_t threads,
                                      const std::function<void(std::size_t, std::span<double>)>& add_sample);

} // namespace gradsim
