#pragma once

#include "gradsim/bank.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace gradsim {

/// Estimator grid for a neighbor report.
struct DensityConfig {
  std::vector<double> taus = {0.5, 0.8, 0.9, 0.95};
  std::vector<double> alphas = {1.0, 2.0, 8.0};
  std::size_t bins = 20;
  std::size_t k_nearest = 0;
  /// Self contributes k(x, x) = 1 to N_tau, N_S and N_alpha.
  bool include_self = true;
  /// Histograms leave self out by default.
  bool histogram_include_self = false;

  void validate() const;
};

/// N_tau(x_i) = #{j : k^C(x_i, x_j) >= tau}.
std::size_t count_hard(std::size_t i, const GradientBank& bank, double tau, bool include_self = true);
/// N_S(x_i) = sum_j k^C(x_i, x_j), by a direct loop over j.
double count_soft_naive(std::size_t i, const GradientBank& bank, bool include_self = true);
/// N_S for every sample in two passes: g = sum_j u_j, then N_S(x_i) = u_i . g.
/// Requires a single-output bank.
std::vector<double> count_soft_fast(const GradientBank& bank, bool include_self = true);

struct MultiOutputCounts {
  std::vector<double> values;
  /// Samples with a singular self-kernel; their value is 0 and they add
  /// nothing to the others.
  std::vector<std::size_t> excluded;
};

/// sum_j (1/d) Tr K^C(x_i, x_j) for every sample, from the d accumulated sums
/// of whitened rows.
MultiOutputCounts count_soft_fast_multid(const GradientBank& bank, bool include_self = true);

/// N_alpha^+(x_i) = sum_j 1[k > 0] k^alpha.
double count_positive_alpha(std::size_t i, const GradientBank& bank, double alpha, bool include_self = true);

struct Histogram {
  std::vector<double> edges; ///< bins + 1 edges from -1 to 1
  std::vector<std::size_t> counts;
  bool include_self = false;

  std::size_t total() const;
};

Histogram make_histogram(std::span<const double> similarities, std::size_t bins);
Histogram histogram(std::size_t i, const GradientBank& bank, std::size_t bins, bool include_self = false);

struct Neighbor {
  std::size_t index = 0;
  double similarity = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// The k most similar other samples, descending, ties by ascending index.
std::vector<Neighbor> k_nearest(std::size_t i, const GradientBank& bank, std::size_t k);

struct Uncertainty {
  std::optional<double> value; ///< empty when the denominator is 0
  double numerator = 0.0;      ///< |g_i|^2
  double denominator = 0.0;    ///< sum_j k^I(x_i, x_j)
};

/// |g_i|^2 / sum_j k^I(x_i, x_j), single-output banks.
Uncertainty uncertainty_factor(std::size_t i, const GradientBank& bank);
/// Same for every sample from one pass building sum_j g_j.
std::vector<Uncertainty> uncertainty_fast(const GradientBank& bank);

/// Calls fn(i, row) for every sample with row = similarities to all samples,
/// computed blockwise with matrix products. Rows arrive in index order.
void for_each_similarity_row(const GradientBank& bank,
                             const std::function<void(std::size_t, std::span<const double>)>& fn,
                             std::size_t block_rows = 256);

struct NeighborRecord {
  std::size_t index = 0;
  bool defined = true;
  double n_soft = 0.0;
  std::vector<std::size_t> n_tau;
  std::vector<double> n_alpha;
  std::optional<double> uncertainty;
  Histogram histogram;
  std::vector<Neighbor> nearest;
};

struct NeighborReport {
  DensityConfig config;
  std::size_t n = 0;
  std::size_t output_dim = 1;
  std::vector<std::size_t> excluded;
  std::vector<NeighborRecord> records;
};

NeighborReport neighbor_report(const GradientBank& bank, const DensityConfig& config = {});

std::string neighbor_report_json(const NeighborReport& report);
/// Columns: index, N_S, N_tau@..., N_alpha@..., uncertainty.
void write_neighbor_csv(const NeighborReport& report, std::ostream& os);

double median(std::vector<double> values);

} // namespace gradsim
