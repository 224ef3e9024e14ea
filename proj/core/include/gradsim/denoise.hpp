#pragma once

#include "gradsim/bank.hpp"
#include "gradsim/dataset.hpp"
#include "gradsim/network.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gradsim {

/// Labels and predictions of a single-output model over a dataset.
struct LabeledState {
  std::vector<double> noisy;       ///< labels as given in the dataset
  std::vector<double> predictions; ///< f(x_j)
  std::optional<std::vector<double>> truth;
  std::optional<double> noise_sigma;

  std::size_t size() const { return noisy.size(); }
  void validate(std::size_t n) const;

  /// Predictions of output coordinate `output` and the matching label
  /// coordinate.
  static LabeledState from_model(const NetworkSpec& spec, const ParamVector& params, const Dataset& dataset,
                                 std::size_t output = 0, std::size_t threads = 1);
};

/// Weights w_j = k^I(x_j, x_i) / sum_j k^I(x_j, x_i). Negative weights are
/// kept and reported.
struct NormalizedColumn {
  std::size_t target = 0;
  std::vector<double> weights; ///< empty when the column sum is 0
  double column_sum = 0.0;
  double negative_mass = 0.0; ///< sum of the negative weights
  std::size_t negative_count = 0;

  bool defined() const { return !weights.empty(); }
};

NormalizedColumn normalized_column(std::size_t i, const GradientBank& bank);
/// Same from a precomputed row of k^I(x_j, x_i).
NormalizedColumn normalized_column_from_inner(std::size_t i, std::span<const double> inner_row);

/// E_k[a] = sum_j a_j w_j.
double neighborhood_mean(std::span<const double> values, const NormalizedColumn& column);

struct StationarityResidual {
  double raw = 0.0;                 ///< sum_j (yhat_j - ytilde_j) k^I(x_j, x_i)
  std::optional<double> normalized; ///< raw / column sum
};

StationarityResidual stationarity_residual(std::size_t i, const LabeledState& state, const GradientBank& bank);

/// |w|_2, in [1/sqrt(N), 1] for nonnegative weights.
std::optional<double> denoising_factor(const NormalizedColumn& column);
std::optional<double> denoising_factor(std::size_t i, const GradientBank& bank);

/// Multi-output form: with W_j = (sum_j K(x_i, x_j))^{-1} K(x_i, x_j), the
/// trace of sum_j W_j W_j^T, i.e. sum_j |W_j|_F^2. For d = 1 it equals the
/// squared denoising factor. Empty when the summed kernel is singular.
std::optional<double> denoising_trace(std::size_t i, const GradientBank& bank);

/// yhat_i - E_k[yhat].
std::optional<double> prediction_shift(std::size_t i, const LabeledState& state, const GradientBank& bank);

struct ShiftSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
  double mean_abs = 0.0;
};

ShiftSummary summarize(std::span<const double> values);

/// |u_i - u_j| for unit gradients, written through the correlation as
/// sqrt(2 (1 - k^C)) with k^C clamped at 1.
double unit_distance(double correlation);

/// sqrt(2) C E_{|k|}[sqrt(1 - k^C(x_i, .))], using |w_j| as weights so the
/// bound holds for columns with negative entries too.
std::optional<double> lipschitz_bound(std::size_t i, const GradientBank& bank, double lipschitz_constant);

/// max over pairs of |f(x) - f(x')| / |u - u'|, skipping pairs closer than
/// kMinUnitDistance. Empty when every pair is skipped.
inline constexpr double kMinUnitDistance = 1e-9;
std::optional<double> estimate_lipschitz_constant(const GradientBank& bank, const LabeledState& state);

struct DenoiseRecord {
  std::size_t index = 0;
  std::optional<double> factor;
  std::optional<double> shift;
  std::optional<double> bound;
  StationarityResidual residual;
  double negative_mass = 0.0;
};

struct DenoiseReport {
  std::optional<double> lipschitz_constant;
  std::vector<DenoiseRecord> records;
  ShiftSummary factor;
  ShiftSummary shift;
  ShiftSummary bound;
  ShiftSummary residual;
};

/// All per-sample quantities from one blockwise pass over the similarity rows.
DenoiseReport denoise_report(const GradientBank& bank, const LabeledState& state);
std::string denoise_report_json(const DenoiseReport& report);

} // namespace gradsim
