#pragma once

#include "gradsim/density.hpp"
#include "gradsim/enforce.hpp"
#include "gradsim/network.hpp"
#include "gradsim/toy.hpp"
#include "gradsim/train.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace gradsim {

using ProgressFn = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Toy sinusoid sweep

/// Adam at lr 1e-4 for 80 epochs, batch 4, init gain 3. The small batch and
/// the wider init let the 5x64 tanh net fit f = 16 within the epoch budget.
TrainConfig toy_train_config();

struct SweepConfig {
  std::vector<double> frequencies = {1, 2, 4, 8, 16};
  std::size_t repeats = 5;
  std::size_t n = 2048;
  bool jitter = false;
  std::vector<std::size_t> hidden = {64, 64, 64, 64, 64};
  Activation activation = Activation::tanh;
  TrainConfig train = toy_train_config(); ///< train.seed is the base seed; repeat r uses seed + r
  DensityConfig estimators;
  /// Workers over (frequency, repeat) cells.
  std::size_t threads = 1;

  void validate() const;
};

/// Estimator column names: N_S, N_tau@t..., N_alpha@a...
std::vector<std::string> estimator_names(const DensityConfig& config);

struct SweepCell {
  double frequency = 0.0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string error;
  double final_loss = 0.0;
  double rmse = 0.0;
  std::vector<double> median; ///< per estimator, median over the dataset
  std::vector<double> mean;   ///< per estimator, mean over the dataset
};

struct SlopeFit {
  std::optional<double> slope;
  std::optional<double> intercept;
  std::size_t points = 0;
};

/// Least squares of log y on log x over the pairs with x, y > 0. Undefined with
/// fewer than two distinct x.
SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

struct SweepResult {
  std::vector<std::string> estimators;
  std::vector<double> frequencies;
  std::vector<SweepCell> cells; ///< ordered by (frequency, repeat)
  /// [estimator][frequency]: median over the non-diverged repeats of the cell
  /// medians; NaN when every repeat diverged.
  std::vector<std::vector<double>> median_over_seeds;
  std::vector<SlopeFit> fits; ///< per estimator
  std::vector<std::string> warnings;

  std::size_t estimator_index(const std::string& name) const;
};

/// Trains one network per (frequency, repeat), builds its gradient bank and
/// evaluates every estimator. Diverged cells are kept in `cells`, flagged, and
/// left out of the medians and fits.
SweepResult run_toy_sweep(const SweepConfig& config, const ProgressFn& progress = {});

/// One row per (frequency, repeat, estimator): frequency, repeat, seed,
/// estimator, median, mean, status.
void write_sweep_csv(const SweepResult& result, std::ostream& os);
/// Median-over-seeds curves, one per estimator, on log-log axes.
std::string sweep_svg(const SweepResult& result);
std::string sweep_summary_json(const SweepResult& result);

// ---------------------------------------------------------------------------
// Duplicate-input noise study

struct DuplicateNoiseSpec {
  std::size_t n_dup = 4;
  std::size_t n_sites = 8;
  double sigma = 0.1;
  std::uint64_t seed = 0;
  std::size_t trials = 50;
  std::vector<std::size_t> hidden = {32, 32};
  Activation activation = Activation::tanh;
  TrainConfig train = default_train();
  std::size_t threads = 1;

  void validate() const;
  static TrainConfig default_train();
};

struct DuplicateNoiseTrial {
  std::size_t trial = 0;
  std::vector<double> errors;  ///< yhat - y per site
  std::vector<double> factors; ///< denoising factor at the first copy of each site
  double final_loss = 0.0;
};

struct DuplicateNoiseResult {
  DuplicateNoiseSpec spec;
  std::vector<double> site_alpha;
  std::vector<double> site_truth;
  std::vector<DuplicateNoiseTrial> trials;
  /// sqrt of the mean over sites of the across-trial variance of the error.
  double error_std = 0.0;
  double error_rms = 0.0;
  double mean_factor = 0.0;
  double expected_std = 0.0; ///< sigma / sqrt(n_dup)
};

/// Sites on the unit circle with labels sin(2 pi alpha); each input repeated
/// n_dup times with i.i.d. N(0, sigma^2) label noise; a fresh noise draw and
/// network init per trial.
DuplicateNoiseResult run_duplicate_noise(const DuplicateNoiseSpec& spec, const ProgressFn& progress = {});
void write_duplicate_noise_csv(const DuplicateNoiseResult& result, std::ostream& os);
std::string duplicate_noise_json(const DuplicateNoiseResult& result);

// ---------------------------------------------------------------------------
// Enforcement demo

struct EnforceDemoConfig {
  /// "blobs" or "idx".
  std::string source = "blobs";
  BlobSpec blobs;
  std::filesystem::path idx_images;
  std::filesystem::path idx_labels;
  std::optional<std::size_t> idx_count = 2000;
  std::vector<std::size_t> hidden = {32};
  Activation activation = Activation::tanh;
  TrainConfig train = default_train();
  double aux_weight = 0.1;
  std::size_t group_batch = 8;
  double validation_fraction = 0.2;
  std::size_t eval_every = 10;
  std::size_t threads = 1;

  void validate() const;
  static TrainConfig default_train();
};

struct EnforceCurve {
  double aux_weight = 0.0;
  std::vector<AuxTraceRow> trace;
  std::vector<std::size_t> eval_steps;
  std::vector<double> validation_accuracy;
};

struct EnforceDemoResult {
  std::vector<SimilarityGroup> groups;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  std::vector<EnforceCurve> curves; ///< aux_weight 0, then the configured weight
};

/// Trains with and without the batch criterion (one group per class) and
/// records the criterion trace and validation accuracy.
EnforceDemoResult run_enforce_demo(const EnforceDemoConfig& config, const ProgressFn& progress = {});
/// Columns: step, main_loss, criterion, aux_weight for every curve.
void write_enforce_trace_csv(const EnforceDemoResult& result, std::ostream& os);
/// Columns: step, aux_weight, validation_accuracy.
void write_enforce_validation_csv(const EnforceDemoResult& result, std::ostream& os);
std::string enforce_validation_svg(const EnforceDemoResult& result);
std::string enforce_criterion_svg(const EnforceDemoResult& result);

} // namespace gradsim
