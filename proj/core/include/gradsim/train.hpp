#pragma once

#include "gradsim/dataset.hpp"
#include "gradsim/network.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace gradsim {

enum class LossKind {
  squared_error,           ///< sum_k (f_k - y_k)^2 per sample
  cross_entropy_presoftmax ///< -sum_k y_k log softmax(f)_k per sample
};

std::string_view to_string(LossKind k);
LossKind parse_loss(std::string_view name);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  AdamConfig adam;
  std::size_t epochs = 80;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::squared_error;
  /// Scale of the initialization bound (1 = uniform +-1/sqrt(fan_in)).
  double init_gain = 1.0;

  void validate() const;
};

/// Passed to the auxiliary-loss callback once per optimizer step.
struct StepContext {
  std::size_t epoch = 0;
  std::size_t step = 0; ///< global step index, starting at 0
  std::span<const std::size_t> batch;
};

/// Adds the gradient of an auxiliary term (already weighted) into `grad` and
/// returns the unweighted criterion value for the trace.
using AuxiliaryLoss =
    std::function<double(const ParamVector& params, std::span<double> grad, const StepContext& ctx)>;

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double main_loss = 0.0;
  std::optional<double> criterion;
};

struct TrainResult {
  ParamVector params;
  std::vector<double> epoch_loss; ///< mean per-sample main loss over each epoch
  std::vector<StepRecord> steps;
};

/// Per-sample loss and its gradient w.r.t. the network output.
double sample_loss(LossKind kind, std::span<const double> output, std::span<const double> label,
                   std::span<double> d_output);

/// Mini-batch Adam. Initialization draws from stream "init" of config.seed and
/// epoch shuffles from stream "shuffle"; the result is a pure function of
/// (spec, dataset, config, initial) on a given platform. When `initial` is
/// empty, ParamVector::initialize(spec, config.seed, config.init_gain) is used. Throws
/// TrainingError on a non-finite loss.
TrainResult train(const NetworkSpec& spec, const Dataset& dataset, const TrainConfig& config,
                  const AuxiliaryLoss& auxiliary = {},
                  const std::optional<ParamVector>& initial = std::nullopt);

/// Mean per-sample loss over the whole dataset.
double evaluate_loss(const NetworkSpec& spec, const ParamVector& params, const Dataset& dataset,
                     LossKind kind);

/// Full-data energy gradient grad_theta sum_j loss_j.
std::vector<double> loss_gradient(const NetworkSpec& spec, const ParamVector& params,
                                  const Dataset& dataset, LossKind kind);

} // namespace gradsim
