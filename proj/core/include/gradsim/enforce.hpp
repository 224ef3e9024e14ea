#pragma once

#include "gradsim/bank.hpp"
#include "gradsim/dataset.hpp"
#include "gradsim/network.hpp"
#include "gradsim/train.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace gradsim {

enum class PairingMode { all_pairs, two_batch };

std::string_view to_string(PairingMode m);
PairingMode parse_pairing_mode(std::string_view name);

/// Samples whose gradients should be made similar.
struct SimilarityGroup {
  std::string name;
  std::vector<std::size_t> indices;
  PairingMode mode = PairingMode::two_batch;
  std::size_t batch_size = 1; ///< n_B in two-batch mode
  /// Output coordinate whose gradient is compared (classification: the class).
  std::size_t output = 0;

  void validate(std::size_t dataset_size) const;
};

std::vector<SimilarityGroup> parse_groups(std::string_view json_text);
std::string groups_to_json(std::span<const SimilarityGroup> groups);

struct PairLoss {
  double value = 0.0;           ///< -k^C(x, x')
  std::vector<double> gradient; ///< d value / d theta; empty when skipped
  bool skipped = false;         ///< a gradient had zero norm
};

/// -k^C(x, x') and its parameter gradient through two Hessian-vector products.
PairLoss pair_loss(const NetworkSpec& spec, const ParamVector& params, std::span<const double> x,
                   std::span<const double> x_other, std::optional<std::size_t> output = std::nullopt);

struct GroupStats {
  double mean_pairwise = 0.0; ///< mean of k^C over distinct pairs
  double mean_norm_sq = 0.0;  ///< |mu|^2, mu = mean normalized gradient
  double variance = 0.0;      ///< mean |u_i - mu|^2
};

/// Statistics of the normalized gradients of a group, single-output bank.
GroupStats group_stats(std::span<const std::size_t> indices, const GradientBank& bank);

struct BatchCriterion {
  std::optional<double> value;  ///< empty when a batch mean gradient vanishes
  std::vector<double> gradient; ///< empty when not requested or undefined
};

/// n_B |mu_1 - mu_2|^2 / (|mu_1| |mu_2|) with mu_k the mean raw gradient over
/// batch k.
BatchCriterion batch_criterion(const NetworkSpec& spec, const ParamVector& params, const Dataset& dataset,
                               std::span<const std::size_t> batch1, std::span<const std::size_t> batch2,
                               std::size_t output = 0, bool with_gradient = true, std::size_t threads = 1);

/// sum_i (N_S(x_i) / n - q)^2.
double density_homogeneity_loss(const GradientBank& bank, double q);

struct AuxTraceRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double main_loss = 0.0;
  std::optional<double> criterion;
  double aux_weight = 0.0;
};

struct AuxTrainResult {
  TrainResult train;
  std::vector<AuxTraceRow> trace;
};

/// Plain training plus aux_weight times the batch criterion of two fresh
/// disjoint batches drawn from one group per step. Groups are picked
/// uniformly and batches drawn without replacement from stream "groups", so
/// the main shuffle is untouched and aux_weight = 0 reproduces train().
/// All-pairs groups use minus their mean pairwise k^C instead. `observer`
/// sees the parameters before each step's update.
using StepObserver = std::function<void(const ParamVector& params, std::size_t step)>;

AuxTrainResult train_with_auxiliary(const NetworkSpec& spec, const Dataset& dataset,
                                    std::span<const SimilarityGroup> groups, const TrainConfig& config,
                                    double aux_weight, std::size_t threads = 1,
                                    const std::optional<ParamVector>& initial = std::nullopt,
                                    const StepObserver& observer = {});

/// Columns: step, main_loss, criterion, aux_weight.
void write_trace_csv(std::span<const AuxTraceRow> trace, std::ostream& os);

} // namespace gradsim
