#include "gradsim/denoise.hpp"

#include "gradsim/density.hpp"
#include "gradsim/error.hpp"
#include "gradsim/parallel.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gradsim {

void LabeledState::validate(std::size_t n) const {
  if (noisy.size() != n || predictions.size() != n) {
    throw ShapeError("labeled state: labels and predictions must match the bank size");
  }
  if (truth && truth->size() != n) {
    throw ShapeError("labeled state: true labels must match the bank size");
  }
  if (noise_sigma && !(*noise_sigma > 0.0)) {
    throw std::invalid_argument("labeled state: noise sigma must be positive");
  }
}

LabeledState LabeledState::from_model(const NetworkSpec& spec, const ParamVector& params, const Dataset& dataset,
                                      std::size_t output, std::size_t threads) {
  dataset.validate(spec.input_dim(), spec.output_dim());
  if (output >= spec.output_dim()) {
    throw ShapeError("labeled state: output coordinate out of range");
  }
  LabeledState s;
  s.noisy.resize(dataset.size());
  s.predictions.resize(dataset.size());
  parallel_for(dataset.size(), resolve_threads(threads), [&](std::size_t j) {
    s.noisy[j] = dataset.samples[j].label[output];
    s.predictions[j] = forward(spec, params, dataset.samples[j].input)[output];
  });
  return s;
}

NormalizedColumn normalized_column_from_inner(std::size_t i, std::span<const double> inner_row) {
  NormalizedColumn c;
  c.target = i;
  for (double v : inner_row) {
    c.column_sum += v;
  }
  if (c.column_sum == 0.0 || !std::isfinite(c.column_sum)) {
    return c;
  }
  c.weights.resize(inner_row.size());
  for (std::size_t j = 0; j < inner_row.size(); ++j) {
    const double w = inner_row[j] / c.column_sum;
    c.weights[j] = w;
    if (w < 0.0) {
      c.negative_mass += w;
      ++c.negative_count;
    }
  }
  return c;
}

NormalizedColumn normalized_column(std::size_t i, const GradientBank& bank) {
  if (i >= bank.size()) {
    throw std::out_of_range("normalized_column: index out of range");
  }
  std::vector<double> row(bank.size());
  for (std::size_t j = 0; j < bank.size(); ++j) {
    row[j] = bank.inner(j, i);
  }
  return normalized_column_from_inner(i, row);
}

double neighborhood_mean(std::span<const double> values, const NormalizedColumn& column) {
  if (!column.defined()) {
    throw std::invalid_argument("neighborhood_mean: undefined column (zero column sum)");
  }
  if (values.size() != column.weights.size()) {
    throw ShapeError("neighborhood_mean: values must be index-aligned with the column");
  }
  double s = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j) {
    s += values[j] * column.weights[j];
  }
  return s;
}

namespace {

StationarityResidual residual_from_inner(std::span<const double> inner_row, const LabeledState& state) {
  StationarityResidual r;
  double sum = 0.0;
  for (std::size_t j = 0; j < inner_row.size(); ++j) {
    r.raw += (state.predictions[j] - state.noisy[j]) * inner_row[j];
    sum += inner_row[j];
  }
  if (sum != 0.0) {
    r.normalized = r.raw / sum;
  }
  return r;
}

double l2(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) {
    s += v * v;
  }
  return std::sqrt(s);
}

std::vector<double> inner_row(std::size_t i, const GradientBank& bank) {
  std::vector<double> row(bank.size());
  for (std::size_t j = 0; j < bank.size(); ++j) {
    row[j] = bank.inner(j, i);
  }
  return row;
}

double bound_from_row(const NormalizedColumn& column, std::span<const double> correlations, double c) {
  double s = 0.0;
  for (std::size_t j = 0; j < correlations.size(); ++j) {
    if (j == column.target) {
      continue;
    }
    s += std::abs(column.weights[j]) * unit_distance(correlations[j]);
  }
  return c * s;
}

} // namespace

StationarityResidual stationarity_residual(std::size_t i, const LabeledState& state, const GradientBank& bank) {
  state.validate(bank.size());
  return residual_from_inner(inner_row(i, bank), state);
}

std::optional<double> denoising_factor(const NormalizedColumn& column) {
  if (!column.defined()) {
    return std::nullopt;
  }
  return l2(column.weights);
}

std::optional<double> denoising_factor(std::size_t i, const GradientBank& bank) {
  return denoising_factor(normalized_column(i, bank));
}

std::optional<double> denoising_trace(std::size_t i, const GradientBank& bank) {
  if (i >= bank.size()) {
    throw std::out_of_range("denoising_trace: index out of range");
  }
  const std::size_t d = bank.output_dim();
  const auto di = static_cast<Eigen::Index>(d);
  std::vector<Eigen::MatrixXd> kernels(bank.size());
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(di, di);
  for (std::size_t j = 0; j < bank.size(); ++j) {
    const KernelMatrix k = bank.raw_kernel(i, j);
    kernels[j] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        k.values().data(), di, di);
    sum += kernels[j];
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sum);
  if (!lu.isInvertible()) {
    return std::nullopt;
  }
  const Eigen::MatrixXd inv = lu.inverse();
  double trace = 0.0;
  for (const auto& k : kernels) {
    trace += (inv * k).squaredNorm();
  }
  return trace;
}

std::optional<double> prediction_shift(std::size_t i, const LabeledState& state, const GradientBank& bank) {
  state.validate(bank.size());
  const NormalizedColumn c = normalized_column(i, bank);
  if (!c.defined()) {
    return std::nullopt;
  }
  return state.predictions[i] - neighborhood_mean(state.predictions, c);
}

ShiftSummary summarize(std::span<const double> values) {
  ShiftSummary s;
  s.count = values.size();
  if (values.empty()) {
    return s;
  }
  for (double v : values) {
    s.mean += v;
    s.mean_abs += std::abs(v);
  }
  s.mean /= static_cast<double>(values.size());
  s.mean_abs /= static_cast<double>(values.size());
  for (double v : values) {
    s.variance += (v - s.mean) * (v - s.mean);
  }
  s.variance /= static_cast<double>(values.size());
  return s;
}

double unit_distance(double correlation) { return std::sqrt(2.0 * std::max(0.0, 1.0 - correlation)); }

std::optional<double> lipschitz_bound(std::size_t i, const GradientBank& bank, double lipschitz_constant) {
  if (!(lipschitz_constant > 0.0)) {
    throw std::invalid_argument("lipschitz_bound: constant must be positive");
  }
  const NormalizedColumn c = normalized_column(i, bank);
  if (!c.defined()) {
    return std::nullopt;
  }
  std::vector<double> row(bank.size());
  bank.similarity_row(i, row);
  return bound_from_row(c, row, lipschitz_constant);
}

std::optional<double> estimate_lipschitz_constant(const GradientBank& bank, const LabeledState& state) {
  state.validate(bank.size());
  const std::size_t n = bank.size();
  std::vector<double> best(n, -1.0);
  parallel_for(n, bank.threads(), [&](std::size_t i) {
    if (!bank.defined(i)) {
      return;
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!bank.defined(j)) {
        continue;
      }
      const double dist = unit_distance(bank.similarity(i, j));
      if (dist < kMinUnitDistance) {
        continue;
      }
      best[i] = std::max(best[i], std::abs(state.predictions[i] - state.predictions[j]) / dist);
    }
  });
  const double c = n == 0 ? -1.0 : *std::max_element(best.begin(), best.end());
  if (c < 0.0) {
    return std::nullopt;
  }
  return c;
}

DenoiseReport denoise_report(const GradientBank& bank, const LabeledState& state) {
  state.validate(bank.size());
  if (bank.size() > 0 && bank.output_dim() != 1) {
    throw ShapeError("denoise_report: single-output bank required");
  }
  DenoiseReport report;
  report.lipschitz_constant = estimate_lipschitz_constant(bank, state);
  report.records.resize(bank.size());
  parallel_for(bank.size(), bank.threads(), [&](std::size_t i) {
    // The bound uses the same similarities the constant was estimated from.
    std::vector<double> correlations(bank.size());
    std::vector<double> inner(bank.size());
    bank.similarity_row(i, correlations);
    for (std::size_t j = 0; j < bank.size(); ++j) {
      inner[j] = j == i ? bank.inner(i, i) : bank.norm(i) * bank.norm(j) * correlations[j];
    }
    DenoiseRecord& r = report.records[i];
    r.index = i;
    const NormalizedColumn col = normalized_column_from_inner(i, inner);
    r.residual = residual_from_inner(inner, state);
    if (col.defined()) {
      r.factor = l2(col.weights);
      r.shift = state.predictions[i] - neighborhood_mean(state.predictions, col);
      r.negative_mass = col.negative_mass;
      if (report.lipschitz_constant) {
        r.bound = bound_from_row(col, correlations, *report.lipschitz_constant);
      }
    }
  });
  std::vector<double> f, s, b, res;
  for (const auto& r : report.records) {
    if (r.factor) f.push_back(*r.factor);
    if (r.shift) s.push_back(*r.shift);
    if (r.bound) b.push_back(*r.bound);
    if (r.residual.normalized) res.push_back(*r.residual.normalized);
  }
  report.factor = summarize(f);
  report.shift = summarize(s);
  report.bound = summarize(b);
  report.residual = summarize(res);
  return report;
}

namespace {

nlohmann::json opt(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) {
    return nullptr;
  }
  return *v;
}

nlohmann::json summary_json(const ShiftSummary& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"std", std::sqrt(s.variance)}, {"mean_abs", s.mean_abs}};
}

} // namespace

std::string denoise_report_json(const DenoiseReport& report) {
  nlohmann::json j;
  j["lipschitz_constant"] = opt(report.lipschitz_constant);
  j["aggregates"] = {{"factor", summary_json(report.factor)},
                     {"shift", summary_json(report.shift)},
                     {"bound", summary_json(report.bound)},
                     {"residual", summary_json(report.residual)}};
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& r : report.records) {
    samples.push_back({{"index", r.index},
                       {"factor", opt(r.factor)},
                       {"shift", opt(r.shift)},
                       {"bound", opt(r.bound)},
                       {"residual", r.residual.raw},
                       {"normalized_residual", opt(r.residual.normalized)},
                       {"negative_mass", r.negative_mass}});
  }
  j["samples"] = std::move(samples);
  return j.dump(1);
}

} // namespace gradsim
