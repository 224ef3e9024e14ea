#include "gradsim/train.hpp"

#include "engine.hpp"
#include "gradsim/error.hpp"
#include "gradsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace gradsim {

std::string_view to_string(LossKind k) {
  return k == LossKind::squared_error ? "squared_error" : "cross_entropy_presoftmax";
}

LossKind parse_loss(std::string_view name) {
  if (name == "squared_error" || name == "mse") {
    return LossKind::squared_error;
  }
  if (name == "cross_entropy_presoftmax" || name == "cross_entropy") {
    return LossKind::cross_entropy_presoftmax;
  }
  throw std::invalid_argument("unknown loss '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (epochs < 1) {
    throw std::invalid_argument("epochs must be at least 1");
  }
  if (batch_size < 1) {
    throw std::invalid_argument("batch size must be at least 1");
  }
  if (!(init_gain > 0.0) || !std::isfinite(init_gain)) {
    throw std::invalid_argument("initialization gain must be positive");
  }
}

double sample_loss(LossKind kind, std::span<const double> output, std::span<const double> label,
                   std::span<double> d_output) {
  if (kind == LossKind::squared_error) {
    double loss = 0.0;
    for (std::size_t k = 0; k < output.size(); ++k) {
      const double r = output[k] - label[k];
      loss += r * r;
      d_output[k] = 2.0 * r;
    }
    return loss;
  }
  const double zmax = *std::max_element(output.begin(), output.end());
  double denom = 0.0;
  for (double z : output) {
    denom += std::exp(z - zmax);
  }
  const double lse = zmax + std::log(denom);
  const double mass = std::accumulate(label.begin(), label.end(), 0.0);
  double loss = 0.0;
  for (std::size_t k = 0; k < output.size(); ++k) {
    loss -= label[k] * (output[k] - lse);
    d_output[k] = mass * std::exp(output[k] - lse) - label[k];
  }
  return loss;
}

TrainResult train(const NetworkSpec& spec, const Dataset& dataset, const TrainConfig& config,
                  const AuxiliaryLoss& auxiliary, const std::optional<ParamVector>& initial) {
  spec.validate();
  config.validate();
  if (dataset.empty()) {
    throw std::invalid_argument("cannot train on an empty dataset");
  }
  dataset.validate(spec.input_dim(), spec.output_dim());

  TrainResult result;
  result.params = initial ? *initial : ParamVector::initialize(spec, config.seed, config.init_gain);
  result.params.check_matches(spec);
  ParamVector& params = result.params;
  const auto& layout = params.layout();
  const std::size_t p = params.size();
  const std::size_t n = dataset.size();
  const std::size_t d = spec.output_dim();

  std::vector<double> m(p, 0.0);
  std::vector<double> v(p, 0.0);
  std::vector<double> grad(p);
  std::vector<double> sample_grad(p);
  std::vector<double> d_out(d);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng shuffle_rng(config.seed, "shuffle");
  detail::Workspace<double> ws(spec);

  const AdamConfig& adam = config.adam;
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index, ++step) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::size_t bs = end - start;
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const Sample& s = dataset.samples[order[b]];
        detail::run_forward<double, double>(spec, layout, params.values(), s.input, ws);
        batch_loss += sample_loss(config.loss, ws.act.back(), s.label, d_out);
        detail::run_backward<double>(spec, layout, params.values(), ws, d_out, sample_grad);
        for (std::size_t k = 0; k < p; ++k) {
          grad[k] += sample_grad[k];
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batch_index),
                            epoch, batch_index);
      }
      const double inv = 1.0 / static_cast<double>(bs);
      for (double& g : grad) {
        g *= inv;
      }
      StepRecord record{step, epoch, batch_loss * inv, std::nullopt};
      if (auxiliary) {
        const StepContext ctx{epoch, step,
                              std::span<const std::size_t>(order).subspan(start, bs)};
        const double crit = auxiliary(params, grad, ctx);
        if (!std::isfinite(crit)) {
          throw TrainingError("non-finite auxiliary criterion at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch_index),
                              epoch, batch_index);
        }
        record.criterion = crit;
      }
      result.steps.push_back(record);
      epoch_sum += batch_loss;

      beta1_pow *= adam.beta1;
      beta2_pow *= adam.beta2;
      const double c1 = 1.0 / (1.0 - beta1_pow);
      const double c2 = 1.0 / (1.0 - beta2_pow);
      auto theta = params.values();
      for (std::size_t k = 0; k < p; ++k) {
        m[k] = adam.beta1 * m[k] + (1.0 - adam.beta1) * grad[k];
        v[k] = adam.beta2 * v[k] + (1.0 - adam.beta2) * grad[k] * grad[k];
        theta[k] -= adam.lr * (m[k] * c1) / (std::sqrt(v[k] * c2) + adam.eps);
      }
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(n));
  }
  return result;
}

double evaluate_loss(const NetworkSpec& spec, const ParamVector& params, const Dataset& dataset,
                     LossKind kind) {
  if (dataset.empty()) {
    return 0.0;
  }
  std::vector<double> d_out(spec.output_dim());
  double total = 0.0;
  for (const Sample& s : dataset.samples) {
    const std::vector<double> out = forward(spec, params, s.input);
    total += sample_loss(kind, out, s.label, d_out);
  }
  return total / static_cast<double>(dataset.size());
}

std::vector<double> loss_gradient(const NetworkSpec& spec, const ParamVector& params,
                                  const Dataset& dataset, LossKind kind) {
  params.check_matches(spec);
  dataset.validate(spec.input_dim(), spec.output_dim());
  const std::size_t p = params.size();
  std::vector<double> total(p, 0.0);
  std::vector<double> g(p);
  std::vector<double> d_out(spec.output_dim());
  detail::Workspace<double> ws(spec);
  for (const Sample& s : dataset.samples) {
    detail::run_forward<double, double>(spec, params.layout(), params.values(), s.input, ws);
    sample_loss(kind, ws.act.back(), s.label, d_out);
    detail::run_backward<double>(spec, params.layout(), params.values(), ws, d_out, g);
    for (std::size_t k = 0; k < p; ++k) {
      total[k] += g[k];
    }
  }
  return total;
}

} // namespace gradsim
