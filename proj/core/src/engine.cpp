#include "engine.hpp"

#include "gradsim/error.hpp"

#include <cmath>
#include <string>

namespace gradsim {
namespace detail {

void check_input(const NetworkSpec& spec, const ParamVector& params, std::span<const double> x) {
  spec.validate();
  params.check_matches(spec);
  if (x.size() != spec.input_dim()) {
    throw ShapeError("input has " + std::to_string(x.size()) + " values, network expects " +
                     std::to_string(spec.input_dim()));
  }
}

} // namespace detail

namespace {

std::size_t select_output(const NetworkSpec& spec, std::optional<std::size_t> output) {
  if (!output) {
    if (spec.output_dim() != 1) {
      throw ShapeError("network has " + std::to_string(spec.output_dim()) +
                       " outputs; select an output coordinate");
    }
    return 0;
  }
  if (*output >= spec.output_dim()) {
    throw ShapeError("output coordinate " + std::to_string(*output) + " out of range");
  }
  return *output;
}

} // namespace

std::vector<double> forward(const NetworkSpec& spec, const ParamVector& params,
                            std::span<const double> x) {
  detail::check_input(spec, params, x);
  detail::Workspace<double> ws(spec);
  detail::run_forward<double, double>(spec, params.layout(), params.values(), x, ws);
  return ws.act.back();
}

ForwardTrace forward_trace(const NetworkSpec& spec, const ParamVector& params,
                           std::span<const double> x) {
  detail::check_input(spec, params, x);
  detail::Workspace<double> ws(spec);
  detail::run_forward<double, double>(spec, params.layout(), params.values(), x, ws);
  return ForwardTrace{std::move(ws.pre), std::move(ws.act)};
}

GradientMatrix per_sample_gradient(const NetworkSpec& spec, const ParamVector& params,
                                   std::span<const double> x) {
  detail::check_input(spec, params, x);
  const std::size_t d = spec.output_dim();
  const std::size_t p = params.size();
  detail::Workspace<double> ws(spec);
  detail::run_forward<double, double>(spec, params.layout(), params.values(), x, ws);
  std::vector<double> values(d * p);
  std::vector<double> seed(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    seed.assign(d, 0.0);
    seed[i] = 1.0;
    detail::run_backward<double>(spec, params.layout(), params.values(), ws, seed,
                                 std::span<double>(values).subspan(i * p, p));
  }
  return GradientMatrix(d, p, std::move(values));
}

std::vector<double> vector_jacobian(const NetworkSpec& spec, const ParamVector& params,
                                    std::span<const double> x, std::span<const double> seed) {
  detail::check_input(spec, params, x);
  if (seed.size() != spec.output_dim()) {
    throw ShapeError("cotangent length does not match output dimension");
  }
  detail::Workspace<double> ws(spec);
  detail::run_forward<double, double>(spec, params.layout(), params.values(), x, ws);
  std::vector<double> grad(params.size());
  detail::run_backward<double>(spec, params.layout(), params.values(), ws, seed, grad);
  return grad;
}

std::vector<double> grad_of_inner_product(const NetworkSpec& spec, const ParamVector& params,
                                          std::span<const double> x, std::span<const double> w,
                                          std::optional<std::size_t> output) {
  detail::check_input(spec, params, x);
  const std::size_t c = select_output(spec, output);
  const std::size_t p = params.size();
  if (w.size() != p) {
    throw ShapeError("direction vector length does not match parameter count");
  }
  using detail::Dual;
  std::vector<Dual> theta(p);
  const auto values = params.values();
  for (std::size_t k = 0; k < p; ++k) {
    theta[k] = Dual(values[k], w[k]);
  }
  detail::Workspace<Dual> ws(spec);
  detail::run_forward<Dual, double>(spec, params.layout(), theta, x, ws);
  std::vector<Dual> seed(spec.output_dim(), Dual(0.0));
  seed[c] = Dual(1.0);
  std::vector<Dual> grad(p);
  detail::run_backward<Dual>(spec, params.layout(), theta, ws, seed, grad);
  std::vector<double> hv(p);
  for (std::size_t k = 0; k < p; ++k) {
    hv[k] = grad[k].t;
  }
  return hv;
}

std::vector<double> grad_of_inner_product_fd(const NetworkSpec& spec, const ParamVector& params,
                                             std::span<const double> x,
                                             std::span<const double> w,
                                             std::optional<std::size_t> output) {
  detail::check_input(spec, params, x);
  const std::size_t c = select_output(spec, output);
  const std::size_t p = params.size();
  if (w.size() != p) {
    throw ShapeError("direction vector length does not match parameter count");
  }
  double wn = 0.0;
  for (double v : w) {
    wn += v * v;
  }
  wn = std::sqrt(wn);
  if (wn == 0.0) {
    return std::vector<double>(p, 0.0);
  }
  const double h = 1e-4 / wn;
  std::vector<double> seed(spec.output_dim(), 0.0);
  seed[c] = 1.0;
  const auto base = params.values();
  ParamVector plus = params;
  ParamVector minus = params;
  for (std::size_t k = 0; k < p; ++k) {
    plus.values()[k] = base[k] + h * w[k];
    minus.values()[k] = base[k] - h * w[k];
  }
  const std::vector<double> gp = vector_jacobian(spec, plus, x, seed);
  const std::vector<double> gm = vector_jacobian(spec, minus, x, seed);
  std::vector<double> hv(p);
  for (std::size_t k = 0; k < p; ++k) {
    hv[k] = (gp[k] - gm[k]) / (2.0 * h);
  }
  return hv;
}

} // namespace gradsim
