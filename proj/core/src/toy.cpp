#include "gradsim/toy.hpp"

#include "gradsim/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gradsim {

void ToySpec::validate() const {
  if (!(frequency > 0.0)) {
    throw std::invalid_argument("toy frequency must be positive");
  }
  if (n < 8) {
    throw std::invalid_argument("toy dataset needs at least 8 points");
  }
}

std::vector<double> toy_positions(const ToySpec& spec) {
  spec.validate();
  std::vector<double> alpha(spec.n);
  CounterRng rng(spec.seed, "toy-jitter");
  const double step = 1.0 / static_cast<double>(spec.n);
  for (std::size_t j = 0; j < spec.n; ++j) {
    const double offset = spec.jitter ? rng.uniform() : 0.0;
    alpha[j] = (static_cast<double>(j) + offset) * step;
  }
  return alpha;
}

Dataset gen_toy(const ToySpec& spec) {
  const std::vector<double> alpha = toy_positions(spec);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Dataset data;
  data.samples.reserve(alpha.size());
  for (double a : alpha) {
    data.samples.push_back(
        {{std::cos(two_pi * a), std::sin(two_pi * a)}, {std::sin(two_pi * spec.frequency * a)}});
  }
  data.provenance = {{"generator", "toy-sinusoid"},
                     {"frequency", std::to_string(spec.frequency)},
                     {"n", std::to_string(spec.n)},
                     {"sampling", spec.jitter ? "jittered" : "equally-spaced"},
                     {"seed", std::to_string(spec.seed)}};
  return data;
}

Dataset gen_blobs(const BlobSpec& spec) {
  if (spec.n < 2) {
    throw std::invalid_argument("blob dataset needs at least 2 points");
  }
  CounterRng rng(spec.seed, "blobs");
  Dataset data;
  data.samples.reserve(spec.n);
  for (std::size_t j = 0; j < spec.n; ++j) {
    const double sign = (j % 2 == 0) ? -1.0 : 1.0;
    const double cx = sign * spec.separation / 2.0;
    const double x0 = cx + spec.spread * rng.normal();
    const double x1 = spec.spread * rng.normal();
    data.samples.push_back({{x0, x1}, {sign}});
  }
  data.provenance = {{"generator", "two-blobs"},
                     {"n", std::to_string(spec.n)},
                     {"separation", std::to_string(spec.separation)},
                     {"spread", std::to_string(spec.spread)},
                     {"seed", std::to_string(spec.seed)}};
  return data;
}

} // namespace gradsim
