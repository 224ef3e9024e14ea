#pragma once

#include "gradsim/dataset.hpp"

#include <cstdint>

namespace gradsim {

/// Sinusoid on the unit circle: input (cos 2 pi a, sin 2 pi a), label
/// sin(2 pi f a), with a_j = j / n (optionally jittered within its cell).
struct ToySpec {
  double frequency = 1.0;
  std::size_t n = 2048;
  std::uint64_t seed = 0;
  bool jitter = false;

  void validate() const;
};

Dataset gen_toy(const ToySpec& spec);

/// The circle position alpha in [0, 1) of each generated sample.
std::vector<double> toy_positions(const ToySpec& spec);

/// Two isotropic Gaussian blobs in 2-D with labels -1 / +1, alternating.
struct BlobSpec {
  std::size_t n = 256;
  double separation = 3.0;
  double spread = 1.0;
  std::uint64_t seed = 0;
};

Dataset gen_blobs(const BlobSpec& spec);

} // namespace gradsim
