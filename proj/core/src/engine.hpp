#pragma once

// Dense forward/reverse passes templated on the scalar type, so that the same
// code yields plain gradients (double) and Hessian-vector products (Dual).

#include "gradsim/network.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace gradsim::detail {

/// Forward-mode dual number a + b*t with t^2 = 0.
struct Dual {
  double v = 0.0;
  double t = 0.0;

  Dual() = default;
  constexpr Dual(double value, double tangent = 0.0) : v(value), t(tangent) {}

  friend constexpr Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.t + b.t}; }
  friend constexpr Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.t - b.t}; }
  friend constexpr Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.v * b.t + a.t * b.v}; }
  Dual& operator+=(Dual b) {
    v += b.v;
    t += b.t;
    return *this;
  }
};

inline double activate(Activation a, double z) {
  switch (a) {
  case Activation::tanh:
    return std::tanh(z);
  case Activation::relu:
    return z > 0.0 ? z : 0.0;
  case Activation::sigmoid:
    return 1.0 / (1.0 + std::exp(-z));
  case Activation::identity:
    break;
  }
  return z;
}

// ReLU derivative at exactly 0 is taken as 0.
inline double activate_d1(Activation a, double z) {
  switch (a) {
  case Activation::tanh: {
    const double y = std::tanh(z);
    return 1.0 - y * y;
  }
  case Activation::relu:
    return z > 0.0 ? 1.0 : 0.0;
  case Activation::sigmoid: {
    const double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 - s);
  }
  case Activation::identity:
    break;
  }
  return 1.0;
}

inline double activate_d2(Activation a, double z) {
  switch (a) {
  case Activation::tanh: {
    const double y = std::tanh(z);
    return -2.0 * y * (1.0 - y * y);
  }
  case Activation::sigmoid: {
    const double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 - s) * (1.0 - 2.0 * s);
  }
  case Activation::relu:
  case Activation::identity:
    break;
  }
  return 0.0;
}

inline Dual activate(Activation a, Dual z) { return {activate(a, z.v), activate_d1(a, z.v) * z.t}; }
inline Dual activate_d1(Activation a, Dual z) {
  return {activate_d1(a, z.v), activate_d2(a, z.v) * z.t};
}

template <class T> struct Workspace {
  std::vector<std::vector<T>> pre;   // z_l, one per affine map
  std::vector<std::vector<T>> act;   // act[0] = x, act[l + 1] = sigma(z_l)
  std::vector<std::vector<T>> delta; // d(seed . f)/dz_l

  explicit Workspace(const NetworkSpec& spec) {
    const std::size_t depth = spec.depth();
    pre.resize(depth);
    delta.resize(depth);
    act.resize(depth + 1);
    act[0].resize(spec.layer_sizes[0]);
    for (std::size_t l = 0; l < depth; ++l) {
      pre[l].resize(spec.layer_sizes[l + 1]);
      delta[l].resize(spec.layer_sizes[l + 1]);
      act[l + 1].resize(spec.layer_sizes[l + 1]);
    }
  }
};

/// Fills ws.pre / ws.act. `layout` must be make_layout(spec).
template <class T, class X>
void run_forward(const NetworkSpec& spec, const std::vector<LayoutEntry>& layout,
                 std::span<const T> theta, std::span<const X> x, Workspace<T>& ws) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    ws.act[0][i] = T(x[i]);
  }
  for (std::size_t l = 0; l < spec.depth(); ++l) {
    const LayoutEntry& w = layout[2 * l];
    const LayoutEntry& b = layout[2 * l + 1];
    const T* wp = theta.data() + w.offset;
    const T* bp = theta.data() + b.offset;
    const std::vector<T>& in = ws.act[l];
    std::vector<T>& z = ws.pre[l];
    const Activation a = spec.activation_after(l);
    for (std::size_t r = 0; r < w.rows; ++r) {
      T acc = bp[r];
      const T* wr = wp + r * w.cols;
      for (std::size_t c = 0; c < w.cols; ++c) {
        acc += wr[c] * in[c];
      }
      z[r] = acc;
      ws.act[l + 1][r] = activate(a, acc);
    }
  }
}

/// Reverse pass after run_forward: writes grad_theta(seed . f(x)) into `grad`
/// (size p, overwritten).
template <class T>
void run_backward(const NetworkSpec& spec, const std::vector<LayoutEntry>& layout,
                  std::span<const T> theta, Workspace<T>& ws, std::span<const T> seed,
                  std::span<T> grad) {
  const std::size_t depth = spec.depth();
  {
    const Activation a = spec.activation_after(depth - 1);
    for (std::size_t r = 0; r < seed.size(); ++r) {
      ws.delta[depth - 1][r] = seed[r] * activate_d1(a, ws.pre[depth - 1][r]);
    }
  }
  for (std::size_t l = depth; l-- > 0;) {
    const LayoutEntry& w = layout[2 * l];
    const LayoutEntry& b = layout[2 * l + 1];
    const std::vector<T>& delta = ws.delta[l];
    const std::vector<T>& in = ws.act[l];
    T* gw = grad.data() + w.offset;
    T* gb = grad.data() + b.offset;
    for (std::size_t r = 0; r < w.rows; ++r) {
      T* gr = gw + r * w.cols;
      for (std::size_t c = 0; c < w.cols; ++c) {
        gr[c] = delta[r] * in[c];
      }
      gb[r] = delta[r];
    }
    if (l == 0) {
      break;
    }
    const T* wp = theta.data() + w.offset;
    const Activation a = spec.activation_after(l - 1);
    std::vector<T>& prev = ws.delta[l - 1];
    for (std::size_t c = 0; c < w.cols; ++c) {
      prev[c] = T(0.0);
    }
    for (std::size_t r = 0; r < w.rows; ++r) {
      const T* wr = wp + r * w.cols;
      const T dr = delta[r];
      for (std::size_t c = 0; c < w.cols; ++c) {
        prev[c] += wr[c] * dr;
      }
    }
    for (std::size_t c = 0; c < w.cols; ++c) {
      prev[c] = prev[c] * activate_d1(a, ws.pre[l - 1][c]);
    }
  }
}

void check_input(const NetworkSpec& spec, const ParamVector& params, std::span<const double> x);

} // namespace gradsim::detail
