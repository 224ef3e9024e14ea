// Acceptance suite: one line per criterion, non-zero exit if any fails.
//
//   gradsim_acceptance            run everything
//   gradsim_acceptance 2 5 9      run a subset by number

#include "oracles.hpp"

#include "gradsim/bank.hpp"
#include "gradsim/denoise.hpp"
#include "gradsim/density.hpp"
#include "gradsim/enforce.hpp"
#include "gradsim/experiments.hpp"
#include "gradsim/kernels.hpp"
#include "gradsim/train.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>

using namespace gradsim;
using namespace gradsim::test;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome neighbor_scaling() {
  SweepConfig cfg;
  cfg.threads = 4;
  const SweepResult res = run_toy_sweep(cfg, [](const std::string& m) { std::fprintf(stderr, "  %s\n", m.c_str()); });
  const auto& fit = res.fits[res.estimator_index("N_S")];
  std::ostringstream medians;
  for (double m : res.median_over_seeds[res.estimator_index("N_S")]) {
    medians << ' ' << fmt("%.1f", m);
  }
  if (!fit.slope) {
    return {false, "slope undefined; medians" + medians.str()};
  }
  const bool ok = *fit.slope >= -1.4 && *fit.slope <= -0.6;
  return {ok, fmt("slope %.3f in [-1.4, -0.6]; medians", *fit.slope) + medians.str() +
                  fmt("; %zu warning(s)", res.warnings.size())};
}

Outcome fast_vs_naive() {
  const TrainedToy net = trained_toy(256, {70, 70}, 2);
  const GradientBank bank = GradientBank::build(net.spec, net.params, net.data);
  const std::vector<double> fast = count_soft_fast(bank);
  double worst = 0.0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double naive = count_soft_naive(i, bank);
    worst = std::max(worst, std::abs(fast[i] - naive) / std::max(std::abs(naive), 1e-300));
  }

  const Dataset big = gen_toy({.frequency = 2.0, .n = 1024, .seed = 7, .jitter = false});
  const GradientBank bank_big = GradientBank::build(net.spec, net.params, big);
  auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> fast_big = count_soft_fast(bank_big);
  const double t_fast = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  double sink = 0.0;
  for (std::size_t i = 0; i < bank_big.size(); ++i) {
    sink += count_soft_naive(i, bank_big);
  }
  const double t_naive = seconds_since(t0);
  const double speedup = t_naive / std::max(t_fast, 1e-9);
  const bool ok = worst <= 1e-9 && speedup >= 10.0 && std::isfinite(sink) && fast_big.size() == 1024;
  return {ok, fmt("p=%zu max rel dev %.2e <= 1e-9; n=1024 speedup %.0fx >= 10 (fast %.4fs, naive %.3fs)",
                  bank.param_count(), worst, speedup, t_fast, t_naive)};
}

Outcome gradient_correctness() {
  CounterRng rng(101, "acceptance-gradients");
  double worst_grad = 0.0, worst_hvp = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t in = 1 + rng.below(3), out = 1 + rng.below(3);
    const NetworkSpec spec = random_spec(rng, in, out);
    const ParamVector params = random_params(spec, rng);
    const std::vector<double> x = random_vector(rng, in, 2.0);
    const GradientMatrix g = per_sample_gradient(spec, params, x);
    for (std::size_t c = 0; c < out; ++c) {
      worst_grad = std::max(worst_grad, relative_error(g.row(c), fd_gradient(spec, params, x, c)));
    }
    const std::size_t c = rng.below(out);
    const std::vector<double> w = random_vector(rng, params.size());
    const std::vector<double> hv = grad_of_inner_product(spec, params, x, w, c);
    worst_hvp = std::max(worst_hvp, relative_error(hv, fd_hvp(spec, params, x, w, c), 1e-8));
  }
  return {worst_grad <= 1e-5 && worst_hvp <= 1e-4,
          fmt("max rel err gradient %.2e <= 1e-5, HVP %.2e <= 1e-4 over 100 instances", worst_grad, worst_hvp)};
}

Outcome kernel_matrix_properties() {
  CounterRng rng(202, "acceptance-kernel");
  double self_dev = 0.0, sym_dev = 0.0, coef = 0.0, frob_excess = -1e300, trace_excess = -1e300, oracle_dev = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t d = 2 + rng.below(2);
    const NetworkSpec spec = random_spec(rng, 2, d, 2, 8);
    if (spec.param_count() < 3 * d) {
      --inst; // too few parameters for full-rank self kernels
      continue;
    }
    const ParamVector params = random_params(spec, rng);
    const auto x = random_vector(rng, 2, 2.0), y = random_vector(rng, 2, 2.0);
    const GradientMatrix gx = per_sample_gradient(spec, params, x), gy = per_sample_gradient(spec, params, y);
    const KernelMatrix kxx = kernel_matrix(gx, gx), kyy = kernel_matrix(gy, gy);
    const NormalizedKernel self = normalize_kernel_matrix(kxx, kxx, kxx);
    const NormalizedKernel xy = normalize_kernel_matrix(kernel_matrix(gx, gy), kxx, kyy);
    const NormalizedKernel yx = normalize_kernel_matrix(kernel_matrix(gy, gx), kyy, kxx);
    if (!self.matrix || !xy.matrix || !yx.matrix) {
      return {false, fmt("instance %d: undefined normalized kernel", inst)};
    }
    const Eigen::MatrixXd oracle = whitened_cross(gx, gy);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        self_dev = std::max(self_dev, std::abs((*self.matrix)(a, b) - (a == b ? 1.0 : 0.0)));
        sym_dev = std::max(sym_dev, std::abs((*xy.matrix)(a, b) - (*yx.matrix)(b, a)));
        coef = std::max(coef, std::abs((*xy.matrix)(a, b)));
        oracle_dev = std::max(oracle_dev, std::abs((*xy.matrix)(a, b) -
                                                   oracle(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))));
      }
    }
    frob_excess = std::max(frob_excess, xy.matrix->frobenius() - std::sqrt(static_cast<double>(d)));
    const double tr = trace_similarity(*xy.matrix).value_or(2.0);
    trace_excess = std::max(trace_excess, std::abs(tr) - 1.0);
  }
  const bool ok = self_dev <= 1e-6 && sym_dev <= 1e-10 && coef <= 1.0 + 1e-9 && frob_excess <= 1e-9 &&
                  trace_excess <= 0.0 && oracle_dev <= 1e-6;
  return {ok, fmt("|K^C(x,x)-I| %.1e, transpose %.1e, max|coef| %.9f, |K^C|_F-sqrt(d) %.1e, |trace|-1 %.1e, "
                  "vs eigen oracle %.1e",
                  self_dev, sym_dev, coef, frob_excess, trace_excess, oracle_dev)};
}

Outcome rotation_kernel() {
  CounterRng rng(303, "acceptance-rotation");
  double worst_brute = 0.0, worst_invariance = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    Eigen::Matrix2d m;
    m << rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1);
    const auto as_kernel = [](const Eigen::Matrix2d& a) {
      return KernelMatrix(2, {a(0, 0), a(0, 1), a(1, 0), a(1, 1)}, KernelKind::normalized);
    };
    const double closed = *rot_similarity(as_kernel(m)).value;
    worst_brute = std::max(worst_brute, std::abs(closed - brute_force_rotation(m, 100000)));
    const double phi = rng.uniform(0, 2 * std::numbers::pi), psi = rng.uniform(0, 2 * std::numbers::pi);
    Eigen::Matrix2d r1, r2;
    r1 << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
    r2 << std::cos(psi), -std::sin(psi), std::sin(psi), std::cos(psi);
    for (const Eigen::Matrix2d& rotated : {Eigen::Matrix2d(r1 * m), Eigen::Matrix2d(m * r2), Eigen::Matrix2d(r1 * m * r2)}) {
      worst_invariance = std::max(worst_invariance, std::abs(*rot_similarity(as_kernel(rotated)).value - closed));
    }
  }
  return {worst_brute <= 1e-6 && worst_invariance <= 1e-9,
          fmt("closed form vs 1e5-angle maximum %.1e <= 1e-6; rotation invariance %.1e <= 1e-9", worst_brute,
              worst_invariance)};
}

Outcome denoising_extremes() {
  const std::vector<double> uniform(25, 0.7);
  const double f_uniform = *denoising_factor(normalized_column_from_inner(0, uniform));
  std::vector<double> onehot(25, 0.0);
  onehot[3] = 2.5;
  const double f_onehot = *denoising_factor(normalized_column_from_inner(3, onehot));

  const TrainedToy net = trained_toy(256, {32, 32}, 20);
  const GradientBank bank = GradientBank::build(net.spec, net.params, net.data);
  const std::size_t target = 41;
  const NormalizedColumn col = normalized_column(target, bank);
  const double factor = *denoising_factor(col);
  const double sigma = 0.3;
  CounterRng rng(404, "acceptance-noise");
  std::vector<double> eps(bank.size());
  double s = 0.0, s2 = 0.0;
  const int draws = 1000;
  for (int t = 0; t < draws; ++t) {
    for (double& e : eps) {
      e = sigma * rng.normal();
    }
    const double m = neighborhood_mean(eps, col);
    s += m;
    s2 += m * m;
  }
  const double mean = s / draws;
  const double sd = std::sqrt((s2 - draws * mean * mean) / (draws - 1));
  const double ratio = sd / (sigma * factor);
  const bool ok = std::abs(f_uniform - 0.2) <= 1e-9 && std::abs(f_onehot - 1.0) <= 1e-12 && ratio >= 0.85 &&
                  ratio <= 1.15;
  return {ok, fmt("uniform(25) %.12f, one-hot %.12f, Monte-Carlo std ratio %.3f in [0.85, 1.15] (factor %.4f)",
                  f_uniform, f_onehot, ratio, factor)};
}

Outcome duplicate_denoising() {
  DuplicateNoiseSpec four;
  four.n_dup = 4;
  DuplicateNoiseSpec sixteen = four;
  sixteen.n_dup = 16;
  const auto a = run_duplicate_noise(four);
  const auto b = run_duplicate_noise(sixteen);
  const double ratio = b.error_std / a.error_std;
  return {ratio >= 0.375 && ratio <= 0.625,
          fmt("std(n_dup=16)/std(n_dup=4) = %.4f/%.4f = %.3f in [0.375, 0.625]", b.error_std, a.error_std, ratio)};
}

Outcome stationarity() {
  // Affine model: gradients do not depend on the parameters, so the normal
  // equations solved in closed form give an exact stationary point.
  CounterRng rng(505, "acceptance-stationarity");
  const std::size_t n = 64, in = 3;
  Dataset data;
  Eigen::MatrixXd phi(n, in + 1);
  Eigen::VectorXd y(n);
  for (std::size_t j = 0; j < n; ++j) {
    Sample s{random_vector(rng, in), {}};
    s.label = {std::sin(3 * s.input[0]) + 0.2 * rng.normal()};
    for (std::size_t k = 0; k < in; ++k) {
      phi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = s.input[k];
    }
    phi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(in)) = 1.0;
    y(static_cast<Eigen::Index>(j)) = s.label[0];
    data.samples.push_back(std::move(s));
  }
  const Eigen::VectorXd theta = phi.colPivHouseholderQr().solve(y);
  const NetworkSpec linear{{in, 1}, {}, Activation::identity};
  ParamVector params = ParamVector::zeros(linear);
  for (std::size_t k = 0; k <= in; ++k) {
    params.values()[k] = theta(static_cast<Eigen::Index>(k));
  }
  const GradientBank bank = GradientBank::build(linear, params, data);
  const LabeledState state = LabeledState::from_model(linear, params, data);
  double worst_linear = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const NormalizedColumn col = normalized_column(i, bank);
    if (!col.defined()) {
      return {false, fmt("linear model: column %zu undefined", i)};
    }
    const double gap = neighborhood_mean(state.predictions, col) - neighborhood_mean(state.noisy, col);
    worst_linear = std::max({worst_linear, std::abs(gap), std::abs(*stationarity_residual(i, state, bank).normalized)});
  }

  // Trained net: |sum_j r_j g_j . g_i| <= |g_i| |sum_j r_j g_j|, and the
  // second factor is half the measured energy gradient.
  const TrainedToy net = trained_toy(256, {16, 16}, 30);
  const GradientBank tb = GradientBank::build(net.spec, net.params, net.data);
  const LabeledState ts = LabeledState::from_model(net.spec, net.params, net.data);
  const double energy_grad = 0.5 * l2(loss_gradient(net.spec, net.params, net.data, LossKind::squared_error));
  std::size_t violations = 0, checked = 0;
  double tightest = 0.0;
  for (std::size_t i = 0; i < tb.size(); ++i) {
    const auto res = stationarity_residual(i, ts, tb);
    const NormalizedColumn col = normalized_column(i, tb);
    if (!res.normalized || !col.defined()) {
      continue;
    }
    const double bound = tb.norm(i) * energy_grad / std::abs(col.column_sum);
    ++checked;
    tightest = std::max(tightest, std::abs(*res.normalized) / bound);
    if (std::abs(*res.normalized) > bound * (1 + 1e-9) + 1e-14) {
      ++violations;
    }
  }
  const bool ok = worst_linear <= 1e-8 && violations == 0 && checked > 0;
  return {ok, fmt("linear least squares max |E_k[yhat]-E_k[y]| %.1e <= 1e-8; trained net %zu/%zu within the "
                  "Cauchy-Schwarz bound (max ratio %.3f, |grad E|/2 = %.3e)",
                  worst_linear, checked - violations, checked, tightest, energy_grad)};
}

Outcome enforcement_gradients() {
  CounterRng rng(606, "acceptance-enforce");
  double worst_pair = 0.0, worst_batch = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t out = 1 + rng.below(2);
    NetworkSpec spec = random_spec(rng, 2, out, 2, 5);
    if (spec.depth() == 1) {
      spec = NetworkSpec::mlp(2, {4}, out, Activation::tanh);
    }
    const ParamVector params = random_params(spec, rng);
    const std::size_t c = rng.below(out);
    const auto x = random_vector(rng, 2, 2.0), x2 = random_vector(rng, 2, 2.0);
    const PairLoss pl = pair_loss(spec, params, x, x2, c);
    const auto pair_fd = fd_gradient_of(
        [&](const ParamVector& p) { return pair_loss(spec, p, x, x2, c).value; }, params);
    worst_pair = std::max(worst_pair, relative_error(pl.gradient, pair_fd, 1e-8));

    Dataset data;
    for (int j = 0; j < 8; ++j) {
      data.samples.push_back({random_vector(rng, 2, 2.0), std::vector<double>(out, 0.0)});
    }
    const std::vector<std::size_t> b1 = {0, 1, 2, 3}, b2 = {4, 5, 6, 7};
    const BatchCriterion bc = batch_criterion(spec, params, data, b1, b2, c);
    const auto batch_fd = fd_gradient_of(
        [&](const ParamVector& p) { return *batch_criterion(spec, p, data, b1, b2, c, false).value; }, params);
    worst_batch = std::max(worst_batch, relative_error(bc.gradient, batch_fd, 1e-8));
  }

  const TrainedToy net = trained_toy(64, {8}, 5);
  const GradientBank bank = GradientBank::build(net.spec, net.params, net.data);
  double worst_identity = 0.0;
  CounterRng pick(607, "acceptance-groups");
  for (int g = 0; g < 20; ++g) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      if (pick.below(3) == 0) {
        idx.push_back(i);
      }
    }
    if (idx.size() < 2) {
      continue;
    }
    const GroupStats st = group_stats(idx, bank);
    double pair_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        pair_sum += bank.similarity(idx[a], idx[b]);
        ++pairs;
      }
    }
    const double m = static_cast<double>(idx.size());
    worst_identity = std::max({worst_identity, std::abs(st.variance - (1.0 - st.mean_norm_sq)),
                               std::abs(st.mean_pairwise - (m * st.mean_norm_sq - 1.0) / (m - 1.0)),
                               std::abs(st.mean_pairwise - pair_sum / static_cast<double>(pairs))});
  }
  const bool ok = worst_pair <= 1e-4 && worst_batch <= 1e-4 && worst_identity <= 1e-10;
  return {ok, fmt("pair-loss gradient %.1e, batch-criterion gradient %.1e (<= 1e-4, 20 nets); group identities %.1e "
                  "<= 1e-10",
                  worst_pair, worst_batch, worst_identity)};
}

Outcome integral_identity() {
  CounterRng rng(707, "acceptance-integral");
  double worst_excess = -1e300, worst_error = 0.0;
  const std::size_t intervals = 1000;
  for (int inst = 0; inst < 10; ++inst) {
    std::vector<GradientMatrix> grads;
    const std::size_t n = 40 + rng.below(40), p = 3 + rng.below(6);
    for (std::size_t j = 0; j < n; ++j) {
      grads.push_back(GradientMatrix::from_row(random_vector(rng, p)));
    }
    const GradientBank bank = GradientBank::from_gradients(grads);
    for (std::size_t i = 0; i < n; ++i) {
      const double n1 = count_positive_alpha(i, bank, 1.0);
      double trap = 0.0;
      double prev = static_cast<double>(count_hard(i, bank, 0.0));
      const double first = prev;
      for (std::size_t s = 1; s <= intervals; ++s) {
        const double cur = static_cast<double>(count_hard(i, bank, static_cast<double>(s) / intervals));
        trap += 0.5 * (prev + cur) / intervals;
        prev = cur;
      }
      // N_tau is monotone in tau, so the trapezoid error is at most half the
      // total variation times the step.
      const double bound = 0.5 * (first - prev) / intervals;
      const double err = std::abs(n1 - trap);
      worst_error = std::max(worst_error, err);
      worst_excess = std::max(worst_excess, err - bound);
    }
  }
  return {worst_excess <= 1e-9,
          fmt("max |N_1^+ - trapezoid| %.3e, never above the monotone-quadrature bound (worst margin %.2e)",
              worst_error, worst_excess)};
}

} // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "1/f neighbor scaling", neighbor_scaling},
      {2, "fast vs naive soft count", fast_vs_naive},
      {3, "gradient and HVP correctness", gradient_correctness},
      {4, "kernel-matrix properties", kernel_matrix_properties},
      {5, "rotation-invariant kernel", rotation_kernel},
      {6, "denoising extremes and Monte-Carlo law", denoising_extremes},
      {7, "sqrt(n) duplicate denoising", duplicate_denoising},
      {8, "stationarity identity", stationarity},
      {9, "enforcement gradient correctness", enforcement_gradients},
      {10, "N_1^+ integral identity", integral_identity},
  };
  std::set<int> selected;
  for (int a = 1; a < argc; ++a) {
    selected.insert(std::atoi(argv[a]));
  }
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) {
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("[%s] %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
