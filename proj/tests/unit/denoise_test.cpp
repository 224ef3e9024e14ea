#include "oracles.hpp"

#include "gradsim/denoise.hpp"
#include "gradsim/error.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

using namespace gradsim;
using namespace gradsim::test;

namespace {

struct Fitted {
  TrainedToy net;
  GradientBank bank;
  LabeledState state;
};

const Fitted& fitted() {
  static const Fitted f = [] {
    Fitted out;
    out.net = trained_toy(128, {16, 16}, 25);
    out.bank = GradientBank::build(out.net.spec, out.net.params, out.net.data);
    out.state = LabeledState::from_model(out.net.spec, out.net.params, out.net.data);
    return out;
  }();
  return f;
}

TEST(Column, UniformAndOneHotExtremes) {
  for (std::size_t n : {1u, 4u, 25u, 100u}) {
    const std::vector<double> row(n, 3.0);
    EXPECT_NEAR(*denoising_factor(normalized_column_from_inner(0, row)), 1.0 / std::sqrt(static_cast<double>(n)),
                1e-12);
  }
  std::vector<double> onehot(10, 0.0);
  onehot[7] = 0.4;
  const auto col = normalized_column_from_inner(7, onehot);
  EXPECT_EQ(*denoising_factor(col), 1.0);
  EXPECT_EQ(col.weights[7], 1.0);
  EXPECT_FALSE(normalized_column_from_inner(0, std::vector<double>{1.0, -1.0}).defined());
}

TEST(Column, WeightsSumToOneAndNegativesAreReported) {
  const std::vector<double> row = {2.0, -0.5, 1.0, -0.5, 1.0};
  const auto col = normalized_column_from_inner(0, row);
  double s = 0.0;
  for (double w : col.weights) {
    s += w;
  }
  EXPECT_NEAR(s, 1.0, 1e-15);
  EXPECT_EQ(col.negative_count, 2u);
  EXPECT_NEAR(col.negative_mass, -1.0 / 3.0, 1e-15);
  EXPECT_NEAR(col.column_sum, 3.0, 1e-15);
}

TEST(Column, FactorBetweenInverseSqrtNAndOneForNonNegativeColumns) {
  CounterRng rng(1, "factor-range");
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(50);
    auto row = random_vector(rng, n);
    for (double& v : row) {
      v = std::abs(v);
    }
    const auto f = denoising_factor(normalized_column_from_inner(0, row));
    ASSERT_TRUE(f);
    EXPECT_GE(*f, 1.0 / std::sqrt(static_cast<double>(n)) - 1e-12);
    EXPECT_LE(*f, 1.0 + 1e-12);
  }
}

TEST(Column, BankColumnMatchesInnerProducts) {
  const auto& f = fitted();
  const auto col = normalized_column(5, f.bank);
  double sum = 0.0;
  for (std::size_t j = 0; j < f.bank.size(); ++j) {
    sum += f.bank.inner(j, 5);
  }
  EXPECT_NEAR(col.column_sum, sum, 1e-10 * std::abs(sum));
  for (std::size_t j = 0; j < f.bank.size(); ++j) {
    EXPECT_NEAR(col.weights[j], f.bank.inner(j, 5) / sum, 1e-12);
  }
}

TEST(Trace, SingleOutputEqualsSquaredFactor) {
  const auto& f = fitted();
  for (std::size_t i = 0; i < f.bank.size(); i += 13) {
    EXPECT_NEAR(*denoising_trace(i, f.bank), std::pow(*denoising_factor(i, f.bank), 2), 1e-10);
  }
}

TEST(Trace, MultiOutputMatchesDirectMatrixSum) {
  CounterRng rng(2, "trace-multi");
  const auto spec = NetworkSpec::mlp(2, {6}, 2);
  const auto p = random_params(spec, rng);
  Dataset data;
  for (int j = 0; j < 15; ++j) {
    data.samples.push_back({random_vector(rng, 2, 2.0), {0, 0}});
  }
  const auto bank = GradientBank::build(spec, p, data);
  std::vector<GradientMatrix> g;
  for (const auto& s : data.samples) {
    g.push_back(per_sample_gradient(spec, p, s.input));
  }
  const std::size_t i = 3;
  Eigen::Matrix2d total = Eigen::Matrix2d::Zero();
  for (const auto& gj : g) {
    total += gram(g[i], gj);
  }
  const Eigen::Matrix2d inv = total.inverse();
  double expected = 0.0;
  for (const auto& gj : g) {
    expected += (inv * gram(g[i], gj)).squaredNorm();
  }
  EXPECT_NEAR(*denoising_trace(i, bank), expected, 1e-8 * expected);
}

TEST(Stationarity, ResidualIsZeroForExactLinearLeastSquares) {
  CounterRng rng(3, "lls");
  const std::size_t n = 30;
  Dataset data;
  Eigen::MatrixXd phi(n, 3);
  Eigen::VectorXd y(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto x = random_vector(rng, 2);
    data.samples.push_back({x, {x[0] * x[1] + 0.1 * rng.normal()}});
    phi.row(static_cast<Eigen::Index>(j)) << x[0], x[1], 1.0;
    y(static_cast<Eigen::Index>(j)) = data.samples.back().label[0];
  }
  const Eigen::VectorXd theta = phi.colPivHouseholderQr().solve(y);
  const NetworkSpec spec{{2, 1}, {}, Activation::identity};
  ParamVector params = ParamVector::zeros(spec);
  for (int k = 0; k < 3; ++k) {
    params.values()[static_cast<std::size_t>(k)] = theta(k);
  }
  const auto bank = GradientBank::build(spec, params, data);
  const auto state = LabeledState::from_model(spec, params, data);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = stationarity_residual(i, state, bank);
    EXPECT_NEAR(r.raw, 0.0, 1e-12);
    ASSERT_TRUE(r.normalized);
    EXPECT_NEAR(*r.normalized, 0.0, 1e-12);
  }
  // Away from the optimum the residual reappears.
  LabeledState shifted = state;
  for (double& v : shifted.predictions) {
    v += 0.5;
  }
  EXPECT_NEAR(*stationarity_residual(0, shifted, bank).normalized, 0.5, 1e-12);
}

TEST(Shift, BoundedByLipschitzEstimate) {
  const auto& f = fitted();
  const auto c = estimate_lipschitz_constant(f.bank, f.state);
  ASSERT_TRUE(c);
  for (std::size_t i = 0; i < f.bank.size(); ++i) {
    const auto s = prediction_shift(i, f.state, f.bank);
    const auto b = lipschitz_bound(i, f.bank, *c);
    ASSERT_TRUE(s && b);
    EXPECT_LE(std::abs(*s), *b + 1e-9) << i;
  }
}

TEST(Shift, UnitDistanceThroughCorrelation) {
  EXPECT_EQ(unit_distance(1.0), 0.0);
  EXPECT_EQ(unit_distance(1.0 + 1e-15), 0.0);
  EXPECT_NEAR(unit_distance(-1.0), 2.0, 1e-15);
  EXPECT_NEAR(unit_distance(0.0), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(lipschitz_bound(0, fitted().bank, 0.0), std::invalid_argument);
}

TEST(Shift, UnitDistanceMatchesRandomPairs) {
  CounterRng rng(21, "unit-distance");
  for (int t = 0; t < 200; ++t) {
    auto u = random_vector(rng, 9), v = random_vector(rng, 9);
    const double nu = l2(u), nv = l2(v);
    for (std::size_t k = 0; k < 9; ++k) {
      u[k] /= nu;
      v[k] /= nv;
    }
    std::vector<double> diff(9);
    for (std::size_t k = 0; k < 9; ++k) {
      diff[k] = u[k] - v[k];
    }
    EXPECT_NEAR(unit_distance(*k_corr(u, v).value), l2(diff), 1e-12);
  }
}

// Correlation one forces equal outputs: checked on near-duplicate inputs and
// on every pair of the fitted set that reaches the threshold.
TEST(Shift, UnitCorrelationImpliesEqualOutputs) {
  const auto& f = fitted();
  const auto c = estimate_lipschitz_constant(f.bank, f.state);
  ASSERT_TRUE(c);
  const auto check = [&](std::span<const double> x, std::span<const double> x2) -> bool {
    const auto g = per_sample_gradient(f.net.spec, f.net.params, x);
    const auto g2 = per_sample_gradient(f.net.spec, f.net.params, x2);
    const auto k = k_corr(g.row(0), g2.row(0));
    if (!k.value || *k.value < 1.0 - 1e-12) {
      return false;
    }
    std::vector<double> diff(g.cols());
    for (std::size_t t = 0; t < diff.size(); ++t) {
      diff[t] = g.row(0)[t] / g.norm(0) - g2.row(0)[t] / g2.norm(0);
    }
    EXPECT_LE(l2(diff), 1e-5);
    const double df = forward(f.net.spec, f.net.params, x)[0] - forward(f.net.spec, f.net.params, x2)[0];
    EXPECT_LE(std::abs(df), *c * 1e-5);
    return true;
  };
  std::size_t hits = 0;
  for (std::size_t i = 0; i < f.net.data.size(); i += 9) {
    std::vector<double> near = f.net.data.samples[i].input;
    near[0] += 1e-9;
    hits += check(f.net.data.samples[i].input, near) ? 1 : 0;
  }
  EXPECT_GT(hits, 0u);
  for (std::size_t i = 0; i < f.bank.size(); ++i) {
    for (std::size_t j = i + 1; j < f.bank.size(); ++j) {
      if (f.bank.similarity(i, j) >= 1.0 - 1e-12) {
        check(f.net.data.samples[i].input, f.net.data.samples[j].input);
      }
    }
  }
}

TEST(Shift, SummaryStatistics) {
  const std::vector<double> v = {1, -1, 3, -3};
  const auto s = summarize(v);
  EXPECT_EQ(s.count, 4u);
  EXPECT_EQ(s.mean, 0.0);
  EXPECT_EQ(s.mean_abs, 2.0);
  EXPECT_NEAR(s.variance, 5.0, 1e-15);
}

TEST(Report, AgreesWithPointQueries) {
  const auto& f = fitted();
  const auto rep = denoise_report(f.bank, f.state);
  ASSERT_EQ(rep.records.size(), f.bank.size());
  ASSERT_TRUE(rep.lipschitz_constant);
  EXPECT_NEAR(*rep.lipschitz_constant, *estimate_lipschitz_constant(f.bank, f.state), 1e-12);
  for (std::size_t i = 0; i < f.bank.size(); i += 9) {
    const auto& r = rep.records[i];
    EXPECT_NEAR(*r.factor, *denoising_factor(i, f.bank), 1e-10);
    EXPECT_NEAR(*r.shift, *prediction_shift(i, f.state, f.bank), 1e-10);
    EXPECT_NEAR(*r.bound, *lipschitz_bound(i, f.bank, *rep.lipschitz_constant), 1e-10);
    EXPECT_NEAR(r.residual.raw, stationarity_residual(i, f.state, f.bank).raw, 1e-9);
  }
  const auto j = nlohmann::json::parse(denoise_report_json(rep));
  EXPECT_EQ(j.at("samples").size(), f.bank.size());
}

TEST(State, ValidatesLengths) {
  LabeledState s;
  s.noisy = {1, 2};
  s.predictions = {1};
  EXPECT_THROW(s.validate(2), ShapeError);
  s.predictions = {1, 2};
  s.truth = std::vector<double>{0};
  EXPECT_THROW(s.validate(2), ShapeError);
}

} // namespace
