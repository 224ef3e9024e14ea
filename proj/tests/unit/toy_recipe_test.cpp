#include "gradsim/bank.hpp"
#include "gradsim/density.hpp"
#include "gradsim/experiments.hpp"
#include "gradsim/network.hpp"
#include "gradsim/toy.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gradsim;

namespace {

// One full-size toy fit with the sweep defaults, shared by the tests below.
struct Fitted {
  Dataset data;
  NetworkSpec spec;
  ParamVector params;
  std::vector<double> counts;
};

const Fitted& fitted() {
  static const Fitted f = [] {
    const SweepConfig sc;
    Fitted out;
    out.data = gen_toy({.frequency = 2.0, .n = sc.n, .seed = sc.train.seed, .jitter = false});
    out.spec = NetworkSpec::mlp(2, sc.hidden, 1, sc.activation);
    out.params = train(out.spec, out.data, sc.train).params;
    out.counts = count_soft_fast(GradientBank::build(out.spec, out.params, out.data));
    return out;
  }();
  return f;
}

// First verified run: RMSE 0.0040 at f = 2, seed 0.
TEST(ToyRecipe, FitsTheSinusoid) {
  const Fitted& f = fitted();
  double se = 0.0;
  for (const auto& s : f.data.samples) {
    const double e = forward(f.spec, f.params, s.input)[0] - s.label[0];
    se += e * e;
  }
  EXPECT_LE(std::sqrt(se / static_cast<double>(f.data.size())), 0.05);
}

// Points near the extrema of the sinusoid have fewer neighbors than points
// near its zero crossings. Compared as a rank statistic over all such pairs.
TEST(ToyRecipe, FewerNeighborsWhereCurvatureIsHigh) {
  const Fitted& f = fitted();
  std::vector<double> peaks, crossings;
  for (std::size_t j = 0; j < f.data.size(); ++j) {
    const double y = std::abs(f.data.samples[j].label[0]);
    if (y > 0.95) {
      peaks.push_back(f.counts[j]);
    } else if (y < 0.3) {
      crossings.push_back(f.counts[j]);
    }
  }
  ASSERT_FALSE(peaks.empty());
  ASSERT_FALSE(crossings.empty());
  double wins = 0.0;
  for (double a : peaks) {
    for (double b : crossings) {
      wins += a < b ? 1.0 : (a == b ? 0.5 : 0.0);
    }
  }
  const double auc = wins / static_cast<double>(peaks.size() * crossings.size());
  RecordProperty("auc", std::to_string(auc));
  EXPECT_GT(auc, 0.6) << "P(N_S at an extremum < N_S at a zero crossing) = " << auc << " over " << peaks.size()
                      << " x " << crossings.size() << " pairs";
}

} // namespace
