#include "oracles.hpp"

#include "gradsim/density.hpp"
#include "gradsim/enforce.hpp"
#include "gradsim/report.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace gradsim;
using namespace gradsim::test;

namespace {

Dataset random_data(CounterRng& rng, std::size_t n, std::size_t out) {
  Dataset d;
  for (std::size_t j = 0; j < n; ++j) {
    d.samples.push_back({random_vector(rng, 2, 2.0), random_vector(rng, out)});
  }
  return d;
}

Dataset random_data_dim(CounterRng& rng, std::size_t n, std::size_t dim) {
  Dataset d;
  for (std::size_t j = 0; j < n; ++j) {
    d.samples.push_back({random_vector(rng, dim, 2.0), random_vector(rng, 1)});
  }
  return d;
}

TEST(PairLoss, ValueIsMinusCorrelationAndGradientMatchesFd) {
  CounterRng rng(1, "pair");
  for (int inst = 0; inst < 10; ++inst) {
    const std::size_t out = 1 + rng.below(2);
    const auto spec = NetworkSpec::mlp(2, {5, 4}, out, Activation::tanh);
    const auto p = random_params(spec, rng);
    const auto x = random_vector(rng, 2), x2 = random_vector(rng, 2);
    const std::size_t c = out - 1;
    const auto pl = pair_loss(spec, p, x, x2, c);
    EXPECT_FALSE(pl.skipped);
    const auto gx = per_sample_gradient(spec, p, x), gx2 = per_sample_gradient(spec, p, x2);
    EXPECT_NEAR(pl.value, -*k_corr(gx.row(c), gx2.row(c)).value, 1e-14);
    const auto fd = fd_gradient_of([&](const ParamVector& q) { return pair_loss(spec, q, x, x2, c).value; }, p);
    EXPECT_LE(relative_error(pl.gradient, fd, 1e-9), 1e-6);
  }
}

TEST(PairLoss, IdenticalInputsHaveZeroGradient) {
  CounterRng rng(2, "pair-same");
  const auto spec = NetworkSpec::mlp(2, {4}, 1);
  const auto p = random_params(spec, rng);
  const auto x = random_vector(rng, 2);
  const auto pl = pair_loss(spec, p, x, x);
  EXPECT_NEAR(pl.value, -1.0, 1e-15);
  EXPECT_LE(max_abs(pl.gradient), 1e-12);
}

TEST(PairLoss, ZeroGradientIsSkipped) {
  // A relu output below zero kills every gradient, output bias included.
  const auto spec = NetworkSpec::mlp(2, {3}, 1, Activation::relu, Activation::relu);
  ParamVector p = ParamVector::zeros(spec);
  p.values().back() = -1.0;
  const std::vector<double> x = {1, 1}, x2 = {2, 1};
  const auto pl = pair_loss(spec, p, x, x2);
  EXPECT_TRUE(pl.skipped);
  EXPECT_TRUE(pl.gradient.empty());
}

TEST(BatchCriterion, DefinitionAndGradient) {
  CounterRng rng(3, "batch");
  for (int inst = 0; inst < 8; ++inst) {
    const auto spec = NetworkSpec::mlp(2, {4, 3}, 2, Activation::tanh);
    const auto p = random_params(spec, rng);
    const auto data = random_data(rng, 10, 2);
    const std::vector<std::size_t> b1 = {0, 2, 4}, b2 = {1, 3, 9};
    const auto bc = batch_criterion(spec, p, data, b1, b2, 1);
    ASSERT_TRUE(bc.value);

    std::vector<double> m1(p.size()), m2(p.size());
    for (std::size_t k = 0; k < 3; ++k) {
      const auto g1 = per_sample_gradient(spec, p, data.samples[b1[k]].input);
      const auto g2 = per_sample_gradient(spec, p, data.samples[b2[k]].input);
      for (std::size_t t = 0; t < p.size(); ++t) {
        m1[t] += g1.row(1)[t] / 3;
        m2[t] += g2.row(1)[t] / 3;
      }
    }
    std::vector<double> diff(p.size());
    for (std::size_t t = 0; t < p.size(); ++t) {
      diff[t] = m1[t] - m2[t];
    }
    EXPECT_NEAR(*bc.value, 3.0 * dot(diff, diff) / (l2(m1) * l2(m2)), 1e-12);

    const auto fd = fd_gradient_of(
        [&](const ParamVector& q) { return *batch_criterion(spec, q, data, b1, b2, 1, false).value; }, p);
    EXPECT_LE(relative_error(bc.gradient, fd, 1e-9), 1e-6);
    EXPECT_EQ(batch_criterion(spec, p, data, b1, b2, 1, true, 3).gradient, bc.gradient);
  }
}

// A linear model's gradient is (x, 1); scaling the inputs by c scales the
// weight block while the bias entry's share vanishes, so the criterion on
// c x approaches the bias-free criterion on x, independent of c.
TEST(BatchCriterion, InvariantToInputScaleOnLinearModel) {
  CounterRng rng(8, "homog");
  const auto spec = NetworkSpec::mlp(3, {}, 1);
  const auto p = random_params(spec, rng);
  const auto data = random_data_dim(rng, 8, 3);
  const std::vector<std::size_t> b1 = {0, 1, 2, 3}, b2 = {4, 5, 6, 7};

  std::vector<double> m1(3), m2(3);
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t t = 0; t < 3; ++t) {
      m1[t] += data.samples[b1[k]].input[t] / 4;
      m2[t] += data.samples[b2[k]].input[t] / 4;
    }
  }
  std::vector<double> diff(3);
  for (std::size_t t = 0; t < 3; ++t) {
    diff[t] = m1[t] - m2[t];
  }
  const double bias_free = 4.0 * dot(diff, diff) / (l2(m1) * l2(m2));

  for (double c : {1e4, 1e6, 1e8}) {
    Dataset scaled = data;
    for (auto& s : scaled.samples) {
      for (double& x : s.input) {
        x *= c;
      }
    }
    const auto bc = batch_criterion(spec, p, scaled, b1, b2, 0, false);
    ASSERT_TRUE(bc.value);
    EXPECT_NEAR(*bc.value, bias_free, 1e-6 * bias_free) << "c = " << c;
  }
}

TEST(BatchCriterion, RejectsBadBatches) {
  const auto spec = NetworkSpec::mlp(2, {3}, 1);
  const auto p = ParamVector::initialize(spec, 0);
  CounterRng rng(4, "bad-batch");
  const auto data = random_data(rng, 4, 1);
  const std::vector<std::size_t> a = {0, 1}, b = {2}, oob = {2, 7};
  EXPECT_THROW(batch_criterion(spec, p, data, a, b), std::invalid_argument);
  EXPECT_THROW(batch_criterion(spec, p, data, a, oob), std::invalid_argument);
}

TEST(GroupStats, IdentitiesHold) {
  const auto net = trained_toy(40, {6}, 3);
  const auto bank = GradientBank::build(net.spec, net.params, net.data);
  const std::vector<std::size_t> idx = {0, 3, 5, 8, 13, 21, 34};
  const auto st = group_stats(idx, bank);
  std::vector<double> mu(bank.param_count());
  for (std::size_t i : idx) {
    for (std::size_t k = 0; k < mu.size(); ++k) {
      mu[k] += bank.unit(i)[k] / static_cast<double>(idx.size());
    }
  }
  double var = 0.0, pairs = 0.0, count = 0.0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t k = 0; k < mu.size(); ++k) {
      var += std::pow(bank.unit(idx[a])[k] - mu[k], 2) / static_cast<double>(idx.size());
    }
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      pairs += bank.similarity(idx[a], idx[b]);
      count += 1;
    }
  }
  EXPECT_NEAR(st.mean_norm_sq, dot(mu, mu), 1e-12);
  EXPECT_NEAR(st.variance, var, 1e-12);
  EXPECT_NEAR(st.mean_pairwise, pairs / count, 1e-12);
  EXPECT_NEAR(st.variance, 1.0 - st.mean_norm_sq, 1e-12);
}

TEST(Groups, JsonRoundTripAndValidation) {
  std::vector<SimilarityGroup> g(2);
  g[0] = {"left", {0, 1, 2, 3}, PairingMode::two_batch, 2, 0};
  g[1] = {"right", {4, 5}, PairingMode::all_pairs, 1, 1};
  const auto back = parse_groups(groups_to_json(g));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].indices, g[0].indices);
  EXPECT_EQ(back[1].mode, PairingMode::all_pairs);
  EXPECT_EQ(back[1].output, 1u);
  EXPECT_EQ(parse_pairing_mode("two-batch"), PairingMode::two_batch);
  EXPECT_THROW(parse_pairing_mode("pairs"), std::invalid_argument);

  SimilarityGroup small{"s", {0, 1, 2}, PairingMode::two_batch, 2, 0};
  EXPECT_THROW(small.validate(10), std::invalid_argument); // needs 2 * n_B members
  SimilarityGroup oob{"o", {0, 11}, PairingMode::all_pairs, 1, 0};
  EXPECT_THROW(oob.validate(10), std::invalid_argument);
  EXPECT_ANY_THROW(parse_groups("{\"groups\": [{\"indices\": \"x\"}]}"));
}

TEST(Homogeneity, ZeroWhenEveryCountMatchesTarget) {
  std::vector<GradientMatrix> g;
  for (int j = 0; j < 6; ++j) {
    g.push_back(GradientMatrix::from_row({j % 2 == 0 ? 1.0 : 0.0, j % 2 == 0 ? 0.0 : 1.0}));
  }
  const auto bank = GradientBank::from_gradients(g);
  // Two orthogonal clusters of three: every N_S is 3, i.e. half the set.
  EXPECT_NEAR(density_homogeneity_loss(bank, 0.5), 0.0, 1e-15);
  EXPECT_NEAR(density_homogeneity_loss(bank, 1.0), 6 * 0.25, 1e-15);
  EXPECT_THROW(density_homogeneity_loss(bank, 0.0), std::invalid_argument);

  const std::vector<GradientMatrix> same(5, GradientMatrix::from_row({0.3, -2.0}));
  EXPECT_NEAR(density_homogeneity_loss(GradientBank::from_gradients(same), 1.0), 0.0, 1e-15);

  std::vector<GradientMatrix> basis;
  for (std::size_t j = 0; j < 4; ++j) {
    std::vector<double> e(4, 0.0);
    e[j] = 1.0;
    basis.push_back(GradientMatrix::from_row(e));
  }
  EXPECT_NEAR(density_homogeneity_loss(GradientBank::from_gradients(basis), 0.25), 0.0, 1e-15);
}

TEST(AuxTraining, ZeroWeightReproducesPlainTraining) {
  const Dataset data = gen_blobs({.n = 48, .seed = 2});
  const auto spec = NetworkSpec::mlp(2, {6}, 1);
  TrainConfig cfg;
  cfg.adam.lr = 1e-2;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  std::vector<SimilarityGroup> groups(1);
  groups[0] = {"all", {}, PairingMode::two_batch, 4, 0};
  for (std::size_t j = 0; j < 48; ++j) {
    groups[0].indices.push_back(j);
  }
  const auto plain = train(spec, data, cfg);
  const auto aux = train_with_auxiliary(spec, data, groups, cfg, 0.0);
  EXPECT_EQ(aux.train.params, plain.params);
  EXPECT_EQ(aux.trace.size(), plain.steps.size());
  const auto weighted = train_with_auxiliary(spec, data, groups, cfg, 0.5);
  EXPECT_NE(weighted.train.params, plain.params);
  EXPECT_TRUE(weighted.trace.front().criterion);
}

TEST(AuxTraining, CriterionDecreasesUnderPureEnforcement) {
  const Dataset data = gen_blobs({.n = 64, .seed = 3});
  const auto spec = NetworkSpec::mlp(2, {8}, 1);
  TrainConfig cfg;
  cfg.adam.lr = 3e-3;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  std::vector<SimilarityGroup> groups(1);
  groups[0] = {"plus", {}, PairingMode::two_batch, 8, 0};
  for (std::size_t j = 0; j < data.size(); ++j) {
    if (data.samples[j].label[0] > 0) {
      groups[0].indices.push_back(j);
    }
  }
  const GradientBank before = GradientBank::build(spec, ParamVector::initialize(spec, cfg.seed), data);
  const auto res = train_with_auxiliary(spec, data, groups, cfg, 1.0);
  const GradientBank after = GradientBank::build(spec, res.train.params, data);
  EXPECT_GT(group_stats(groups[0].indices, after).mean_pairwise,
            group_stats(groups[0].indices, before).mean_pairwise);
}

std::vector<SimilarityGroup> blob_groups(const Dataset& data, std::size_t batch) {
  std::vector<SimilarityGroup> groups(2);
  groups[0] = {"plus", {}, PairingMode::two_batch, batch, 0};
  groups[1] = {"minus", {}, PairingMode::two_batch, batch, 0};
  for (std::size_t j = 0; j < data.size(); ++j) {
    groups[data.samples[j].label[0] > 0 ? 0 : 1].indices.push_back(j);
  }
  return groups;
}

double mean_criterion(const std::vector<AuxTraceRow>& trace, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t t = from; t < to; ++t) {
    s += *trace[t].criterion;
  }
  return s / static_cast<double>(to - from);
}

// Each blob is a group. Single steps are noisy (fresh batches every step),
// so ten-step windows at step 10 and at the end are compared.
TEST(AuxTraining, BlobCriterionHalvesAfterWarmup) {
  const Dataset data = gen_blobs({.n = 64, .seed = 5});
  const auto spec = NetworkSpec::mlp(2, {8}, 1);
  TrainConfig cfg;
  cfg.adam.lr = 3e-3;
  cfg.epochs = 40;
  cfg.batch_size = 16;
  const auto res = train_with_auxiliary(spec, data, blob_groups(data, 8), cfg, 1.0);
  ASSERT_GE(res.trace.size(), 40u);
  for (const auto& row : res.trace) {
    ASSERT_TRUE(row.criterion);
  }
  const double early = mean_criterion(res.trace, 10, 20);
  const double late = mean_criterion(res.trace, res.trace.size() - 10, res.trace.size());
  RecordProperty("ratio", std::to_string(late / early));
  EXPECT_LE(late, 0.5 * early) << "early " << early << " late " << late;
}

TEST(AuxTraining, LossStaysFiniteAcrossWeights) {
  const Dataset data = gen_blobs({.n = 48, .seed = 6});
  const auto spec = NetworkSpec::mlp(2, {6}, 1);
  TrainConfig cfg;
  cfg.adam.lr = 3e-3;
  cfg.epochs = 5;
  cfg.batch_size = 12;
  for (double w : {0.01, 0.1, 1.0}) {
    const auto res = train_with_auxiliary(spec, data, blob_groups(data, 6), cfg, w);
    for (const auto& row : res.trace) {
      EXPECT_TRUE(std::isfinite(row.main_loss)) << "aux_weight " << w;
    }
    for (double v : res.train.params.values()) {
      ASSERT_TRUE(std::isfinite(v));
    }
  }
}

TEST(AuxTraining, AllPairsModeAndObserver) {
  const Dataset data = gen_blobs({.n = 24, .seed = 4});
  const auto spec = NetworkSpec::mlp(2, {4}, 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 6;
  std::vector<SimilarityGroup> groups(1);
  groups[0] = {"few", {0, 2, 4, 6}, PairingMode::all_pairs, 1, 0};
  std::size_t calls = 0;
  const auto res = train_with_auxiliary(spec, data, groups, cfg, 0.2, 1, std::nullopt,
                                        [&](const ParamVector&, std::size_t step) { EXPECT_EQ(step, calls++); });
  EXPECT_EQ(calls, res.trace.size());
  std::ostringstream os;
  write_trace_csv(res.trace, os);
  const auto rows = parse_csv(os.str());
  EXPECT_EQ(rows.size(), res.trace.size() + 1);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"step", "main_loss", "criterion", "aux_weight"}));
}

} // namespace
