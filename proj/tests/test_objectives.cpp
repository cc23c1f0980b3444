// Copyright 2026 The PIRL Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pirl/objectives.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "pirl/datagen.hpp"
#include "pirl/gradcheck.hpp"
#include "pirl/rng.hpp"

namespace pirl {
namespace {

ArchConfig tiny_arch(std::uint64_t seed, std::size_t input_dim = 5,
                     std::size_t k = 3) {
  ArchConfig a;
  a.input_dim = input_dim;
  a.embed_dim = 3;
  a.encoder_hidden = {6};
  a.env_head_hidden = {4};
  a.num_train_envs = k;
  a.init_seed = seed;
  return a;
}

std::vector<EnvBatch> random_batches(std::size_t envs, std::size_t n,
                                     std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EnvBatch> batches;
  for (std::size_t e = 0; e < envs; ++e) {
    std::vector<double> x(n * p);
    for (double& v : x) v = rng.normal();
    EnvBatch b;
    b.x = Tensor::matrix(n, p, std::move(x));
    b.y.resize(n);
    b.y[0] = 0;
    if (n > 1) b.y[1] = 1;
    for (std::size_t i = 2; i < n; ++i) b.y[i] = static_cast<int>(rng.below(2));
    b.env_class = static_cast<int>(e);
    batches.push_back(std::move(b));
  }
  return batches;
}

// Gradient-descent ridge oracle: minimizes |Aw - t|^2 + eps |w|^2 directly,
// run to convergence. Independent of the closed-form solve under test.
std::vector<double> ridge_descent_oracle(const std::vector<double>& h,
                                         std::size_t n, std::size_t d,
                                         const std::vector<double>& t,
                                         double eps) {
  const std::size_t m = d + 1;
  std::vector<double> w(m, 0.0), g(m);
  // Lipschitz-safe step from the Gram matrix trace.
  double trace = static_cast<double>(n);
  for (double v : h) trace += v * v;
  const double lr = 0.9 / (2.0 * (trace + eps));
  for (int iter = 0; iter < 2000000; ++iter) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double r = w[d] - t[i];
      for (std::size_t j = 0; j < d; ++j) r += w[j] * h[i * d + j];
      for (std::size_t j = 0; j < d; ++j) g[j] += 2.0 * r * h[i * d + j];
      g[d] += 2.0 * r;
    }
    double gmax = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      g[j] += 2.0 * eps * w[j];
      gmax = std::max(gmax, std::abs(g[j]));
    }
    if (gmax < 1e-12) break;
    for (std::size_t j = 0; j < m; ++j) w[j] -= lr * g[j];
  }
  return w;
}

double normal_equation_residual(const std::vector<double>& h, std::size_t n,
                                std::size_t d, const std::vector<double>& t,
                                double eps, const std::vector<double>& w) {
  const std::size_t m = d + 1;
  // r = (A^T A + eps I) w - A^T t, accumulated directly.
  std::vector<double> r(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double pred = w[d];
    for (std::size_t j = 0; j < d; ++j) pred += w[j] * h[i * d + j];
    const double diff = pred - t[i];
    for (std::size_t j = 0; j < d; ++j) r[j] += diff * h[i * d + j];
    r[d] += diff;
  }
  double norm2 = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    r[j] += eps * w[j];
    norm2 += r[j] * r[j];
  }
  return std::sqrt(norm2);
}

TEST(FitRidge, ExactLinearFitRecovered) {
  Tape tape;
  Tensor h = Tensor::matrix(3, 1, {1, 2, 3});
  Tensor w = fit_ridge(tape, h, {1, 2, 3}, 1e-6);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_NEAR(w.value()[0], 1.0, 1e-5);
  EXPECT_NEAR(w.value()[1], 0.0, 1e-5);
}

TEST(FitRidge, OrthonormalRegressionPicksTheMatchingColumn) {
  // Zero-mean orthonormal columns; the target equals the first column.
  const std::vector<double> col0 = {0.5, 0.5, -0.5, -0.5};
  Tape tape;
  Tensor h = Tensor::matrix(4, 2, {0.5, 0.5, 0.5, -0.5, -0.5, 0.5, -0.5, -0.5});
  Tensor w = fit_ridge(tape, h, col0, 1e-9);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_NEAR(w.value()[0], 1.0, 1e-6);
  EXPECT_NEAR(w.value()[1], 0.0, 1e-6);
  EXPECT_NEAR(w.value()[2], 0.0, 1e-6);
}

TEST(FitRidge, MatchesGradientDescentOracle) {
  Rng rng(2026);
  const std::size_t n = 20, d = 4;
  std::vector<double> h(n * d), t(n);
  for (double& v : h) v = rng.normal();
  for (double& v : t) v = rng.normal();
  Tape tape;
  Tensor w = fit_ridge(tape, Tensor::matrix(n, d, h), t, 0.1);
  const std::vector<double> oracle = ridge_descent_oracle(h, n, d, t, 0.1);
  ASSERT_EQ(w.size(), oracle.size());
  for (std::size_t j = 0; j < oracle.size(); ++j) {
    EXPECT_NEAR(w.value()[j], oracle[j], 1e-5) << "coordinate " << j;
  }
}

TEST(FitRidge, NormalEquationResidualTiny) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + rng.below(40);
    const std::size_t d = 1 + rng.below(6);
    std::vector<double> h(n * d), t(n);
    for (double& v : h) v = rng.normal();
    for (double& v : t) v = rng.normal();
    const double eps = 0.01 + rng.uniform01();
    Tape tape;
    Tensor w = fit_ridge(tape, Tensor::matrix(n, d, h), t, eps);
    EXPECT_LE(normal_equation_residual(h, n, d, t, eps, w.value()), 1e-8)
        << "trial " << trial;
  }
}

TEST(FitRidge, NonPositiveRidgeIsAnError) {
  Tape tape;
  Tensor h = Tensor::matrix(2, 1, {1, 2});
  EXPECT_THROW(fit_ridge(tape, h, {1, 2}, 0.0), std::invalid_argument);
  EXPECT_THROW(fit_ridge(tape, h, {1, 2}, -1.0), std::invalid_argument);
}

TEST(FitRidge, GradientIntoDesignMatchesFiniteDifferences) {
  Rng rng(44);
  const std::size_t n = 7, d = 3;
  std::vector<double> hv(n * d), t(n);
  for (double& v : hv) v = rng.normal();
  for (double& v : t) v = rng.normal();
  Tensor h = Tensor::matrix(n, d, hv);
  // Scalar functional of the fitted weights; gradients flow through the
  // closed-form solve into the design matrix.
  const double err = finite_diff_check(
      [&](Tape& tape) {
        return sum_squares(tape, fit_ridge(tape, h, t, 0.25));
      },
      {h}, 1e-5);
  EXPECT_LE(err, 1e-6);
}

TEST(FitProbe, UsesPlusMinusOneCoding) {
  Rng rng(45);
  const std::size_t n = 12, d = 2;
  std::vector<double> hv(n * d);
  for (double& v : hv) v = rng.normal();
  std::vector<int> y(n);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(rng.below(2));
    t[i] = 2.0 * y[i] - 1.0;
  }
  Tape tape;
  Tensor a = fit_probe(tape, Tensor::matrix(n, d, hv), y, 0.1);
  Tensor b = fit_ridge(tape, Tensor::matrix(n, d, hv), t, 0.1);
  EXPECT_EQ(a.value(), b.value());
}

TEST(InvariantRiskPenalty, IdenticalProbesGiveExactZero) {
  Tape tape;
  Tensor w0 = Tensor::vector({1.5, -2.0, 0.25});
  Tensor w1 = Tensor::vector({1.5, -2.0, 0.25});
  Tensor w2 = Tensor::vector({1.5, -2.0, 0.25});
  EXPECT_EQ(invariant_risk_penalty(tape, {w0, w1, w2}).item(), 0.0);
}

TEST(InvariantRiskPenalty, SinglePairOrderedDoubleCount) {
  Tape tape;
  Tensor w0 = Tensor::vector({0, 0});
  Tensor w1 = Tensor::vector({3, 4});
  EXPECT_DOUBLE_EQ(invariant_risk_penalty(tape, {w0, w1}).item(), 50.0);
}

TEST(InvariantRiskPenalty, MatchesPairEnumerationOracle) {
  Rng rng(46);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t k = 2 + rng.below(4);
    const std::size_t d = 1 + rng.below(5);
    std::vector<Tensor> probes;
    std::vector<std::vector<double>> raw;
    for (std::size_t e = 0; e < k; ++e) {
      std::vector<double> w(d);
      for (double& v : w) v = rng.normal();
      raw.push_back(w);
      probes.push_back(Tensor::vector(w));
    }
    // Oracle: twice the sum over unordered pairs.
    double expected = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        double d2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = raw[i][c] - raw[j][c];
          d2 += diff * diff;
        }
        expected += 2.0 * d2;
      }
    }
    Tape tape;
    const double got = invariant_risk_penalty(tape, probes).item();
    EXPECT_GE(got, 0.0);
    EXPECT_NEAR(got, expected, 1e-12 * std::max(1.0, expected))
        << "trial " << trial;
  }
}

TEST(InvariantRiskPenalty, PermutationInvariant) {
  Rng rng(47);
  std::vector<Tensor> probes;
  for (int e = 0; e < 4; ++e) {
    std::vector<double> w(5);
    for (double& v : w) v = rng.normal();
    probes.push_back(Tensor::vector(w));
  }
  Tape tape;
  const double base = invariant_risk_penalty(tape, probes).item();
  std::vector<Tensor> shuffled = {probes[2], probes[0], probes[3], probes[1]};
  const double perm = invariant_risk_penalty(tape, shuffled).item();
  EXPECT_NEAR(perm, base, 1e-12 * std::max(1.0, base));
}

TEST(InvariantRiskPenalty, FewerThanTwoProbesIsAnError) {
  Tape tape;
  std::vector<Tensor> one = {Tensor::vector({1.0})};
  EXPECT_THROW(invariant_risk_penalty(tape, one), std::invalid_argument);
}

TEST(SupervisedLoss, UninformativeModelGivesLn2PerEnvironment) {
  ModelParams m = init_model(tiny_arch(3));
  for (DenseLayer& l : m.encoder) {
    std::fill(l.weight.value().begin(), l.weight.value().end(), 0.0);
  }
  std::fill(m.outcome_head.weight.value().begin(),
            m.outcome_head.weight.value().end(), 0.0);
  auto batches = random_batches(1, 4, 5, 90);
  batches[0].y = {0, 1, 0, 1};
  Tape tape;
  EXPECT_NEAR(supervised_loss(tape, m, batches).item(), std::log(2.0), 1e-12);
}

TEST(SupervisedLoss, SumsOverEnvironments) {
  const ModelParams m = init_model(tiny_arch(4));
  auto one = random_batches(1, 6, 5, 91);
  auto two = std::vector<EnvBatch>{one[0], one[0]};
  two[1].env_class = 1;
  Tape tape;
  const double a = supervised_loss(tape, m, one).item();
  const double b = supervised_loss(tape, m, two).item();
  EXPECT_DOUBLE_EQ(b, a + a);
}

TEST(SupervisedLoss, SaturatedCorrectPredictionsNearZero) {
  ModelParams m = init_model(tiny_arch(5));
  // Force a huge positive logit regardless of input.
  for (DenseLayer& l : m.encoder) {
    std::fill(l.weight.value().begin(), l.weight.value().end(), 0.0);
  }
  std::fill(m.outcome_head.weight.value().begin(),
            m.outcome_head.weight.value().end(), 0.0);
  m.outcome_head.bias.value()[0] = 200.0;
  auto batches = random_batches(1, 4, 5, 92);
  batches[0].y = {1, 1, 1, 1};
  Tape tape;
  EXPECT_LT(supervised_loss(tape, m, batches).item(), 1e-12);
}

TEST(EnvAdversarialLoss, UntrainedUniformHeadGivesLnK) {
  ModelParams m = init_model(tiny_arch(6));
  for (DenseLayer& l : m.env_head) {
    std::fill(l.weight.value().begin(), l.weight.value().end(), 0.0);
  }
  auto batches = random_batches(3, 5, 5, 93);
  Tape tape;
  EXPECT_NEAR(env_adversarial_loss(tape, m, batches, 1.0).item(),
              std::log(3.0), 1e-12);
}

TEST(EnvAdversarialLoss, ConstantEmbeddingsCannotBeatEntropy) {
  ModelParams m = init_model(tiny_arch(7));
  for (DenseLayer& l : m.encoder) {
    std::fill(l.weight.value().begin(), l.weight.value().end(), 0.0);
  }
  auto batches = random_batches(3, 8, 5, 94);
  Tape tape;
  // Equal batch sizes: empirical environment entropy is ln 3.
  EXPECT_GE(env_adversarial_loss(tape, m, batches, 1.0).item(),
            std::log(3.0) - 1e-9);
}

TEST(EnvAdversarialLoss, EnvClassOutOfRangeIsAnError) {
  const ModelParams m = init_model(tiny_arch(8));
  auto batches = random_batches(1, 4, 5, 95);
  batches[0].env_class = 3;  // K = 3, valid classes 0..2
  Tape tape;
  EXPECT_THROW(env_adversarial_loss(tape, m, batches, 1.0),
               std::invalid_argument);
}

// The reversal-layer sign contract on the real composite: the theta
// gradient of lambda * L_env through classify_env equals -lambda times the
// gradient of L_env built without any reversal layer.
TEST(EnvAdversarialLoss, ThetaGradientIsMinusLambdaTimesIdentityRun) {
  const ModelParams m = init_model(tiny_arch(9));
  auto batches = random_batches(3, 6, 5, 96);

  // Identity run: environment head applied directly, no reversal layer.
  const auto identity_env_loss = [&](Tape& tape) {
    std::vector<Tensor> embeddings;
    std::vector<int> classes;
    for (const EnvBatch& b : batches) {
      embeddings.push_back(encode(tape, m, b.x));
      classes.insert(classes.end(), b.x.rows(), b.env_class);
    }
    Tensor t = concat_rows(tape, embeddings);
    for (std::size_t i = 0; i + 1 < m.env_head.size(); ++i) {
      t = activation(tape,
                     affine(tape, t, m.env_head[i].weight, m.env_head[i].bias),
                     m.arch.act);
    }
    Tensor logits =
        affine(tape, t, m.env_head.back().weight, m.env_head.back().bias);
    return softmax_cross_entropy(tape, logits, classes);
  };

  std::vector<std::vector<double>> identity_grads;
  {
    Tape tape;
    Tensor loss = identity_env_loss(tape);
    m.zero_grad();
    backward(tape, loss);
    for (const Tensor& t : m.theta()) identity_grads.push_back(t.grad());
  }

  for (double lambda : {0.0, 0.5, 1.0, 10.0}) {
    Tape tape;
    Tensor loss = env_adversarial_loss(tape, m, batches, lambda);
    m.zero_grad();
    backward(tape, loss);
    const auto theta = m.theta();
    for (std::size_t p = 0; p < theta.size(); ++p) {
      for (std::size_t i = 0; i < theta[p].grad().size(); ++i) {
        EXPECT_NEAR(theta[p].grad()[i], -lambda * identity_grads[p][i], 1e-10)
            << "lambda " << lambda;
      }
    }
  }
}

TEST(TotalObjective, SwitchedOffModeMatchesPlainSupervisedBitForBit) {
  const ModelParams m = init_model(tiny_arch(10));
  auto batches = random_batches(2, 8, 5, 97);

  std::vector<std::vector<double>> plain;
  {
    Tape tape;
    Tensor loss = supervised_loss(tape, m, batches);
    m.zero_grad();
    backward(tape, loss);
    for (const Tensor& t : m.theta()) plain.push_back(t.grad());
  }
  {
    Tape tape;
    ObjectiveResult res = total_objective(tape, m, batches, 0.0, 0.0, 0.1);
    m.zero_grad();
    backward(tape, res.backprop);
    const auto theta = m.theta();
    for (std::size_t p = 0; p < theta.size(); ++p) {
      EXPECT_EQ(theta[p].grad(), plain[p]) << "theta tensor " << p;
    }
  }
}

TEST(TotalObjective, BreakdownCompositionRule) {
  const ModelParams m = init_model(tiny_arch(11));
  auto batches = random_batches(3, 8, 5, 98);
  Tape tape;
  const ObjectiveResult res = total_objective(tape, m, batches, 2.0, 0.0, 0.1);
  EXPECT_GT(res.values.r_inv, 0.0);  // logged even though gamma = 0
  EXPECT_DOUBLE_EQ(res.values.total,
                   res.values.l_sup - 2.0 * res.values.l_env);
  const ObjectiveResult on = total_objective(tape, m, batches, 2.0, 0.5, 0.1);
  EXPECT_DOUBLE_EQ(on.values.total, on.values.l_sup + 0.5 * on.values.r_inv -
                                        2.0 * on.values.l_env);
}

TEST(TotalObjective, SingleEnvironmentSkipsPenaltyAndLogsZero) {
  ArchConfig arch = tiny_arch(12, 5, 1);
  const ModelParams m = init_model(arch);
  auto batches = random_batches(1, 6, 5, 99);
  Tape tape;
  const ObjectiveResult res = total_objective(tape, m, batches, 0.0, 0.0, 0.1);
  EXPECT_FALSE(res.r_inv.defined());
  EXPECT_EQ(res.values.r_inv, 0.0);
}

// Full-objective gradient check from the encoder's point of view. The
// value function is built with an identity environment path and explicit
// -lambda scaling, which equals what theta descends through the GRL.
TEST(TotalObjective, ThetaGradientsMatchFiniteDifferences) {
  const double lambda = 0.7, gamma = 0.3, ridge_eps = 0.2;
  const ModelParams m = init_model(tiny_arch(13));
  auto batches = random_batches(3, 6, 5, 100);

  const LossBuilder theta_view = [&](Tape& tape) -> Tensor {
    std::vector<Tensor> embeddings;
    std::vector<int> classes;
    for (const EnvBatch& b : batches) {
      embeddings.push_back(encode(tape, m, b.x));
      classes.insert(classes.end(), b.x.rows(), b.env_class);
    }
    Tensor l_sup;
    for (std::size_t e = 0; e < batches.size(); ++e) {
      Tensor term = bce_with_logits(
          tape, predict_outcome(tape, m, embeddings[e]), batches[e].y);
      l_sup = l_sup.defined() ? add(tape, l_sup, term) : term;
    }
    Tensor pooled = concat_rows(tape, embeddings);
    Tensor t = pooled;
    for (std::size_t i = 0; i + 1 < m.env_head.size(); ++i) {
      t = activation(tape,
                     affine(tape, t, m.env_head[i].weight, m.env_head[i].bias),
                     m.arch.act);
    }
    Tensor env_logits =
        affine(tape, t, m.env_head.back().weight, m.env_head.back().bias);
    Tensor l_env = softmax_cross_entropy(tape, env_logits, classes);
    Tensor scale_node = rms(tape, pooled);
    std::vector<Tensor> probes;
    for (std::size_t e = 0; e < batches.size(); ++e) {
      Tensor normalized = div_by_scalar(tape, embeddings[e], scale_node);
      probes.push_back(fit_probe(tape, normalized, batches[e].y, ridge_eps));
    }
    Tensor r_inv = invariant_risk_penalty(tape, probes);
    return add(tape, add(tape, l_sup, scale(tape, r_inv, gamma)),
               scale(tape, l_env, -lambda));
  };

  const double err = finite_diff_check(theta_view, m.theta(), 1e-5);
  EXPECT_LE(err, 1e-4);

  // The GRL-built objective must produce the same theta gradients as the
  // explicit theta view.
  std::vector<std::vector<double>> view_grads;
  {
    Tape tape;
    Tensor loss = theta_view(tape);
    m.zero_grad();
    backward(tape, loss);
    for (const Tensor& t : m.theta()) view_grads.push_back(t.grad());
  }
  {
    Tape tape;
    ObjectiveResult res =
        total_objective(tape, m, batches, lambda, gamma, ridge_eps);
    m.zero_grad();
    backward(tape, res.backprop);
    const auto theta = m.theta();
    for (std::size_t p = 0; p < theta.size(); ++p) {
      for (std::size_t i = 0; i < theta[p].grad().size(); ++i) {
        EXPECT_NEAR(theta[p].grad()[i], view_grads[p][i], 1e-10);
      }
    }
  }
}

// With the practice block switched off and identical observation styles,
// environments are exchangeable: which sampled dataset fills which env slot
// must not shift the penalty's distribution. Rank-sum test on E[R_inv]
// between the identity assignment and a permuted assignment.
TEST(InvariantRiskPenalty, ExchangeableEnvironmentsPassPermutationTest) {
  ArchConfig arch = tiny_arch(400, 8, 3);
  const ModelParams m = init_model(arch);

  EnvSpec base;
  base.d_z = 4;
  base.d_c = 4;
  base.outcome_coef = {2.0, -1.0, 1.5, 0.5};
  base.spurious_strength = 0.0;  // c-block removed from the mechanism
  base.missing_rate = 0.1;
  base.obs_noise = 0.2;
  base.class_prior = 0.5;

  const auto r_inv_value = [&](const std::array<int, 3>& slot_of,
                               std::uint64_t draw) {
    std::vector<EnvBatch> batches(3);
    for (int slot = 0; slot < 3; ++slot) {
      EnvSpec spec = base;
      spec.env_id = slot_of[slot];
      spec.seed = mix_seed(1000 + draw, slot_of[slot]);
      const Dataset ds = generate(spec, 40);
      EnvBatch b;
      b.x = Tensor::matrix(ds.n, ds.p, ds.x);
      b.y = ds.y;
      b.env_class = slot;
      batches[slot] = std::move(b);
    }
    Tape tape;
    return total_objective(tape, m, batches, 0.0, 1.0, 4.0).values.r_inv;
  };

  const int draws = 24;
  std::vector<double> identity_vals, permuted_vals;
  for (int d = 0; d < draws; ++d) {
    identity_vals.push_back(r_inv_value({0, 1, 2}, d));
    permuted_vals.push_back(r_inv_value({2, 0, 1}, 1000 + d));
  }

  // Mann-Whitney rank-sum with normal approximation.
  std::vector<std::pair<double, int>> all;
  for (double v : identity_vals) all.push_back({v, 0});
  for (double v : permuted_vals) all.push_back({v, 1});
  std::sort(all.begin(), all.end());
  double rank_sum0 = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].second == 0) rank_sum0 += static_cast<double>(i + 1);
  }
  const double n0 = draws, n1 = draws;
  const double u = rank_sum0 - n0 * (n0 + 1) / 2.0;
  const double mu = n0 * n1 / 2.0;
  const double sigma = std::sqrt(n0 * n1 * (n0 + n1 + 1) / 12.0);
  const double z = (u - mu) / sigma;
  // Two-sided p > 0.01 corresponds to |z| < 2.576.
  EXPECT_LT(std::abs(z), 2.576) << "rank-sum z = " << z;
}

TEST(TotalObjective, PsiGradientsMatchFiniteDifferencesOfEnvLoss) {
  const ModelParams m = init_model(tiny_arch(14));
  auto batches = random_batches(3, 5, 5, 101);
  // For psi the objective reduces to +L_env regardless of lambda.
  const LossBuilder psi_view = [&](Tape& tape) {
    return env_adversarial_loss(tape, m, batches, 1.25);
  };
  const double err = finite_diff_check(psi_view, m.psi(), 1e-5);
  EXPECT_LE(err, 1e-4);

  std::vector<std::vector<double>> env_only;
  {
    Tape tape;
    Tensor loss = env_adversarial_loss(tape, m, batches, 1.25);
    m.zero_grad();
    backward(tape, loss);
    for (const Tensor& t : m.psi()) env_only.push_back(t.grad());
  }
  {
    Tape tape;
    ObjectiveResult res = total_objective(tape, m, batches, 1.25, 0.4, 0.1);
    m.zero_grad();
    backward(tape, res.backprop);
    const auto psi = m.psi();
    for (std::size_t p = 0; p < psi.size(); ++p) {
      for (std::size_t i = 0; i < psi[p].grad().size(); ++i) {
        EXPECT_NEAR(psi[p].grad()[i], env_only[p][i], 1e-12);
      }
    }
  }
}

}  // namespace
}  // namespace pirl
