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

#include "pirl/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pirl/rng.hpp"

namespace pirl {
namespace {

// Brute-force pairwise concordance count: every (positive, negative) pair,
// ties worth one half. The implementation under test uses ranks instead.
double auroc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  double won = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      if (s[i] > s[j]) won += 1.0;
      else if (s[i] == s[j]) won += 0.5;
    }
  }
  return won / static_cast<double>(pairs);
}

TEST(Auroc, PerfectSeparationIsOne) {
  EXPECT_DOUBLE_EQ(auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
}

TEST(Auroc, AllTiesGiveHalf) {
  EXPECT_DOUBLE_EQ(auroc({0.3, 0.3, 0.3, 0.3}, {0, 1, 0, 1}), 0.5);
}

TEST(Auroc, FourPointExample) {
  const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auroc(s, y), 0.75);
  EXPECT_DOUBLE_EQ(auroc(s, y), auroc_oracle(s, y));
}

TEST(Auroc, MatchesBruteForceOnRandomInputsWithTies) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.below(40);
    std::vector<double> s(n);
    std::vector<int> y(n);
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = 0.1 * static_cast<double>(rng.below(8));  // deliberate ties
      y[i] = static_cast<int>(rng.below(2));
      (y[i] ? has1 : has0) = true;
    }
    if (!has0 || !has1) continue;
    EXPECT_NEAR(auroc(s, y), auroc_oracle(s, y), 1e-12) << "trial " << trial;
  }
}

TEST(Auroc, InvariantUnderStrictlyIncreasingTransforms) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 10 + rng.below(30);
    std::vector<double> s(n), s_exp(n), s_aff(n);
    std::vector<int> y(n);
    y[0] = 0; y[1] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.normal();
      if (i > 1) y[i] = static_cast<int>(rng.below(2));
      s_exp[i] = std::exp(s[i]);
      s_aff[i] = 3.0 * s[i] + 7.0;
    }
    const double base = auroc(s, y);
    EXPECT_NEAR(auroc(s_exp, y), base, 1e-12);
    EXPECT_NEAR(auroc(s_aff, y), base, 1e-12);
  }
}

TEST(Auroc, ComplementIdentityWithoutTies) {
  Rng rng(13);
  const std::size_t n = 31;
  std::vector<double> s(n), neg(n);
  std::vector<int> y(n);
  y[0] = 0; y[1] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = rng.normal();  // continuous draws: ties have probability zero
    neg[i] = -s[i];
    if (i > 1) y[i] = static_cast<int>(rng.below(2));
  }
  EXPECT_NEAR(auroc(s, y) + auroc(neg, y), 1.0, 1e-12);
}

TEST(Auroc, SingleClassIsAnError) {
  EXPECT_THROW(auroc({0.1, 0.2}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(auroc({0.1, 0.2}, {0, 0}), std::invalid_argument);
}

TEST(Auprc, PerfectRankingIsOne) {
  EXPECT_DOUBLE_EQ(auprc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}), 1.0);
}

TEST(Auprc, ConstantScoresGiveExactPositiveRate) {
  EXPECT_DOUBLE_EQ(auprc({0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 0}), 0.25);
}

TEST(Auprc, HandSummationExample) {
  // Oracle: AP = (1*1 + (2/3)*1) / 2 over the two recall steps.
  EXPECT_NEAR(auprc({0.9, 0.8, 0.7}, {1, 0, 1}), (1.0 + 2.0 / 3.0) / 2.0,
              1e-12);
}

TEST(Auprc, ZeroPositivesIsAnError) {
  EXPECT_THROW(auprc({0.5, 0.2}, {0, 0}), std::invalid_argument);
}

TEST(Brier, ConstantHalfIsQuarter) {
  EXPECT_DOUBLE_EQ(brier({0.5, 0.5, 0.5}, {1, 0, 1}), 0.25);
}

TEST(Brier, PerfectPredictionsAreZero) {
  EXPECT_DOUBLE_EQ(brier({1.0, 0.0, 1.0}, {1, 0, 1}), 0.0);
}

TEST(Brier, TwoTermArithmetic) {
  EXPECT_NEAR(brier({0.8, 0.4}, {1, 0}), 0.10, 1e-15);
}

TEST(Brier, ConstantRatePredictionEqualsBernoulliVariance) {
  // 3 positives of 10 at constant 0.3: brier = pi*(1-pi).
  std::vector<double> p(10, 0.3);
  std::vector<int> y(10, 0);
  y[0] = y[1] = y[2] = 1;
  EXPECT_NEAR(brier(p, y), 0.3 * 0.7, 1e-15);
}

TEST(Brier, RejectsOutOfRangeProbability) {
  EXPECT_THROW(brier({1.2}, {1}), std::invalid_argument);
}

TEST(Ece, PerfectlyCalibratedSingleBin) {
  std::vector<double> p(10, 0.7);
  std::vector<int> y(10, 0);
  for (int i = 0; i < 7; ++i) y[i] = 1;
  // Zero up to accumulation rounding (0.7 is not exactly representable).
  EXPECT_NEAR(ece(p, y, 1), 0.0, 1e-12);
}

TEST(Ece, ExactZeroOnePredictions) {
  EXPECT_DOUBLE_EQ(ece({1.0, 0.0, 1.0, 0.0}, {1, 0, 1, 0}, 10), 0.0);
}

TEST(Ece, TwoBinHandComputation) {
  // Bin [0,0.5): conf 0.2, acc 1 -> 0.8 weighted 1/2.
  // Bin [0.5,1]: conf 0.9, acc 1 -> 0.1 weighted 1/2. Total 0.45.
  EXPECT_NEAR(ece({0.2, 0.9}, {1, 1}, 2), 0.45, 1e-15);
}

TEST(Ece, LastBinClosedAtOne) {
  EXPECT_DOUBLE_EQ(ece({1.0}, {1}, 10), 0.0);
  EXPECT_NEAR(ece({1.0}, {0}, 10), 1.0, 1e-15);
}

TEST(EvaluateProbs, PureFunctionRepeatable) {
  Rng rng(5);
  std::vector<double> p(50);
  std::vector<int> y(50);
  y[0] = 0; y[1] = 1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = rng.uniform01();
    if (i > 1) y[i] = static_cast<int>(rng.below(2));
  }
  const MetricsReport a = evaluate_probs(p, y, "in_distribution");
  const MetricsReport b = evaluate_probs(p, y, "in_distribution");
  EXPECT_EQ(a.auroc, b.auroc);
  EXPECT_EQ(a.auprc, b.auprc);
  EXPECT_EQ(a.brier, b.brier);
  EXPECT_EQ(a.ece, b.ece);
  EXPECT_GE(a.auroc, 0.0);
  EXPECT_LE(a.auroc, 1.0);
}

TEST(LeakageProbe, OneHotEmbeddingsFullyLeak) {
  const std::size_t n = 400, k = 4;
  std::vector<double> emb(n * k, 0.0);
  std::vector<int> env(n);
  Rng rng(3);
  for (std::size_t i = 0; i < n; ++i) {
    env[i] = static_cast<int>(rng.below(k));
    emb[i * k + static_cast<std::size_t>(env[i])] = 1.0;
  }
  const LeakageReport rep = leakage_probe(emb, k, env, 0.5, 9);
  EXPECT_GE(rep.env_accuracy, 0.99);
  EXPECT_DOUBLE_EQ(rep.chance_level, 0.25);
}

TEST(LeakageProbe, NoiseEmbeddingsSitAtChance) {
  const std::size_t n = 2000, d = 8, k = 4;
  std::vector<double> emb(n * d);
  std::vector<int> env(n);
  Rng rng(4);
  for (std::size_t i = 0; i < n; ++i) {
    env[i] = static_cast<int>(i % k);
    for (std::size_t j = 0; j < d; ++j) emb[i * d + j] = rng.normal();
  }
  const LeakageReport rep = leakage_probe(emb, d, env, 0.5, 10);
  EXPECT_NEAR(rep.env_accuracy, 0.25, 0.05);
}

TEST(LeakageProbe, ShuffledLabelsFallInBinomialChanceBand) {
  const std::size_t n = 2000, d = 6, k = 4;
  std::vector<double> emb(n * d);
  std::vector<int> env(n);
  Rng rng(6);
  for (std::size_t i = 0; i < n; ++i) {
    env[i] = static_cast<int>(rng.below(k));
    for (std::size_t j = 0; j < d; ++j) {
      emb[i * d + j] = rng.normal() + static_cast<double>(env[i]);
    }
  }
  rng.shuffle(env);  // destroy the association
  const LeakageReport rep = leakage_probe(emb, d, env, 0.5, 11);
  // 95% binomial band around 1/4 with 1000 test rows.
  const double half_width = 1.96 * std::sqrt(0.25 * 0.75 / 1000.0);
  EXPECT_NEAR(rep.env_accuracy, 0.25, half_width + 0.02);
}

// Perceptron convergence oracle: if the two environments are linearly
// separable, the probe must find a near-perfect split as well.
TEST(LeakageProbe, MatchesPerceptronSeparabilityVerdict) {
  const std::size_t n = 600, d = 4;
  std::vector<double> emb(n * d);
  std::vector<int> env(n);
  Rng rng(8);
  for (std::size_t i = 0; i < n; ++i) {
    env[i] = static_cast<int>(i % 2);
    const double off = env[i] == 0 ? -2.0 : 2.0;
    for (std::size_t j = 0; j < d; ++j) emb[i * d + j] = rng.normal() + off;
  }
  // Perceptron with convergence check.
  std::vector<double> w(d + 1, 0.0);
  bool separable = false;
  for (int epoch = 0; epoch < 200 && !separable; ++epoch) {
    bool clean = true;
    for (std::size_t i = 0; i < n; ++i) {
      double z = w[d];
      for (std::size_t j = 0; j < d; ++j) z += w[j] * emb[i * d + j];
      const double target = env[i] == 0 ? -1.0 : 1.0;
      if (z * target <= 0.0) {
        clean = false;
        for (std::size_t j = 0; j < d; ++j) w[j] += target * emb[i * d + j];
        w[d] += target;
      }
    }
    separable = clean;
  }
  ASSERT_TRUE(separable);
  const LeakageReport rep = leakage_probe(emb, d, env, 0.5, 12);
  EXPECT_GE(rep.env_accuracy, 0.99);
}

TEST(LeakageProbe, SingleEnvironmentIsAnError) {
  std::vector<double> emb(10, 0.0);
  std::vector<int> env(10, 0);
  EXPECT_THROW(leakage_probe(emb, 1, env, 0.5, 1), std::invalid_argument);
}

}  // namespace
}  // namespace pirl
