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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pirl/rng.hpp"
#include "pirl/tensor.hpp"

namespace pirl {

/// Discrimination and calibration summary for one evaluation split.
struct MetricsReport {
  double auroc = 0.0;
  double auprc = 0.0;
  double brier = 0.0;
  double ece = 0.0;
  std::size_t n = 0;
  std::string split_label;  // "in_distribution" or "held_out"
};

/// Held-out accuracy of a linear environment classifier on frozen
/// embeddings. chance_level is 1/K for K distinct environments.
struct LeakageReport {
  double env_accuracy = 0.0;
  double chance_level = 0.0;
  std::uint64_t probe_seed = 0;
};

namespace metrics_detail {

inline void require_binary(const std::vector<int>& labels, const char* op) {
  for (int y : labels) {
    detail::require(y == 0 || y == 1,
                    std::string(op) + ": labels must be 0/1");
  }
}

}  // namespace metrics_detail

/// Mann-Whitney AUROC: the probability that a random positive outranks a
/// random negative, with ties credited one half. Computed through average
/// ranks, which is exact for any tie pattern.
inline double auroc(const std::vector<double>& scores,
                    const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  detail::require(n == labels.size(), "auroc: length mismatch");
  metrics_detail::require_binary(labels, "auroc");
  std::size_t pos = 0;
  for (int y : labels) pos += static_cast<std::size_t>(y);
  const std::size_t neg = n - pos;
  detail::require(pos > 0 && neg > 0,
                  "auroc: undefined when only one class is present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double u = rank_sum_pos -
                   0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Average precision with step-wise summation; tied scores are processed
/// as one block so the result does not depend on their input order.
inline double auprc(const std::vector<double>& scores,
                    const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  detail::require(n == labels.size(), "auprc: length mismatch");
  metrics_detail::require_binary(labels, "auprc");
  std::size_t total_pos = 0;
  for (int y : labels) total_pos += static_cast<std::size_t>(y);
  detail::require(total_pos > 0, "auprc: no positive labels");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double ap = 0.0;
  double last_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) ++tp; else ++fp;
    }
    const double recall =
        static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision =
        static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - last_recall) * precision;
    last_recall = recall;
    i = j;
  }
  return ap;
}

/// Mean squared error of probabilities against binary outcomes.
inline double brier(const std::vector<double>& probs,
                    const std::vector<int>& labels) {
  const std::size_t n = probs.size();
  detail::require(n > 0 && n == labels.size(), "brier: bad input lengths");
  metrics_detail::require_binary(labels, "brier");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    detail::require(probs[i] >= 0.0 && probs[i] <= 1.0,
                    "brier: probability outside [0,1]");
    const double d = probs[i] - static_cast<double>(labels[i]);
    s += d * d;
  }
  return s / static_cast<double>(n);
}

/// Expected calibration error over equal-width bins on [0,1]. Bin b covers
/// [b/B, (b+1)/B); the last bin is closed at 1. Empty bins contribute zero.
inline double ece(const std::vector<double>& probs,
                  const std::vector<int>& labels, int bins = 10) {
  const std::size_t n = probs.size();
  detail::require(bins >= 1, "ece: bins must be >= 1");
  detail::require(n > 0 && n == labels.size(), "ece: bad input lengths");
  metrics_detail::require_binary(labels, "ece");
  const std::size_t b = static_cast<std::size_t>(bins);
  std::vector<double> conf(b, 0.0), acc(b, 0.0);
  std::vector<std::size_t> count(b, 0);
  for (std::size_t i = 0; i < n; ++i) {
    detail::require(probs[i] >= 0.0 && probs[i] <= 1.0,
                    "ece: probability outside [0,1]");
    std::size_t idx = static_cast<std::size_t>(probs[i] * static_cast<double>(b));
    if (idx >= b) idx = b - 1;
    conf[idx] += probs[i];
    acc[idx] += static_cast<double>(labels[i]);
    ++count[idx];
  }
  double e = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    if (count[k] == 0) continue;
    const double w = static_cast<double>(count[k]) / static_cast<double>(n);
    e += w * std::abs(conf[k] / count[k] - acc[k] / count[k]);
  }
  return e;
}

/// All four metrics for one split of predicted probabilities.
inline MetricsReport evaluate_probs(const std::vector<double>& probs,
                                    const std::vector<int>& labels,
                                    std::string split_label, int bins = 10) {
  MetricsReport r;
  r.auroc = auroc(probs, labels);
  r.auprc = auprc(probs, labels);
  r.brier = brier(probs, labels);
  r.ece = ece(probs, labels, bins);
  r.n = probs.size();
  r.split_label = std::move(split_label);
  return r;
}

/// Fits a multinomial linear classifier on a train split of the embeddings
/// and reports held-out environment accuracy. Full-batch gradient descent
/// with a fixed budget (stop at grad-inf-norm <= 1e-5 or 5000 iterations)
/// so differences in accuracy reflect the embeddings, not probe training.
/// Features are standardized on the probe-train split; the probe remains a
/// linear function of the embedding.
inline LeakageReport leakage_probe(const std::vector<double>& embeddings,
                                   std::size_t dim,
                                   const std::vector<int>& env_ids,
                                   double train_frac, std::uint64_t seed) {
  detail::require(dim > 0, "leakage_probe: dim must be > 0");
  const std::size_t n = env_ids.size();
  detail::require(embeddings.size() == n * dim,
                  "leakage_probe: embedding size mismatch");
  detail::require(train_frac > 0.0 && train_frac < 1.0,
                  "leakage_probe: train_frac must be in (0,1)");
  int max_env = -1;
  for (int e : env_ids) {
    detail::require(e >= 0, "leakage_probe: negative env id");
    max_env = std::max(max_env, e);
  }
  const std::size_t k = static_cast<std::size_t>(max_env) + 1;
  std::vector<std::size_t> class_count(k, 0);
  for (int e : env_ids) ++class_count[static_cast<std::size_t>(e)];
  std::size_t distinct = 0;
  for (std::size_t c : class_count) distinct += (c > 0) ? 1 : 0;
  detail::require(distinct >= 2,
                  "leakage_probe: need at least two distinct environments");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(train_frac * static_cast<double>(n)));
  detail::require(n_train < n, "leakage_probe: empty probe-test split");

  // Standardization statistics from the probe-train split only.
  std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
  for (std::size_t r = 0; r < n_train; ++r) {
    for (std::size_t j = 0; j < dim; ++j) {
      mean[j] += embeddings[order[r] * dim + j];
    }
  }
  for (double& m : mean) m /= static_cast<double>(n_train);
  for (std::size_t r = 0; r < n_train; ++r) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = embeddings[order[r] * dim + j] - mean[j];
      sd[j] += d * d;
    }
  }
  for (double& s : sd) {
    s = std::sqrt(s / static_cast<double>(n_train));
    if (s < 1e-8) s = 1.0;
  }
  const auto feature = [&](std::size_t row, std::size_t j) {
    return (embeddings[row * dim + j] - mean[j]) / sd[j];
  };

  std::vector<double> w(dim * k, 0.0), bias(k, 0.0);
  std::vector<double> gw(dim * k), gb(k), logits(k), probs(k);
  const double lr = 0.5;
  for (int iter = 0; iter < 5000; ++iter) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t r = 0; r < n_train; ++r) {
      const std::size_t row = order[r];
      for (std::size_t c = 0; c < k; ++c) {
        double z = bias[c];
        for (std::size_t j = 0; j < dim; ++j) z += w[j * k + c] * feature(row, j);
        logits[c] = z;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double se = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        probs[c] = std::exp(logits[c] - mx);
        se += probs[c];
      }
      for (std::size_t c = 0; c < k; ++c) {
        const double hot =
            (static_cast<std::size_t>(env_ids[row]) == c) ? 1.0 : 0.0;
        const double g = probs[c] / se - hot;
        gb[c] += g;
        for (std::size_t j = 0; j < dim; ++j) {
          gw[j * k + c] += g * feature(row, j);
        }
      }
    }
    double gmax = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n_train);
    for (double& g : gw) { g *= inv_n; gmax = std::max(gmax, std::abs(g)); }
    for (double& g : gb) { g *= inv_n; gmax = std::max(gmax, std::abs(g)); }
    if (gmax <= 1e-5) break;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
    for (std::size_t c = 0; c < k; ++c) bias[c] -= lr * gb[c];
  }

  std::size_t correct = 0;
  for (std::size_t r = n_train; r < n; ++r) {
    const std::size_t row = order[r];
    std::size_t best = 0;
    double best_z = -1e300;
    for (std::size_t c = 0; c < k; ++c) {
      double z = bias[c];
      for (std::size_t j = 0; j < dim; ++j) z += w[j * k + c] * feature(row, j);
      if (z > best_z) { best_z = z; best = c; }
    }
    if (best == static_cast<std::size_t>(env_ids[row])) ++correct;
  }

  LeakageReport rep;
  rep.env_accuracy =
      static_cast<double>(correct) / static_cast<double>(n - n_train);
  rep.chance_level = 1.0 / static_cast<double>(distinct);
  rep.probe_seed = seed;
  return rep;
}

}  // namespace pirl
