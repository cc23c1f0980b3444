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

#include <cmath>
#include <memory>
#include <vector>

#include "pirl/models.hpp"
#include "pirl/tensor.hpp"

namespace pirl {

/// One environment's minibatch. env_class is the position of the
/// environment among the training environments (the class the adversary
/// predicts), not the original env id.
struct EnvBatch {
  Tensor x;
  std::vector<int> y;
  int env_class = 0;
};

/// Scalar values of the three objective terms for logging. The reported
/// total is the encoder's view, l_sup + gamma * r_inv - lambda * l_env;
/// the backward pass realizes the same signs through the reversal layer.
struct LossBreakdown {
  double l_sup = 0.0;
  double l_env = 0.0;
  double r_inv = 0.0;
  double total = 0.0;
};

namespace detail {

/// Cholesky solve for symmetric positive definite M (row-major m x m).
inline std::vector<double> solve_spd(std::size_t m,
                                     const std::vector<double>& M,
                                     const std::vector<double>& rhs) {
  std::vector<double> L(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = M[i * m + j];
      for (std::size_t k = 0; k < j; ++k) s -= L[i * m + k] * L[j * m + k];
      if (i == j) {
        require(s > 0.0, "solve_spd: matrix not positive definite");
        L[i * m + i] = std::sqrt(s);
      } else {
        L[i * m + j] = s / L[j * m + j];
      }
    }
  }
  std::vector<double> x(rhs);
  for (std::size_t i = 0; i < m; ++i) {  // L y = rhs
    for (std::size_t k = 0; k < i; ++k) x[i] -= L[i * m + k] * x[k];
    x[i] /= L[i * m + i];
  }
  for (std::size_t ii = m; ii-- > 0;) {  // L^T x = y
    for (std::size_t k = ii + 1; k < m; ++k) x[ii] -= L[k * m + ii] * x[k];
    x[ii] /= L[ii * m + ii];
  }
  return x;
}

}  // namespace detail

/// Ridge regression of real targets on [H | 1], solved in closed form:
/// w = (A^T A + eps I)^{-1} A^T t. The last coordinate of w is the
/// intercept. Differentiable with respect to H: the backward pass applies
/// the exact derivative of the solve,
///   u = M^{-1} g_w,  gA = t u^T - A (u w^T + w u^T),
/// so the penalty built on these weights shapes the encoder with true
/// gradients rather than an inner optimization loop.
inline Tensor fit_ridge(Tape& tape, const Tensor& H,
                        std::vector<double> targets, double ridge_eps) {
  detail::require(ridge_eps > 0.0, "fit_ridge: ridge must be > 0");
  detail::require(H.rank() == 2, "fit_ridge: H must be a matrix");
  const std::size_t n = H.rows(), d = H.cols(), m = d + 1;
  detail::require(targets.size() == n, "fit_ridge: target length mismatch");
  detail::require(n >= 1, "fit_ridge: empty design");

  const auto& hv = H.value();
  auto M = std::make_shared<std::vector<double>>(m * m, 0.0);
  std::vector<double> v(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = hv.data() + i * d;
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) {
        (*M)[a * m + b] += row[a] * row[b];
      }
      (*M)[a * m + d] += row[a];  // intercept column
      v[a] += row[a] * targets[i];
    }
    (*M)[d * m + d] += 1.0;
    v[d] += targets[i];
  }
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < a; ++b) (*M)[a * m + b] = (*M)[b * m + a];
    (*M)[a * m + a] += ridge_eps;
  }

  Tensor w = Tensor::vector(detail::solve_spd(m, *M, v));
  auto shared_targets = std::make_shared<std::vector<double>>(std::move(targets));
  tape.record([H, w, M, shared_targets, n, d, m]() {
    const std::vector<double> u = detail::solve_spd(m, *M, w.grad());
    const auto& hv = H.value();
    const auto& wv = w.value();
    auto& gh = H.grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = hv.data() + i * d;
      double au = u[d], aw = wv[d];  // intercept column contributes 1
      for (std::size_t k = 0; k < d; ++k) {
        au += row[k] * u[k];
        aw += row[k] * wv[k];
      }
      const double t = (*shared_targets)[i];
      for (std::size_t j = 0; j < d; ++j) {
        gh[i * d + j] += t * u[j] - au * wv[j] - aw * u[j];
      }
    }
  });
  return w;
}

/// Per-environment optimal linear predictor on the current embeddings,
/// with +-1 label coding. Returns d+1 weights, intercept last.
inline Tensor fit_probe(Tape& tape, const Tensor& embeddings,
                        const std::vector<int>& y, double ridge_eps) {
  std::vector<double> targets(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    detail::require(y[i] == 0 || y[i] == 1, "fit_probe: labels must be 0/1");
    targets[i] = static_cast<double>(2 * y[i] - 1);
  }
  return fit_ridge(tape, embeddings, std::move(targets), ridge_eps);
}

/// One fitted linear probe per training environment, intercept last.
struct ProbeWeights {
  std::vector<Tensor> w;
  double ridge = 0.1;
};

/// Sum over ordered pairs e != e' of |w_e - w_e'|^2; every unordered pair
/// counts twice. Zero exactly when all probes coincide.
inline Tensor invariant_risk_penalty(Tape& tape,
                                     const std::vector<Tensor>& probes) {
  detail::require(probes.size() >= 2,
                  "invariant_risk_penalty: need at least 2 environments");
  Tensor total;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    for (std::size_t j = 0; j < probes.size(); ++j) {
      if (i == j) continue;
      Tensor term = sum_squares(tape, sub(tape, probes[i], probes[j]));
      total = total.defined() ? add(tape, total, term) : term;
    }
  }
  return total;
}

inline Tensor invariant_risk_penalty(Tape& tape, const ProbeWeights& probes) {
  return invariant_risk_penalty(tape, probes.w);
}

/// Sum over environments of the per-environment mean supervised risk.
inline Tensor supervised_loss(Tape& tape, const ModelParams& params,
                              const std::vector<EnvBatch>& batches) {
  detail::require(!batches.empty(), "supervised_loss: no environment batches");
  Tensor total;
  for (const EnvBatch& batch : batches) {
    detail::require(batch.x.rows() > 0, "supervised_loss: empty batch");
    Tensor h = encode(tape, params, batch.x);
    Tensor logits = predict_outcome(tape, params, h);
    Tensor term = bce_with_logits(tape, logits, batch.y);
    total = total.defined() ? add(tape, total, term) : term;
  }
  return total;
}

/// Mean environment cross-entropy over the pooled batch, with the reversal
/// layer (scale lambda) between the encoder and the environment head. One
/// backward pass then sends +dL_env into psi and -lambda * dL_env into
/// theta, which is the minimax update direction for both players.
inline Tensor env_adversarial_loss(Tape& tape, const ModelParams& params,
                                   const std::vector<EnvBatch>& batches,
                                   double lambda) {
  detail::require(!batches.empty(),
                  "env_adversarial_loss: no environment batches");
  const std::size_t k = params.arch.num_train_envs;
  std::vector<Tensor> embeddings;
  std::vector<int> classes;
  for (const EnvBatch& batch : batches) {
    detail::require(batch.env_class >= 0 &&
                        static_cast<std::size_t>(batch.env_class) < k,
                    "env_adversarial_loss: env class " +
                        std::to_string(batch.env_class) + " out of range [0, " +
                        std::to_string(k) + ")");
    embeddings.push_back(encode(tape, params, batch.x));
    classes.insert(classes.end(), batch.x.rows(), batch.env_class);
  }
  Tensor pooled = embeddings.size() == 1 ? embeddings[0]
                                         : concat_rows(tape, embeddings);
  Tensor logits = classify_env(tape, params, pooled, lambda);
  return softmax_cross_entropy(tape, logits, classes);
}

/// All three terms evaluated on one shared set of per-environment
/// embeddings, plus the node to run backward on. Terms with a zero
/// coefficient are still evaluated for logging but excluded from the
/// backward graph, so switched-off modes reduce to their plain ancestors
/// bit for bit.
struct ObjectiveResult {
  Tensor l_sup;
  Tensor l_env;
  Tensor r_inv;     // undefined when fewer than 2 environments
  Tensor backprop;  // l_sup (+ gamma * r_inv) (+ l_env via the GRL)
  LossBreakdown values;
};

inline ObjectiveResult total_objective(Tape& tape, const ModelParams& params,
                                       const std::vector<EnvBatch>& batches,
                                       double lambda, double gamma,
                                       double ridge_eps) {
  detail::require(lambda >= 0.0 && gamma >= 0.0,
                  "total_objective: lambda and gamma must be >= 0");
  detail::require(!batches.empty(), "total_objective: no environment batches");
  const std::size_t k = params.arch.num_train_envs;

  std::vector<Tensor> embeddings;
  std::vector<int> classes;
  for (const EnvBatch& batch : batches) {
    detail::require(batch.x.rows() > 0, "total_objective: empty batch");
    detail::require(batch.env_class >= 0 &&
                        static_cast<std::size_t>(batch.env_class) < k,
                    "total_objective: env class out of range");
    embeddings.push_back(encode(tape, params, batch.x));
    classes.insert(classes.end(), batch.x.rows(), batch.env_class);
  }

  ObjectiveResult res;

  // Supervised risk: sum over environments of per-environment means.
  for (std::size_t e = 0; e < batches.size(); ++e) {
    Tensor logits = predict_outcome(tape, params, embeddings[e]);
    Tensor term = bce_with_logits(tape, logits, batches[e].y);
    res.l_sup = res.l_sup.defined() ? add(tape, res.l_sup, term) : term;
  }

  // Environment loss on the pooled embedding through the reversal layer.
  Tensor pooled = embeddings.size() == 1 ? embeddings[0]
                                         : concat_rows(tape, embeddings);
  {
    Tensor logits = classify_env(tape, params, pooled, lambda);
    res.l_env = softmax_cross_entropy(tape, logits, classes);
  }

  // Invariance penalty over per-environment closed-form probes. Probes are
  // fit on embeddings divided by one shared pooled RMS scale: the raw-scale
  // penalty is degenerate (the encoder can null it by rescaling h, which
  // rescales every probe by the inverse), while a shared scalar preserves
  // all between-environment differences the penalty is meant to measure.
  if (batches.size() >= 2) {
    Tensor scale_node = rms(tape, pooled);
    std::vector<Tensor> probes;
    for (std::size_t e = 0; e < batches.size(); ++e) {
      Tensor normalized = div_by_scalar(tape, embeddings[e], scale_node);
      probes.push_back(fit_probe(tape, normalized, batches[e].y, ridge_eps));
    }
    res.r_inv = invariant_risk_penalty(tape, probes);
  }

  res.backprop = res.l_sup;
  if (gamma > 0.0 && res.r_inv.defined()) {
    res.backprop = add(tape, res.backprop, scale(tape, res.r_inv, gamma));
  }
  if (lambda > 0.0) {
    res.backprop = add(tape, res.backprop, res.l_env);
  }

  res.values.l_sup = res.l_sup.item();
  res.values.l_env = res.l_env.item();
  res.values.r_inv = res.r_inv.defined() ? res.r_inv.item() : 0.0;
  res.values.total = res.values.l_sup + gamma * res.values.r_inv -
                     lambda * res.values.l_env;
  return res;
}

}  // namespace pirl
