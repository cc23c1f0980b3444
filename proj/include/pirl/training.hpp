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

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pirl/datagen.hpp"
#include "pirl/metrics.hpp"
#include "pirl/objectives.hpp"

namespace pirl {

/// Ablation grid: which penalty terms are active. The mode pins the
/// effective coefficients; lambda/gamma below only apply where the mode
/// allows them.
enum class TrainMode { kErm, kAdversarialOnly, kIrmOnly, kFull };

inline const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kErm: return "erm";
    case TrainMode::kAdversarialOnly: return "adversarial_only";
    case TrainMode::kIrmOnly: return "irm_only";
    case TrainMode::kFull: return "full";
  }
  return "?";
}

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "erm") return TrainMode::kErm;
  if (s == "adversarial_only") return TrainMode::kAdversarialOnly;
  if (s == "irm_only") return TrainMode::kIrmOnly;
  if (s == "full") return TrainMode::kFull;
  throw std::invalid_argument("unknown train mode '" + s + "'");
}

struct TrainConfig {
  double lambda = 1.0;
  double gamma = 1.0;
  double ridge = 0.1;
  double lr_theta = 0.05;
  double lr_psi = 0.1;
  int epochs = 30;
  std::size_t batch_per_env = 64;
  int psi_steps_per_theta_step = 3;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kFull;
  double val_fraction = 0.2;  // training-env rows held out for the logged AUROC

  double effective_lambda() const {
    return (mode == TrainMode::kErm || mode == TrainMode::kIrmOnly) ? 0.0
                                                                    : lambda;
  }
  double effective_gamma() const {
    return (mode == TrainMode::kErm || mode == TrainMode::kAdversarialOnly)
               ? 0.0
               : gamma;
  }

  void validate() const {
    detail::require(lambda >= 0.0 && gamma >= 0.0,
                    "TrainConfig: lambda and gamma must be >= 0");
    detail::require(ridge > 0.0, "TrainConfig: ridge must be > 0");
    detail::require(lr_theta >= 0.0 && lr_psi >= 0.0,
                    "TrainConfig: learning rates must be >= 0");
    detail::require(epochs >= 0, "TrainConfig: epochs must be >= 0");
    detail::require(batch_per_env >= 1, "TrainConfig: batch_per_env >= 1");
    detail::require(psi_steps_per_theta_step >= 1,
                    "TrainConfig: psi steps per theta step must be >= 1");
    detail::require(val_fraction > 0.0 && val_fraction < 1.0,
                    "TrainConfig: val_fraction must be in (0, 1)");
  }
};

struct EpochRecord {
  LossBreakdown loss;     // mean over the epoch's theta steps
  double val_auroc = 0.0;
  double wall_ms = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

/// CSV columns: epoch,l_sup,l_env,r_inv,total,val_auroc.
inline void write_history_csv(const TrainHistory& history, std::ostream& os) {
  os << "epoch,l_sup,l_env,r_inv,total,val_auroc\n";
  char buf[160];
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    const EpochRecord& r = history.epochs[e];
    std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,%.12g,%.12g\n", e,
                  r.loss.l_sup, r.loss.l_env, r.loss.r_inv, r.loss.total,
                  r.val_auroc);
    os << buf;
  }
}

namespace detail {

inline void sgd_update(const std::vector<Tensor>& params, double lr) {
  for (const Tensor& t : params) {
    auto& v = t.value();
    const auto& g = t.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

inline void require_finite_grads(const std::vector<Tensor>& params,
                                 const char* where) {
  for (const Tensor& t : params) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) {
        throw std::runtime_error(std::string(where) +
                                 ": non-finite gradient, aborting step");
      }
    }
  }
}

}  // namespace detail

/// One adversary update: descend L_env in psi only. theta tensors receive
/// gradient through the reversal layer but are never touched.
inline void step_psi(const ModelParams& params,
                     const std::vector<EnvBatch>& batches,
                     const TrainConfig& config) {
  Tape tape;
  Tensor loss = env_adversarial_loss(tape, params, batches,
                                     config.effective_lambda());
  if (!std::isfinite(loss.item())) {
    throw std::runtime_error("step_psi: non-finite environment loss");
  }
  params.zero_grad();
  backward(tape, loss);
  detail::require_finite_grads(params.psi(), "step_psi");
  detail::sgd_update(params.psi(), config.lr_psi);
}

/// One encoder/predictor update against the full objective; psi untouched.
/// Returns the logged loss terms for this step.
inline LossBreakdown step_theta(const ModelParams& params,
                                const std::vector<EnvBatch>& batches,
                                const TrainConfig& config) {
  Tape tape;
  ObjectiveResult res =
      total_objective(tape, params, batches, config.effective_lambda(),
                      config.effective_gamma(), config.ridge);
  if (!std::isfinite(res.values.l_sup) || !std::isfinite(res.values.l_env) ||
      !std::isfinite(res.values.r_inv)) {
    throw std::runtime_error("step_theta: non-finite loss, aborting step");
  }
  params.zero_grad();
  backward(tape, res.backprop);
  detail::require_finite_grads(params.theta(), "step_theta");
  detail::sgd_update(params.theta(), config.lr_theta);
  return res.values;
}

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

namespace detail {

inline Tensor rows_subset(const Dataset& ds,
                          const std::vector<std::size_t>& idx,
                          std::size_t begin, std::size_t count) {
  std::vector<double> x(count * ds.p);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t src = idx[begin + r];
    std::copy(ds.x.begin() + static_cast<std::ptrdiff_t>(src * ds.p),
              ds.x.begin() + static_cast<std::ptrdiff_t>((src + 1) * ds.p),
              x.begin() + static_cast<std::ptrdiff_t>(r * ds.p));
  }
  return Tensor::matrix(count, ds.p, std::move(x));
}

}  // namespace detail

/// Predicted outcome probabilities for a dataset under the current params.
inline std::vector<double> predict_probs(const ModelParams& params,
                                         const Dataset& ds) {
  Tape tape;
  Tensor x = Tensor::matrix(ds.n, ds.p, ds.x);
  Tensor logits = predict_outcome(tape, params, encode(tape, params, x));
  std::vector<double> probs(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) {
    probs[i] = detail::sigmoid(logits.value()[i]);
  }
  return probs;
}

/// Alternating minimax loop. Per theta step, psi_steps_per_theta_step
/// adversary updates run first on the same minibatches. Batches are
/// per-environment with equal size, reshuffled every epoch from the run
/// seed; the whole trajectory is a pure function of (arch, data, config).
/// A val_fraction slice of each training environment is held out of the
/// updates and scored for the per-epoch validation AUROC.
inline TrainResult train(const ArchConfig& arch_in, const LoeoSplit& data,
                         const TrainConfig& config) {
  config.validate();
  detail::require(!data.train.empty(), "train: no training environments");
  detail::require(
      data.train.size() >= 2 || config.mode == TrainMode::kErm,
      "train: a single training environment only supports mode=erm");

  ArchConfig arch = arch_in;
  arch.num_train_envs = data.train.size();
  detail::require(arch.input_dim == data.train[0].p,
                  "train: arch input_dim != dataset feature count");

  TrainResult result;
  result.params = init_model(arch);
  if (config.epochs == 0) return result;

  // Per-environment fit/validation carve. Rows are pre-shuffled by the
  // generator, so contiguous slices are exchangeable.
  std::vector<Dataset> fit, val;
  for (const Dataset& ds : data.train) {
    auto parts = split_rows(ds, 1.0 - config.val_fraction);
    fit.push_back(std::move(parts.first));
    val.push_back(std::move(parts.second));
  }
  std::size_t min_fit = fit[0].n;
  for (const Dataset& ds : fit) min_fit = std::min(min_fit, ds.n);
  detail::require(config.batch_per_env <= min_fit,
                  "train: batch_per_env exceeds per-environment rows (" +
                      std::to_string(min_fit) + ")");
  const std::size_t batches_per_epoch = min_fit / config.batch_per_env;

  // Pooled validation rows for the per-epoch AUROC.
  std::vector<int> val_labels;
  Dataset pooled_val;
  pooled_val.p = fit[0].p;
  for (const Dataset& ds : val) {
    pooled_val.x.insert(pooled_val.x.end(), ds.x.begin(), ds.x.end());
    val_labels.insert(val_labels.end(), ds.y.begin(), ds.y.end());
    pooled_val.n += ds.n;
  }
  pooled_val.y = val_labels;

  Rng shuffle_rng(mix_seed(config.seed, 0x5417));
  std::vector<std::vector<std::size_t>> idx(fit.size());
  for (std::size_t e = 0; e < fit.size(); ++e) {
    idx[e].resize(fit[e].n);
    for (std::size_t i = 0; i < fit[e].n; ++i) idx[e][i] = i;
  }

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (auto& order : idx) shuffle_rng.shuffle(order);

    LossBreakdown mean{};
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      std::vector<EnvBatch> batches;
      for (std::size_t e = 0; e < fit.size(); ++e) {
        EnvBatch batch;
        batch.x = detail::rows_subset(fit[e], idx[e],
                                      b * config.batch_per_env,
                                      config.batch_per_env);
        batch.y.resize(config.batch_per_env);
        for (std::size_t r = 0; r < config.batch_per_env; ++r) {
          batch.y[r] = fit[e].y[idx[e][b * config.batch_per_env + r]];
        }
        batch.env_class = static_cast<int>(e);
        batches.push_back(std::move(batch));
      }
      for (int s = 0; s < config.psi_steps_per_theta_step; ++s) {
        step_psi(result.params, batches, config);
      }
      const LossBreakdown step = step_theta(result.params, batches, config);
      mean.l_sup += step.l_sup;
      mean.l_env += step.l_env;
      mean.r_inv += step.r_inv;
      mean.total += step.total;
    }
    const double inv = 1.0 / static_cast<double>(batches_per_epoch);
    mean.l_sup *= inv;
    mean.l_env *= inv;
    mean.r_inv *= inv;
    mean.total *= inv;

    EpochRecord record;
    record.loss = mean;
    try {
      record.val_auroc =
          auroc(predict_probs(result.params, pooled_val), val_labels);
    } catch (const std::invalid_argument&) {
      record.val_auroc = std::numeric_limits<double>::quiet_NaN();
    }
    record.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    result.history.epochs.push_back(record);
  }
  return result;
}

}  // namespace pirl
