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
#include <cstdint>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pirl/rng.hpp"
#include "pirl/tensor.hpp"

namespace pirl {

/// One environment's observation process. The outcome mechanism
/// (outcome_coef, outcome_intercept) is shared verbatim across every spec
/// in a suite: only how the latent state is *observed* differs between
/// environments, never how it drives the label.
///
/// Observation model for a sample:
///   z ~ N(0, I_dz),  y ~ Bernoulli(sigmoid(beta . z + beta0))
///   c_j = rho * (2y - 1)
///         + sqrt(1 - rho^2) * (sqrt(a) * g + sqrt(1 - a) * v_j)
///         + practice_shift
///   x = [ z + obs_noise * eps  |  c with entries zeroed at missing_rate ]
/// with g (one per sample) and v_j standard normal, a = spurious_common_noise.
/// rho is the per-feature correlation of the practice block with the
/// +-1-coded label; practice_shift is a per-environment documentation
/// baseline that moves the whole practice block.
struct EnvSpec {
  int env_id = 0;
  double spurious_strength = 0.0;   // rho in [-1, 1]
  double missing_rate = 0.0;        // in [0, 1)
  double obs_noise = 0.1;           // sigma > 0
  double class_prior = 0.5;         // pi in (0, 1)
  double practice_shift = 0.0;      // baseline offset of the practice block
  double spurious_common_noise = 0.0;  // shared fraction of practice noise
  std::uint64_t seed = 0;

  std::size_t d_z = 8;
  std::size_t d_c = 8;
  std::vector<double> outcome_coef;  // beta, length d_z, shared in a suite
  double outcome_intercept = 0.0;    // beta0, shared in a suite

  void validate() const {
    detail::require(spurious_strength >= -1.0 && spurious_strength <= 1.0,
                    "EnvSpec: spurious_strength outside [-1, 1]");
    detail::require(missing_rate >= 0.0 && missing_rate < 1.0,
                    "EnvSpec: missing_rate outside [0, 1)");
    detail::require(obs_noise > 0.0, "EnvSpec: obs_noise must be > 0");
    detail::require(class_prior > 0.0 && class_prior < 1.0,
                    "EnvSpec: class_prior outside (0, 1)");
    detail::require(spurious_common_noise >= 0.0 &&
                        spurious_common_noise <= 1.0,
                    "EnvSpec: spurious_common_noise outside [0, 1]");
    detail::require(d_z >= 1 && d_c >= 1, "EnvSpec: dimensions must be >= 1");
    detail::require(outcome_coef.size() == d_z,
                    "EnvSpec: outcome_coef length != d_z");
  }
};

/// Latent state of one sample before observation: physiologic z drives y,
/// practice context c does not.
struct LatentSample {
  std::vector<double> z;
  std::vector<double> c;
  int y = 0;
};

/// Sampled (x, y, e) triples from a single environment.
struct Dataset {
  std::size_t n = 0;
  std::size_t p = 0;          // d_z + d_c, physiologic block first
  std::vector<double> x;      // row-major n x p
  std::vector<int> y;
  std::vector<int> env;       // constant, the generating spec's env_id
};

/// Suite-level knobs for the default environment family.
struct SuiteProfile {
  int num_envs = 4;
  std::size_t d_z = 8;
  std::size_t d_c = 8;
  double rho_train = 0.9;
  double rho_holdout = -0.9;
  double logit_scale = 30.0;         // |beta|; sharpness of y given z
  double shift_spread = 1.2;         // practice_shift range across train envs
  double spurious_common_noise = 0.5;
  double missing_spread = 0.6;       // train env i gets m = spread * (i%3)/2
  double obs_noise_base = 0.05;      // train env i gets sigma = base + step*(i%3)
  double obs_noise_step = 0.05;
};

/// Builds num_envs specs sharing one outcome mechanism. Training
/// environments carry a positively correlated practice block; the last
/// environment (intended as holdout) carries the opposite sign, so a model
/// leaning on the practice block walks into an inverted shortcut there.
/// Missingness, noise, prior and practice baseline vary across envs to make
/// environments distinguishable.
inline std::vector<EnvSpec> make_env_suite(const SuiteProfile& profile,
                                           std::uint64_t master_seed) {
  detail::require(profile.num_envs >= 2,
                  "make_env_suite: invariance needs at least 2 environments");
  detail::require(profile.d_z >= 1 && profile.d_c >= 1,
                  "make_env_suite: dimensions must be >= 1");

  // Shared outcome mechanism: direction drawn once, scaled to logit_scale.
  Rng rng(mix_seed(master_seed, 0xBE7A));
  std::vector<double> beta(profile.d_z);
  double norm2 = 0.0;
  for (double& b : beta) {
    b = rng.normal();
    norm2 += b * b;
  }
  const double scale = profile.logit_scale / std::sqrt(norm2);
  for (double& b : beta) b *= scale;

  const int train_envs = profile.num_envs - 1;
  // Per-environment observation styles. The missingness spread attenuates
  // the practice shortcut differently per environment, so per-environment
  // optimal probes disagree about it.
  static constexpr double kPrior[3] = {0.45, 0.50, 0.55};

  std::vector<EnvSpec> suite(static_cast<std::size_t>(profile.num_envs));
  for (int e = 0; e < profile.num_envs; ++e) {
    EnvSpec& spec = suite[static_cast<std::size_t>(e)];
    spec.env_id = e;
    spec.d_z = profile.d_z;
    spec.d_c = profile.d_c;
    spec.outcome_coef = beta;
    spec.outcome_intercept = 0.0;
    spec.spurious_common_noise = profile.spurious_common_noise;
    spec.seed = mix_seed(master_seed, static_cast<std::uint64_t>(e) + 1);
    if (e < train_envs) {
      spec.spurious_strength = profile.rho_train;
      spec.missing_rate = profile.missing_spread * (e % 3) / 2.0;
      spec.obs_noise = profile.obs_noise_base + profile.obs_noise_step * (e % 3);
      spec.class_prior = kPrior[e % 3];
      spec.practice_shift =
          train_envs == 1
              ? 0.0
              : profile.shift_spread *
                    (2.0 * static_cast<double>(e) / (train_envs - 1) - 1.0);
    } else {
      spec.spurious_strength = profile.rho_holdout;
      spec.missing_rate = 0.25 * profile.missing_spread;
      spec.obs_noise = profile.obs_noise_base + 0.5 * profile.obs_noise_step;
      spec.class_prior = 0.50;
      spec.practice_shift = 0.5 * profile.shift_spread;
    }
    spec.validate();
  }
  return suite;
}

inline std::vector<EnvSpec> default_env_suite(int num_envs,
                                              std::uint64_t master_seed) {
  SuiteProfile profile;
  profile.num_envs = num_envs;
  return make_env_suite(profile, master_seed);
}

/// Samples n rows from one environment. Pure function of (spec, n): the
/// same arguments always return a bitwise-identical Dataset. The class
/// prior is hit by per-class quota rejection (within 1/(2n) of pi), which
/// preserves the conditional law of z given y. Rows are shuffled at the end
/// so any contiguous slice is representative despite the quota tail.
inline Dataset generate(const EnvSpec& spec, std::size_t n) {
  spec.validate();
  detail::require(n >= 1, "generate: n must be >= 1");
  Rng rng(spec.seed);

  const std::size_t want_pos = static_cast<std::size_t>(
      std::llround(spec.class_prior * static_cast<double>(n)));
  const std::size_t want_neg = n - want_pos;

  std::vector<LatentSample> latents;
  latents.reserve(n);
  std::size_t have_pos = 0, have_neg = 0;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 1000 * n + 1000;
  while (have_pos < want_pos || have_neg < want_neg) {
    detail::require(++attempts <= max_attempts,
                    "generate: class prior unreachable by rejection");
    LatentSample s;
    s.z.resize(spec.d_z);
    double logit = spec.outcome_intercept;
    for (std::size_t j = 0; j < spec.d_z; ++j) {
      s.z[j] = rng.normal();
      logit += spec.outcome_coef[j] * s.z[j];
    }
    s.y = rng.bernoulli(detail::sigmoid(logit)) ? 1 : 0;
    if (s.y == 1) {
      if (have_pos == want_pos) continue;
      ++have_pos;
    } else {
      if (have_neg == want_neg) continue;
      ++have_neg;
    }
    latents.push_back(std::move(s));
  }

  // Observation pass: practice block, baseline shift, missingness, noise.
  const double rho = spec.spurious_strength;
  const double noise_sd = std::sqrt(1.0 - rho * rho);
  const double w_common = std::sqrt(spec.spurious_common_noise);
  const double w_indep = std::sqrt(1.0 - spec.spurious_common_noise);
  for (LatentSample& s : latents) {
    s.c.resize(spec.d_c);
    const double g = rng.normal();
    const double signal = rho * static_cast<double>(2 * s.y - 1);
    for (std::size_t j = 0; j < spec.d_c; ++j) {
      s.c[j] = signal + noise_sd * (w_common * g + w_indep * rng.normal()) +
               spec.practice_shift;
    }
    for (std::size_t j = 0; j < spec.d_c; ++j) {
      if (rng.bernoulli(spec.missing_rate)) s.c[j] = 0.0;
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);

  Dataset ds;
  ds.n = n;
  ds.p = spec.d_z + spec.d_c;
  ds.x.resize(n * ds.p);
  ds.y.resize(n);
  ds.env.assign(n, spec.env_id);
  for (std::size_t i = 0; i < n; ++i) {
    const LatentSample& s = latents[order[i]];
    double* row = ds.x.data() + i * ds.p;
    for (std::size_t j = 0; j < spec.d_z; ++j) {
      row[j] = s.z[j] + spec.obs_noise * rng.normal();
    }
    for (std::size_t j = 0; j < spec.d_c; ++j) row[spec.d_z + j] = s.c[j];
    ds.y[i] = s.y;
  }
  return ds;
}

/// Training environments plus the held-out one, generated with per-spec
/// seeds so the datasets are disjoint by construction.
struct LoeoSplit {
  std::vector<Dataset> train;
  Dataset holdout;
  std::vector<int> train_env_ids;  // original env ids, index = class label
};

inline LoeoSplit loeo_split(const std::vector<EnvSpec>& suite, int holdout_id,
                            std::size_t n_per_env) {
  bool found = false;
  for (const EnvSpec& s : suite) found = found || (s.env_id == holdout_id);
  detail::require(found, "loeo_split: holdout id " +
                             std::to_string(holdout_id) +
                             " not present in the suite");
  LoeoSplit split;
  for (const EnvSpec& s : suite) {
    if (s.env_id == holdout_id) {
      split.holdout = generate(s, n_per_env);
    } else {
      split.train.push_back(generate(s, n_per_env));
      split.train_env_ids.push_back(s.env_id);
    }
  }
  return split;
}

/// Deterministic row split: the first round(first_frac * n) rows and the
/// rest. Generated rows are already shuffled, so both parts are exchangeable.
inline std::pair<Dataset, Dataset> split_rows(const Dataset& ds,
                                              double first_frac) {
  detail::require(first_frac > 0.0 && first_frac < 1.0,
                  "split_rows: fraction must be in (0, 1)");
  const std::size_t n_first = static_cast<std::size_t>(
      std::llround(first_frac * static_cast<double>(ds.n)));
  detail::require(n_first >= 1 && n_first < ds.n,
                  "split_rows: split leaves an empty part");
  Dataset a, b;
  a.n = n_first;
  b.n = ds.n - n_first;
  a.p = b.p = ds.p;
  a.x.assign(ds.x.begin(),
             ds.x.begin() + static_cast<std::ptrdiff_t>(n_first * ds.p));
  b.x.assign(ds.x.begin() + static_cast<std::ptrdiff_t>(n_first * ds.p),
             ds.x.end());
  a.y.assign(ds.y.begin(), ds.y.begin() + static_cast<std::ptrdiff_t>(n_first));
  b.y.assign(ds.y.begin() + static_cast<std::ptrdiff_t>(n_first), ds.y.end());
  a.env.assign(ds.env.begin(),
               ds.env.begin() + static_cast<std::ptrdiff_t>(n_first));
  b.env.assign(ds.env.begin() + static_cast<std::ptrdiff_t>(n_first),
               ds.env.end());
  return {std::move(a), std::move(b)};
}

/// CSV export: header x_0..x_{p-1},y,env then one row per sample.
inline void write_csv(const Dataset& ds, std::ostream& os) {
  for (std::size_t j = 0; j < ds.p; ++j) os << "x_" << j << ",";
  os << "y,env\n";
  char buf[40];
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.p; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.x[i * ds.p + j]);
      os << buf << ",";
    }
    os << ds.y[i] << "," << ds.env[i] << "\n";
  }
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  detail::require(out.good(), "write_csv: cannot open " + path);
  write_csv(ds, out);
}

}  // namespace pirl
