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
#include <functional>
#include <stdexcept>
#include <vector>

#include "pirl/tensor.hpp"

namespace pirl {

/// Builds a scalar loss on a fresh tape from the current values of the
/// checked parameters. Called repeatedly under coordinate perturbations.
using LossBuilder = std::function<Tensor(Tape&)>;

/// Compares reverse-mode gradients against central finite differences,
/// coordinate by coordinate over every listed parameter. Returns
/// max |autodiff - central| / (|central| + 1e-8).
inline double finite_diff_check(const LossBuilder& make_loss,
                                const std::vector<Tensor>& params,
                                double step) {
  detail::require(step > 0.0, "finite_diff_check: step must be > 0");

  std::vector<std::vector<double>> autodiff;
  {
    Tape tape;
    Tensor loss = make_loss(tape);
    for (const Tensor& p : params) p.zero_grad();
    loss.zero_grad();
    backward(tape, loss);
    for (const Tensor& p : params) autodiff.push_back(p.grad());
  }

  const auto eval = [&make_loss]() {
    Tape tape;  // forward only; the tape is discarded
    return make_loss(tape).item();
  };

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.value()[i];
      p.value()[i] = saved + step;
      const double f_plus = eval();
      p.value()[i] = saved - step;
      const double f_minus = eval();
      p.value()[i] = saved;
      const double central = (f_plus - f_minus) / (2.0 * step);
      const double err =
          std::abs(autodiff[pi][i] - central) / (std::abs(central) + 1e-8);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace pirl
