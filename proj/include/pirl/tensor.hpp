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
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pirl {

namespace detail {

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_finite(const std::vector<double>& v, const char* where) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument(std::string(where) +
                                  ": non-finite value encountered");
    }
  }
}

}  // namespace detail

/// Dense 64-bit tensor with a same-shape gradient accumulator. Copies of a
/// Tensor share storage; an op's output is a fresh node, so node identity is
/// the storage itself. Gradients accumulate additively across backward
/// passes -- callers zero them between optimization steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(double v) {
    return Tensor({1}, std::vector<double>{v});
  }

  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> v) {
    detail::require(v.size() == rows * cols,
                    "Tensor::matrix: " + std::to_string(v.size()) +
                        " values for shape " + detail::shape_str({rows, cols}));
    return Tensor({rows, cols}, std::move(v));
  }

  static Tensor zeros(std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  bool defined() const { return static_cast<bool>(data_); }
  const std::vector<std::size_t>& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t size() const { return data_->value.size(); }

  std::size_t rows() const {
    detail::require(rank() == 2, "Tensor::rows: not a matrix");
    return data_->shape[0];
  }
  std::size_t cols() const {
    detail::require(rank() == 2, "Tensor::cols: not a matrix");
    return data_->shape[1];
  }

  // A Tensor is a shared handle; accessors are const while the underlying
  // storage stays mutable, mirroring how ops and optimizers use it.
  std::vector<double>& value() const { return data_->value; }
  std::vector<double>& grad() const { return data_->grad; }

  double item() const {
    detail::require(size() == 1, "Tensor::item: tensor has " +
                                     std::to_string(size()) + " elements");
    return data_->value[0];
  }

  void zero_grad() const {
    std::fill(data_->grad.begin(), data_->grad.end(), 0.0);
  }

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  struct Data {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;
  };

  Tensor(std::vector<std::size_t> shape, std::vector<double> v) {
    data_ = std::make_shared<Data>();
    data_->shape = std::move(shape);
    data_->grad.assign(v.size(), 0.0);
    data_->value = std::move(v);
  }

  std::shared_ptr<Data> data_;
};

/// Define-by-run operation record. Each forward op appends one backward
/// closure; ops therefore sit in topological order and a single reverse
/// sweep visits every node exactly once. A tape is built per forward pass
/// and discarded afterwards.
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }

  std::size_t num_ops() const { return ops_.size(); }

  void run_backward() {
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> ops_;
};

enum class Activation { kTanh, kRelu, kSigmoid };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

namespace detail {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace detail

/// x[n x p] @ W[p x q] + b[q], broadcast over rows.
inline Tensor affine(Tape& tape, const Tensor& x, const Tensor& W,
                     const Tensor& b) {
  detail::require(x.rank() == 2 && W.rank() == 2 && b.rank() == 1,
                  "affine: expected matrix, matrix, vector operands");
  detail::require(
      x.cols() == W.rows() && W.cols() == b.shape()[0],
      "affine: shape mismatch " + detail::shape_str(x.shape()) + " @ " +
          detail::shape_str(W.shape()) + " + " + detail::shape_str(b.shape()));
  const std::size_t n = x.rows(), p = x.cols(), q = W.cols();
  Tensor out = Tensor::zeros({n, q});
  const auto& xv = x.value();
  const auto& wv = W.value();
  const auto& bv = b.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < q; ++j) ov[i * q + j] = bv[j];
    for (std::size_t k = 0; k < p; ++k) {
      const double xik = xv[i * p + k];
      if (xik == 0.0) continue;
      for (std::size_t j = 0; j < q; ++j) ov[i * q + j] += xik * wv[k * q + j];
    }
  }
  detail::require_finite(ov, "affine");
  tape.record([x, W, b, out, n, p, q]() {
    const auto& go = out.grad();
    const auto& xv = x.value();
    const auto& wv = W.value();
    auto& gx = x.grad();
    auto& gw = W.grad();
    auto& gb = b.grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < q; ++j) {
        const double g = go[i * q + j];
        gb[j] += g;
        if (g == 0.0) continue;
        for (std::size_t k = 0; k < p; ++k) {
          gx[i * p + k] += g * wv[k * q + j];
          gw[k * q + j] += g * xv[i * p + k];
        }
      }
    }
  });
  return out;
}

/// Elementwise nonlinearity; the derivative is reconstructed from the
/// stored output (tanh, sigmoid) or input sign (relu) during backward.
inline Tensor activation(Tape& tape, const Tensor& x, Activation kind) {
  detail::require_finite(x.value(), "activation");
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    switch (kind) {
      case Activation::kTanh: ov[i] = std::tanh(xv[i]); break;
      case Activation::kRelu: ov[i] = xv[i] > 0.0 ? xv[i] : 0.0; break;
      case Activation::kSigmoid: ov[i] = detail::sigmoid(xv[i]); break;
    }
  }
  tape.record([x, out, kind]() {
    const auto& go = out.grad();
    const auto& ov = out.value();
    const auto& xv = x.value();
    auto& gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      switch (kind) {
        case Activation::kTanh:
          gx[i] += go[i] * (1.0 - ov[i] * ov[i]);
          break;
        case Activation::kRelu:
          gx[i] += xv[i] > 0.0 ? go[i] : 0.0;
          break;
        case Activation::kSigmoid:
          gx[i] += go[i] * ov[i] * (1.0 - ov[i]);
          break;
      }
    }
  });
  return out;
}

/// Identity in the forward direction; backward multiplies the upstream
/// gradient by -lambda. This single op carries the adversarial minimax:
/// the head above it is trained normally while everything below receives
/// the reversed, scaled gradient.
inline Tensor grad_reverse(Tape& tape, const Tensor& x, double lambda) {
  detail::require(lambda >= 0.0,
                  "grad_reverse: lambda must be >= 0, got " +
                      std::to_string(lambda));
  Tensor out = Tensor::zeros(x.shape());
  out.value() = x.value();
  tape.record([x, out, lambda]() {
    const auto& go = out.grad();
    auto& gx = x.grad();
    const double s = -lambda;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s * go[i];
  });
  return out;
}

/// Mean binary cross-entropy on logits, computed in log-sum-exp form:
/// mean_i softplus(-(2*y_i - 1) * logit_i). Stable for |logit| up to 1e4.
inline Tensor bce_with_logits(Tape& tape, const Tensor& logits,
                              const std::vector<int>& labels) {
  const std::size_t n = logits.size();
  detail::require(n > 0, "bce_with_logits: empty input");
  detail::require(labels.size() == n,
                  "bce_with_logits: " + std::to_string(labels.size()) +
                      " labels for " + std::to_string(n) + " logits");
  detail::require_finite(logits.value(), "bce_with_logits");
  const auto& lv = logits.value();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    detail::require(labels[i] == 0 || labels[i] == 1,
                    "bce_with_logits: labels must be 0/1");
    const double t = (labels[i] == 1 ? lv[i] : -lv[i]);
    total += detail::softplus(-t);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  tape.record([logits, labels, out, n]() {
    const double g = out.grad()[0] / static_cast<double>(n);
    const auto& lv = logits.value();
    auto& gl = logits.grad();
    for (std::size_t i = 0; i < n; ++i) {
      gl[i] += g * (detail::sigmoid(lv[i]) - static_cast<double>(labels[i]));
    }
  });
  return out;
}

/// Mean negative log-softmax of the true class over rows, stable form.
inline Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits,
                                    const std::vector<int>& classes) {
  detail::require(logits.rank() == 2, "softmax_cross_entropy: logits must be n x K");
  const std::size_t n = logits.rows(), k = logits.cols();
  detail::require(n > 0, "softmax_cross_entropy: empty input");
  detail::require(classes.size() == n,
                  "softmax_cross_entropy: class count mismatch");
  detail::require_finite(logits.value(), "softmax_cross_entropy");
  const auto& lv = logits.value();
  // Softmax probabilities are stored for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(n * k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = classes[i];
    detail::require(c >= 0 && static_cast<std::size_t>(c) < k,
                    "softmax_cross_entropy: class index " + std::to_string(c) +
                        " out of range [0, " + std::to_string(k) + ")");
    double mx = lv[i * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, lv[i * k + j]);
    double se = 0.0;
    for (std::size_t j = 0; j < k; ++j) se += std::exp(lv[i * k + j] - mx);
    const double lse = mx + std::log(se);
    for (std::size_t j = 0; j < k; ++j) {
      (*probs)[i * k + j] = std::exp(lv[i * k + j] - lse);
    }
    total += lse - lv[i * k + static_cast<std::size_t>(c)];
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  tape.record([logits, classes, probs, out, n, k]() {
    const double g = out.grad()[0] / static_cast<double>(n);
    auto& gl = logits.grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double hot =
            (static_cast<std::size_t>(classes[i]) == j) ? 1.0 : 0.0;
        gl[i * k + j] += g * ((*probs)[i * k + j] - hot);
      }
    }
  });
  return out;
}

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

}  // namespace detail

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.value()[i] = a.value()[i] + b.value()[i];
  }
  tape.record([a, b, out]() {
    for (std::size_t i = 0; i < out.size(); ++i) {
      a.grad()[i] += out.grad()[i];
      b.grad()[i] += out.grad()[i];
    }
  });
  return out;
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.value()[i] = a.value()[i] - b.value()[i];
  }
  tape.record([a, b, out]() {
    for (std::size_t i = 0; i < out.size(); ++i) {
      a.grad()[i] += out.grad()[i];
      b.grad()[i] -= out.grad()[i];
    }
  });
  return out;
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.value()[i] = a.value()[i] * b.value()[i];
  }
  tape.record([a, b, out]() {
    for (std::size_t i = 0; i < out.size(); ++i) {
      a.grad()[i] += out.grad()[i] * b.value()[i];
      b.grad()[i] += out.grad()[i] * a.value()[i];
    }
  });
  return out;
}

inline Tensor scale(Tape& tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.value()[i] = c * a.value()[i];
  tape.record([a, out, c]() {
    for (std::size_t i = 0; i < out.size(); ++i) {
      a.grad()[i] += c * out.grad()[i];
    }
  });
  return out;
}

inline Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  Tensor out = Tensor::scalar(s);
  tape.record([a, out]() {
    const double g = out.grad()[0];
    for (std::size_t i = 0; i < a.size(); ++i) a.grad()[i] += g;
  });
  return out;
}

inline Tensor sum_squares(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v * v;
  Tensor out = Tensor::scalar(s);
  tape.record([a, out]() {
    const double g = out.grad()[0];
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.grad()[i] += 2.0 * g * a.value()[i];
    }
  });
  return out;
}

/// Root-mean-square of all entries, as a scalar node: sqrt(mean(x^2) + c).
/// The small floor keeps the value differentiable at x = 0.
inline Tensor rms(Tape& tape, const Tensor& a, double floor = 1e-12) {
  const std::size_t n = a.size();
  detail::require(n > 0, "rms: empty tensor");
  double ss = 0.0;
  for (double v : a.value()) ss += v * v;
  const double r = std::sqrt(ss / static_cast<double>(n) + floor);
  Tensor out = Tensor::scalar(r);
  tape.record([a, out, n]() {
    const double g = out.grad()[0] / (static_cast<double>(n) * out.value()[0]);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.grad()[i] += g * a.value()[i];
    }
  });
  return out;
}

/// Elementwise x / s for a scalar node s; gradient flows into both.
inline Tensor div_by_scalar(Tape& tape, const Tensor& a, const Tensor& s) {
  detail::require(s.size() == 1, "div_by_scalar: divisor must be scalar");
  detail::require(s.item() != 0.0, "div_by_scalar: division by zero");
  Tensor out = Tensor::zeros(a.shape());
  const double inv = 1.0 / s.item();
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.value()[i] = a.value()[i] * inv;
  }
  tape.record([a, s, out]() {
    const double sv = s.value()[0];
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.grad()[i] += out.grad()[i] / sv;
      dot += out.grad()[i] * a.value()[i];
    }
    s.grad()[0] -= dot / (sv * sv);
  });
  return out;
}

/// Stack matrices with equal column counts into one batch.
inline Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t q = parts.front().cols();
  std::size_t n = 0;
  for (const Tensor& p : parts) {
    detail::require(p.rank() == 2 && p.cols() == q,
                    "concat_rows: column mismatch");
    n += p.rows();
  }
  Tensor out = Tensor::zeros({n, q});
  std::size_t at = 0;
  for (const Tensor& p : parts) {
    std::copy(p.value().begin(), p.value().end(), out.value().begin() + at);
    at += p.value().size();
  }
  tape.record([parts, out]() {
    std::size_t at = 0;
    for (const Tensor& p : parts) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        p.grad()[i] += out.grad()[at + i];
      }
      at += p.size();
    }
  });
  return out;
}

/// Reverse sweep from a scalar loss. Seeds d(loss)/d(loss) = 1 and adds
/// each op's contribution into its inputs' grad slots, so values reached
/// through several consumers accumulate all paths.
inline void backward(Tape& tape, const Tensor& loss) {
  detail::require(loss.size() == 1,
                  "backward: loss must be scalar, got shape " +
                      detail::shape_str(loss.shape()));
  loss.grad()[0] += 1.0;
  tape.run_backward();
}

}  // namespace pirl
