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

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pirl/rng.hpp"
#include "pirl/tensor.hpp"

namespace pirl {

struct ArchConfig {
  std::size_t input_dim = 16;
  std::size_t embed_dim = 16;
  std::vector<std::size_t> encoder_hidden = {64, 32};
  std::vector<std::size_t> env_head_hidden = {32};
  std::size_t num_train_envs = 3;  // width of the environment logit layer
  Activation act = Activation::kTanh;
  std::uint64_t init_seed = 1;

  void validate() const {
    detail::require(input_dim >= 1 && embed_dim >= 1 && num_train_envs >= 1,
                    "ArchConfig: dimensions must be >= 1");
    for (std::size_t w : encoder_hidden) {
      detail::require(w >= 1, "ArchConfig: encoder width must be >= 1");
    }
    for (std::size_t w : env_head_hidden) {
      detail::require(w >= 1, "ArchConfig: env head width must be >= 1");
    }
  }
};

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // out
};

/// The three parameterized maps: encoder h (input -> embedding), linear
/// outcome head f (embedding -> logit), environment head g (embedding ->
/// env logits). theta = encoder + outcome head, psi = env head; the two
/// sets share no tensor, so updating one can never move the other.
struct ModelParams {
  ArchConfig arch;
  std::vector<DenseLayer> encoder;
  DenseLayer outcome_head;
  std::vector<DenseLayer> env_head;

  std::vector<Tensor> theta() const {
    std::vector<Tensor> out;
    for (const DenseLayer& l : encoder) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
    out.push_back(outcome_head.weight);
    out.push_back(outcome_head.bias);
    return out;
  }

  std::vector<Tensor> psi() const {
    std::vector<Tensor> out;
    for (const DenseLayer& l : env_head) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
    return out;
  }

  std::vector<Tensor> all_params() const {
    std::vector<Tensor> out = theta();
    for (Tensor& t : psi()) out.push_back(t);
    return out;
  }

  void zero_grad() const {
    for (const Tensor& t : all_params()) t.zero_grad();
  }

  /// Deep copy into fresh storage (copies of a ModelParams otherwise share
  /// their tensors).
  ModelParams clone() const {
    const auto copy_layer = [](const DenseLayer& l) {
      DenseLayer out;
      out.weight = Tensor::matrix(l.weight.rows(), l.weight.cols(),
                                  l.weight.value());
      out.bias = Tensor::vector(l.bias.value());
      return out;
    };
    ModelParams out;
    out.arch = arch;
    for (const DenseLayer& l : encoder) out.encoder.push_back(copy_layer(l));
    out.outcome_head = copy_layer(outcome_head);
    for (const DenseLayer& l : env_head) out.env_head.push_back(copy_layer(l));
    return out;
  }
};

namespace detail {

inline DenseLayer init_dense(std::size_t in, std::size_t out, Rng& rng) {
  // Fan-in scaled uniform weights, zero biases.
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  DenseLayer layer;
  layer.weight = Tensor::matrix(in, out, std::move(w));
  layer.bias = Tensor::vector(std::vector<double>(out, 0.0));
  return layer;
}

/// FNV-1a over the raw value bytes of a parameter set. Used by tests and
/// the training loop to verify that theta and psi updates stay isolated.
inline std::uint64_t param_hash(const std::vector<Tensor>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Tensor& t : params) {
    for (double v : t.value()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

}  // namespace detail

inline ModelParams init_model(const ArchConfig& arch) {
  arch.validate();
  Rng rng(arch.init_seed);
  ModelParams params;
  params.arch = arch;
  std::size_t in = arch.input_dim;
  for (std::size_t width : arch.encoder_hidden) {
    params.encoder.push_back(detail::init_dense(in, width, rng));
    in = width;
  }
  params.encoder.push_back(detail::init_dense(in, arch.embed_dim, rng));
  params.outcome_head = detail::init_dense(arch.embed_dim, 1, rng);
  in = arch.embed_dim;
  for (std::size_t width : arch.env_head_hidden) {
    params.env_head.push_back(detail::init_dense(in, width, rng));
    in = width;
  }
  params.env_head.push_back(detail::init_dense(in, arch.num_train_envs, rng));
  return params;
}

/// h(x): hidden layers with the configured nonlinearity, linear output
/// projection to the embedding.
inline Tensor encode(Tape& tape, const ModelParams& params, const Tensor& x) {
  detail::require(x.rank() == 2 && x.cols() == params.arch.input_dim,
                  "encode: input must be n x " +
                      std::to_string(params.arch.input_dim));
  Tensor h = x;
  for (std::size_t i = 0; i + 1 < params.encoder.size(); ++i) {
    h = activation(
        tape, affine(tape, h, params.encoder[i].weight, params.encoder[i].bias),
        params.arch.act);
  }
  const DenseLayer& last = params.encoder.back();
  return affine(tape, h, last.weight, last.bias);
}

/// f(h): linear outcome logits, one per row. Kept linear so the invariant
/// risk penalty reasons about the same class of predictors the model uses.
inline Tensor predict_outcome(Tape& tape, const ModelParams& params,
                              const Tensor& h) {
  detail::require(h.rank() == 2 && h.cols() == params.arch.embed_dim,
                  "predict_outcome: embedding must be n x " +
                      std::to_string(params.arch.embed_dim));
  return affine(tape, h, params.outcome_head.weight, params.outcome_head.bias);
}

/// g(grl(h)): environment logits. Forward output is independent of lambda;
/// lambda only scales (and flips) the gradient flowing back into theta.
inline Tensor classify_env(Tape& tape, const ModelParams& params,
                           const Tensor& h, double lambda) {
  detail::require(h.rank() == 2 && h.cols() == params.arch.embed_dim,
                  "classify_env: embedding must be n x " +
                      std::to_string(params.arch.embed_dim));
  Tensor t = grad_reverse(tape, h, lambda);
  for (std::size_t i = 0; i + 1 < params.env_head.size(); ++i) {
    t = activation(
        tape, affine(tape, t, params.env_head[i].weight, params.env_head[i].bias),
        params.arch.act);
  }
  const DenseLayer& last = params.env_head.back();
  return affine(tape, t, last.weight, last.bias);
}

// ---------------------------------------------------------------------------
// Checkpoint format: line-oriented text, exact round trip via %.17g.
//
//   pirl-checkpoint 1
//   arch <input_dim> <embed_dim> <num_train_envs> <activation> \
//        <enc widths...> ; <env widths...> ; <init_seed>
//   tensor <name> <rank> <extent...>
//   <values, space separated>
// ---------------------------------------------------------------------------

namespace detail {

inline void write_tensor(std::ostream& os, const std::string& name,
                         const Tensor& t) {
  os << "tensor " << name << " " << t.rank();
  for (std::size_t e : t.shape()) os << " " << e;
  os << "\n";
  char buf[40];
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", t.value()[i]);
    os << buf << (i + 1 < t.size() ? " " : "");
  }
  os << "\n";
}

inline Tensor read_tensor(std::istream& is, const std::string& expect_name) {
  std::string tag, name;
  std::size_t rank = 0;
  is >> tag >> name >> rank;
  require(bool(is) && tag == "tensor" && name == expect_name,
          "checkpoint: expected tensor '" + expect_name + "'");
  std::vector<std::size_t> shape(rank);
  std::size_t count = 1;
  for (std::size_t& e : shape) {
    is >> e;
    count *= e;
  }
  std::vector<double> values(count);
  for (double& v : values) is >> v;
  require(bool(is), "checkpoint: truncated tensor '" + expect_name + "'");
  if (rank == 2) return Tensor::matrix(shape[0], shape[1], std::move(values));
  return Tensor::vector(std::move(values));
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, std::ostream& os) {
  const ArchConfig& a = params.arch;
  os << "pirl-checkpoint 1\n";
  os << "arch " << a.input_dim << " " << a.embed_dim << " " << a.num_train_envs
     << " " << to_string(a.act);
  for (std::size_t w : a.encoder_hidden) os << " " << w;
  os << " ;";
  for (std::size_t w : a.env_head_hidden) os << " " << w;
  os << " ; " << a.init_seed << "\n";
  for (std::size_t i = 0; i < params.encoder.size(); ++i) {
    detail::write_tensor(os, "encoder." + std::to_string(i) + ".W",
                         params.encoder[i].weight);
    detail::write_tensor(os, "encoder." + std::to_string(i) + ".b",
                         params.encoder[i].bias);
  }
  detail::write_tensor(os, "outcome.W", params.outcome_head.weight);
  detail::write_tensor(os, "outcome.b", params.outcome_head.bias);
  for (std::size_t i = 0; i < params.env_head.size(); ++i) {
    detail::write_tensor(os, "env." + std::to_string(i) + ".W",
                         params.env_head[i].weight);
    detail::write_tensor(os, "env." + std::to_string(i) + ".b",
                         params.env_head[i].bias);
  }
}

inline void save_checkpoint(const ModelParams& params,
                            const std::string& path) {
  std::ofstream os(path);
  detail::require(os.good(), "save_checkpoint: cannot open " + path);
  save_checkpoint(params, os);
}

inline ModelParams load_checkpoint(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  detail::require(bool(is) && magic == "pirl-checkpoint" && version == 1,
                  "checkpoint: bad header");
  ArchConfig arch;
  std::string tag, act_name, tok;
  is >> tag >> arch.input_dim >> arch.embed_dim >> arch.num_train_envs >>
      act_name;
  detail::require(bool(is) && tag == "arch", "checkpoint: bad arch line");
  arch.act = activation_from_string(act_name);
  arch.encoder_hidden.clear();
  arch.env_head_hidden.clear();
  while (is >> tok && tok != ";") {
    arch.encoder_hidden.push_back(std::stoul(tok));
  }
  while (is >> tok && tok != ";") {
    arch.env_head_hidden.push_back(std::stoul(tok));
  }
  is >> arch.init_seed;
  detail::require(bool(is), "checkpoint: truncated arch line");

  ModelParams params;
  params.arch = arch;
  for (std::size_t i = 0; i <= arch.encoder_hidden.size(); ++i) {
    DenseLayer l;
    l.weight = detail::read_tensor(is, "encoder." + std::to_string(i) + ".W");
    l.bias = detail::read_tensor(is, "encoder." + std::to_string(i) + ".b");
    params.encoder.push_back(l);
  }
  params.outcome_head.weight = detail::read_tensor(is, "outcome.W");
  params.outcome_head.bias = detail::read_tensor(is, "outcome.b");
  for (std::size_t i = 0; i <= arch.env_head_hidden.size(); ++i) {
    DenseLayer l;
    l.weight = detail::read_tensor(is, "env." + std::to_string(i) + ".W");
    l.bias = detail::read_tensor(is, "env." + std::to_string(i) + ".b");
    params.env_head.push_back(l);
  }
  return params;
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  detail::require(is.good(), "load_checkpoint: cannot open " + path);
  return load_checkpoint(is);
}

}  // namespace pirl
