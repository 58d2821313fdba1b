// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "paco/autograd.hpp"
#include "paco/rng.hpp"

namespace paco::nn {

using ParamList = std::vector<Parameter*>;

/// Xavier-uniform initialized matrix.
Matrix xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Matrix normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

std::uint64_t params_checksum(const ParamList& params);
void zero_grads(const ParamList& params);
void set_trainable(const ParamList& params, bool trainable);

/// y = x W + b with W stored [in, out].
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Var forward(Tape& t, Var x);
  std::size_t in_features() const { return weight.value.rows; }
  std::size_t out_features() const { return weight.value.cols; }
  void collect(ParamList& out) { out.push_back(&weight), out.push_back(&bias); }
};

struct LayerNorm {
  Parameter gamma;
  Parameter beta;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);
  Var forward(Tape& t, Var x);
  void collect(ParamList& out) { out.push_back(&gamma), out.push_back(&beta); }
};

/// Pre-norm transformer block:
///   h = x + Proj(MHSA(LN1(x)));  y = h + FC2(GELU(FC1(LN2(h)))).
struct TransformerBlock {
  LayerNorm ln1;
  Linear qkv;
  Linear proj;
  LayerNorm ln2;
  Linear fc1;
  Linear fc2;
  std::size_t heads = 1;

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, std::size_t dim, std::size_t heads,
                   std::size_t mlp_hidden, Rng& rng);
  Var forward(Tape& t, Var x);
  void collect(ParamList& out);
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Adam with decoupled weight decay. Moments are keyed by parameter name.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update with gradients scaled by grad_scale; skips frozen parameters.
  void step(const ParamList& params, double lr, double grad_scale = 1.0);

  struct Moments {
    Matrix m;
    Matrix v;
    std::uint64_t steps = 0;
  };
  std::map<std::string, Moments>& state() { return state_; }
  const std::map<std::string, Moments>& state() const { return state_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::map<std::string, Moments> state_;
};

}  // namespace paco::nn
