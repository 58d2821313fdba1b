// SPDX-License-Identifier: Apache-2.0

#include "paco/nn.hpp"

#include <cmath>

namespace paco::nn {

Matrix xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (double& v : m.data) v = rng.uniform(-a, a);
  return m;
}

Matrix normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.normal(0.0, stddev);
  return m;
}

std::uint64_t params_checksum(const ParamList& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Parameter* p : params) h = checksum(p->value.data, h);
  return h;
}

void zero_grads(const ParamList& params) {
  for (Parameter* p : params) p->zero_grad();
}

void set_trainable(const ParamList& params, bool trainable) {
  for (Parameter* p : params) p->trainable = trainable;
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(name + ".weight", xavier(in, out, rng), true),
      bias(name + ".bias", Matrix(1, out), false) {}

Var Linear::forward(Tape& t, Var x) {
  return ag::add_row(ag::matmul(x, t.param(weight)), t.param(bias));
}

LayerNorm::LayerNorm(const std::string& name, std::size_t dim)
    : gamma(name + ".gamma", Matrix(1, dim, 1.0), false),
      beta(name + ".beta", Matrix(1, dim), false) {}

Var LayerNorm::forward(Tape& t, Var x) {
  return ag::layer_norm(x, t.param(gamma), t.param(beta));
}

TransformerBlock::TransformerBlock(const std::string& name, std::size_t dim, std::size_t n_heads,
                                   std::size_t mlp_hidden, Rng& rng)
    : ln1(name + ".ln1", dim),
      qkv(name + ".qkv", dim, 3 * dim, rng),
      proj(name + ".proj", dim, dim, rng),
      ln2(name + ".ln2", dim),
      fc1(name + ".fc1", dim, mlp_hidden, rng),
      fc2(name + ".fc2", mlp_hidden, dim, rng),
      heads(n_heads) {
  if (n_heads == 0 || dim % n_heads != 0)
    throw std::invalid_argument("TransformerBlock: dim must be divisible by heads");
}

Var TransformerBlock::forward(Tape& t, Var x) {
  const std::size_t dim = x.cols();
  const std::size_t hd = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  Var qkv_out = qkv.forward(t, ln1.forward(t, x));
  std::vector<Var> head_out;
  head_out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var q = ag::slice_cols(qkv_out, h * hd, (h + 1) * hd);
    Var k = ag::slice_cols(qkv_out, dim + h * hd, dim + (h + 1) * hd);
    Var v = ag::slice_cols(qkv_out, 2 * dim + h * hd, 2 * dim + (h + 1) * hd);
    Var attn = ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), inv_sqrt));
    head_out.push_back(ag::matmul(attn, v));
  }
  Var attended = heads == 1 ? head_out.front() : ag::concat_cols(head_out);
  Var h1 = ag::add(x, proj.forward(t, attended));
  Var mlp = fc2.forward(t, ag::gelu(fc1.forward(t, ln2.forward(t, h1))));
  return ag::add(h1, mlp);
}

void TransformerBlock::collect(ParamList& out) {
  ln1.collect(out);
  qkv.collect(out);
  proj.collect(out);
  ln2.collect(out);
  fc1.collect(out);
  fc2.collect(out);
}

void AdamW::step(const ParamList& params, double lr, double grad_scale) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    if (p->grad.size() != p->value.size()) p->zero_grad();
    Moments& st = state_[p->name];
    if (st.m.size() != p->value.size()) {
      st.m = Matrix(p->value.rows, p->value.cols);
      st.v = Matrix(p->value.rows, p->value.cols);
      st.steps = 0;
    }
    ++st.steps;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.steps));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.steps));
    const double wd = p->decay ? cfg_.weight_decay : 0.0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.data[i] * grad_scale;
      double& m = st.m.data[i];
      double& v = st.v.data[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
      const double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
      double& w = p->value.data[i];
      w -= lr * (update + wd * w);
    }
  }
}

}  // namespace paco::nn
