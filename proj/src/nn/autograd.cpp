// SPDX-License-Identifier: Apache-2.0

#include "paco/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "paco/kernels.hpp"

namespace paco {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("Var::scalar on " + shape_str(v));
  return v.data[0];
}

Matrix& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

Var Tape::record(Matrix value, bool requires_grad, std::function<void()> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix m) { return record(std::move(m), false, nullptr); }

Var Tape::input(Matrix m) { return record(std::move(m), true, nullptr); }

Var Tape::param(Parameter& p) {
  if (!p.trainable || !grad_enabled_) return constant(p.value);
  Var v = record(p.value, true, nullptr);
  params_.emplace_back(v.id(), &p);
  return v;
}

void Tape::backward(Var loss) {
  if (!grad_enabled_) return;
  if (loss.value().size() != 1) throw ShapeError("backward: loss must be a scalar");
  if (!nodes_[loss.id()].requires_grad) return;
  grad(loss.id()).data[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward && n.grad.size() == n.value.size()) n.backward();
  }
  for (auto& [id, p] : params_) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) continue;
    if (p->grad.size() != p->value.size()) p->grad = Matrix(p->value.rows, p->value.cols);
    kernels::axpy(1.0, n.grad.data, p->grad.data);
  }
}

namespace ag {
namespace {

Tape& tape_of(Var a) { return *a.tape(); }

bool any_grad(std::initializer_list<Var> vs) {
  for (const Var& v : vs)
    if (v.requires_grad()) return true;
  return false;
}

void accumulate(Var target, const Matrix& g) {
  if (!target.requires_grad()) return;
  Matrix& dst = target.tape()->grad(target.id());
  kernels::axpy(1.0, g.data, dst.data);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  Matrix out = paco::matmul(a.value(), b.value());
  std::size_t id = t.size();
  return t.record(std::move(out), any_grad({a, b}), [a, b, id, &t] {
    const Matrix& g = t.grad(id);
    if (a.requires_grad()) accumulate(a, paco::matmul_nt(g, b.value()));
    if (b.requires_grad()) accumulate(b, paco::matmul_tn(a.value(), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a);
  Matrix out = paco::matmul_nt(a.value(), b.value());
  std::size_t id = t.size();
  return t.record(std::move(out), any_grad({a, b}), [a, b, id, &t] {
    const Matrix& g = t.grad(id);
    if (a.requires_grad()) accumulate(a, paco::matmul(g, b.value()));
    if (b.requires_grad()) accumulate(b, paco::matmul_tn(g, a.value()));
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tape& t = tape_of(a);
  Matrix out = a.value();
  kernels::axpy(1.0, b.value().data, out.data);
  std::size_t id = t.size();
  return t.record(std::move(out), any_grad({a, b}), [a, b, id, &t] {
    const Matrix& g = t.grad(id);
    accumulate(a, g);
    accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tape& t = tape_of(a);
  Matrix out = a.value();
  kernels::axpy(-1.0, b.value().data, out.data);
  std::size_t id = t.size();
  return t.record(std::move(out), any_grad({a, b}), [a, b, id, &t] {
    const Matrix& g = t.grad(id);
    accumulate(a, g);
    if (b.requires_grad()) kernels::axpy(-1.0, g.data, t.grad(b.id()).data);
  });
}

Var add_row(Var a, Var row) {
  const Matrix& x = a.value();
  const Matrix& r = row.value();
  if (r.rows != 1 || r.cols != x.cols) throw ShapeError("add_row: " + shape_str(x) + " + " + shape_str(r));
  Tape& t = tape_of(a);
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows; ++i) kernels::axpy(1.0, r.data, out.row(i));
  std::size_t id = t.size();
  return t.record(std::move(out), any_grad({a, row}), [a, row, id, &t] {
    const Matrix& g = t.grad(id);
    accumulate(a, g);
    if (row.requires_grad()) {
      Matrix& dr = t.grad(row.id());
      for (std::size_t i = 0; i < g.rows; ++i) kernels::axpy(1.0, g.row(i), dr.data);
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (double& v : out.data) v *= s;
  std::size_t id = t.size();
  return t.record(std::move(out), a.requires_grad(), [a, s, id, &t] {
    kernels::axpy(s, t.grad(id).data, t.grad(a.id()).data);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  std::size_t id = t.size();
  return t.record(std::move(out), any_grad({a, b}), [a, b, id, &t] {
    const Matrix& g = t.grad(id);
    if (a.requires_grad()) {
      Matrix& da = t.grad(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) da.data[i] += g.data[i] * b.value().data[i];
    }
    if (b.requires_grad()) {
      Matrix& db = t.grad(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) db.data[i] += g.data[i] * a.value().data[i];
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& xv = x.value();
  const std::size_t d = xv.cols;
  if (gamma.value().size() != d || beta.value().size() != d)
    throw ShapeError("layer_norm: affine size mismatch");
  Tape& t = tape_of(x);
  auto xhat = std::make_shared<Matrix>(xv.rows, d);
  auto inv_std = std::make_shared<std::vector<double>>(xv.rows);
  Matrix out(xv.rows, d);
  const auto& gv = gamma.value().data;
  const auto& bv = beta.value().data;
  for (std::size_t r = 0; r < xv.rows; ++r) {
    auto row = xv.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (row[c] - mean) * is;
      (*xhat)(r, c) = h;
      out(r, c) = h * gv[c] + bv[c];
    }
  }
  std::size_t id = t.size();
  return t.record(std::move(out), any_grad({x, gamma, beta}), [x, gamma, beta, xhat, inv_std, id, &t] {
    const Matrix& g = t.grad(id);
    const std::size_t n = g.cols;
    const auto& gv = gamma.value().data;
    if (gamma.requires_grad() || beta.requires_grad()) {
      Matrix* dg = gamma.requires_grad() ? &t.grad(gamma.id()) : nullptr;
      Matrix* db = beta.requires_grad() ? &t.grad(beta.id()) : nullptr;
      for (std::size_t r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < n; ++c) {
          if (dg) dg->data[c] += g(r, c) * (*xhat)(r, c);
          if (db) db->data[c] += g(r, c);
        }
    }
    if (x.requires_grad()) {
      Matrix& dx = t.grad(x.id());
      std::vector<double> gh(n);
      for (std::size_t r = 0; r < g.rows; ++r) {
        double mean_gh = 0.0, mean_ghx = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          gh[c] = g(r, c) * gv[c];
          mean_gh += gh[c];
          mean_ghx += gh[c] * (*xhat)(r, c);
        }
        mean_gh /= static_cast<double>(n);
        mean_ghx /= static_cast<double>(n);
        const double is = (*inv_std)[r];
        for (std::size_t c = 0; c < n; ++c)
          dx(r, c) += is * (gh[c] - mean_gh - (*xhat)(r, c) * mean_ghx);
      }
    }
  });
}

Var gelu(Var x) {
  Tape& t = tape_of(x);
  Matrix out = x.value();
  for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  std::size_t id = t.size();
  return t.record(std::move(out), x.requires_grad(), [x, id, &t] {
    const Matrix& g = t.grad(id);
    Matrix& dx = t.grad(x.id());
    const auto& xv = x.value().data;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx.data[i] += g.data[i] * (cdf + v * pdf);
    }
  });
}

Var relu(Var x) {
  Tape& t = tape_of(x);
  Matrix out = x.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  std::size_t id = t.size();
  return t.record(std::move(out), x.requires_grad(), [x, id, &t] {
    const Matrix& g = t.grad(id);
    Matrix& dx = t.grad(x.id());
    const auto& xv = x.value().data;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) dx.data[i] += g.data[i];
  });
}

Var softmax_rows(Var x) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  Matrix out(xv.rows, xv.cols);
  for (std::size_t r = 0; r < xv.rows; ++r) {
    auto in = xv.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t c = 0; c < xv.cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      s += o[c];
    }
    for (double& v : o) v /= s;
  }
  std::size_t id = t.size();
  return t.record(std::move(out), x.requires_grad(), [x, id, &t] {
    const Matrix& g = t.grad(id);
    const Matrix& y = t.value(id);
    Matrix& dx = t.grad(x.id());
    for (std::size_t r = 0; r < g.rows; ++r) {
      const double s = kernels::dot(g.row(r), y.row(r));
      for (std::size_t c = 0; c < g.cols; ++c) dx(r, c) += y(r, c) * (g(r, c) - s);
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Matrix& xv = x.value();
  if (begin > end || end > xv.cols) throw ShapeError("slice_cols: range out of bounds");
  Tape& t = tape_of(x);
  const std::size_t w = end - begin;
  Matrix out(xv.rows, w);
  for (std::size_t r = 0; r < xv.rows; ++r)
    std::copy_n(xv.data.begin() + static_cast<std::ptrdiff_t>(r * xv.cols + begin), w,
                out.data.begin() + static_cast<std::ptrdiff_t>(r * w));
  std::size_t id = t.size();
  return t.record(std::move(out), x.requires_grad(), [x, begin, w, id, &t] {
    const Matrix& g = t.grad(id);
    Matrix& dx = t.grad(x.id());
    for (std::size_t r = 0; r < g.rows; ++r)
      for (std::size_t c = 0; c < w; ++c) dx(r, begin + c) += g(r, c);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
    rg = rg || p.requires_grad();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols; ++c) out(r, off + c) = v(r, c);
    off += v.cols;
  }
  std::size_t id = t.size();
  return t.record(std::move(out), rg, [parts, id, &t] {
    const Matrix& g = t.grad(id);
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t w = p.cols();
      if (p.requires_grad()) {
        Matrix& dp = t.grad(p.id());
        for (std::size_t r = 0; r < g.rows; ++r)
          for (std::size_t c = 0; c < w; ++c) dp(r, c) += g(r, off + c);
      }
      off += w;
    }
  });
}

Var gather_rows(Var src, const std::vector<std::size_t>& rows) {
  const Matrix& sv = src.value();
  Tape& t = tape_of(src);
  Matrix out(rows.size(), sv.cols);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= sv.rows) throw ShapeError("gather_rows: index out of range");
    std::copy(sv.row(rows[k]).begin(), sv.row(rows[k]).end(), out.row(k).begin());
  }
  std::size_t id = t.size();
  return t.record(std::move(out), src.requires_grad(), [src, rows, id, &t] {
    const Matrix& g = t.grad(id);
    Matrix& ds = t.grad(src.id());
    for (std::size_t k = 0; k < rows.size(); ++k) kernels::axpy(1.0, g.row(k), ds.row(rows[k]));
  });
}

Var substitute_rows(Var base, Var table, const std::vector<std::size_t>& rows,
                    const std::vector<std::size_t>& table_rows) {
  const Matrix& bv = base.value();
  const Matrix& tv = table.value();
  if (rows.size() != table_rows.size()) throw ShapeError("substitute_rows: index count mismatch");
  if (bv.cols != tv.cols) throw ShapeError("substitute_rows: width mismatch");
  Tape& t = tape_of(base);
  Matrix out = bv;
  std::vector<char> replaced(bv.rows, 0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= bv.rows || table_rows[k] >= tv.rows)
      throw ShapeError("substitute_rows: index out of range");
    std::copy(tv.row(table_rows[k]).begin(), tv.row(table_rows[k]).end(), out.row(rows[k]).begin());
    replaced[rows[k]] = 1;
  }
  std::size_t id = t.size();
  return t.record(std::move(out), any_grad({base, table}),
                  [base, table, rows, table_rows, replaced, id, &t] {
                    const Matrix& g = t.grad(id);
                    if (base.requires_grad()) {
                      Matrix& db = t.grad(base.id());
                      for (std::size_t r = 0; r < g.rows; ++r)
                        if (!replaced[r]) kernels::axpy(1.0, g.row(r), db.row(r));
                    }
                    if (table.requires_grad()) {
                      Matrix& dt = t.grad(table.id());
                      for (std::size_t k = 0; k < rows.size(); ++k)
                        kernels::axpy(1.0, g.row(rows[k]), dt.row(table_rows[k]));
                    }
                  });
}

Var gather(Var x, const std::vector<std::size_t>& index, std::size_t out_rows,
           std::size_t out_cols) {
  if (index.size() != out_rows * out_cols) throw ShapeError("gather: index count mismatch");
  const Matrix& xv = x.value();
  Tape& t = tape_of(x);
  Matrix out(out_rows, out_cols);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= xv.size()) throw ShapeError("gather: index out of range");
    out.data[k] = xv.data[index[k]];
  }
  std::size_t id = t.size();
  return t.record(std::move(out), x.requires_grad(), [x, index, id, &t] {
    const Matrix& g = t.grad(id);
    Matrix& dx = t.grad(x.id());
    for (std::size_t k = 0; k < index.size(); ++k) dx.data[index[k]] += g.data[k];
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x.value().size()) throw ShapeError("reshape: element count mismatch");
  Tape& t = tape_of(x);
  Matrix out(rows, cols, x.value().data);
  std::size_t id = t.size();
  return t.record(std::move(out), x.requires_grad(), [x, id, &t] {
    kernels::axpy(1.0, t.grad(id).data, t.grad(x.id()).data);
  });
}

namespace {

// Maps output column (ky, kx, ci) of output pixel p to the flat input index, or npos for padding.
std::vector<std::size_t> im2col_index(const Conv2dShape& s) {
  const std::size_t ho = s.out_height(), wo = s.out_width();
  const std::size_t kk = s.kernel * s.kernel * s.in_channels;
  std::vector<std::size_t> idx(ho * wo * kk, static_cast<std::size_t>(-1));
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox) {
      const std::size_t p = oy * wo + ox;
      for (std::size_t ky = 0; ky < s.kernel; ++ky)
        for (std::size_t kx = 0; kx < s.kernel; ++kx) {
          const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.pad);
          const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.pad);
          if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.height) ||
              ix >= static_cast<long>(s.width))
            continue;
          for (std::size_t ci = 0; ci < s.in_channels; ++ci)
            idx[p * kk + (ky * s.kernel + kx) * s.in_channels + ci] =
                (static_cast<std::size_t>(iy) * s.width + static_cast<std::size_t>(ix)) *
                    s.in_channels +
                ci;
        }
    }
  return idx;
}

}  // namespace

Var conv2d(Var x, Var weight, Var bias, const Conv2dShape& s) {
  const Matrix& xv = x.value();
  if (xv.rows != s.height * s.width || xv.cols != s.in_channels)
    throw ShapeError("conv2d: input " + shape_str(xv) + " does not match geometry");
  const std::size_t kk = s.kernel * s.kernel * s.in_channels;
  if (weight.value().rows != kk || weight.value().cols != s.out_channels)
    throw ShapeError("conv2d: weight " + shape_str(weight.value()));
  if (bias.value().size() != s.out_channels) throw ShapeError("conv2d: bias size");
  Tape& t = tape_of(x);
  auto index = std::make_shared<std::vector<std::size_t>>(im2col_index(s));
  const std::size_t npos = static_cast<std::size_t>(-1);
  auto cols = std::make_shared<Matrix>(s.out_height() * s.out_width(), kk);
  for (std::size_t k = 0; k < index->size(); ++k)
    if ((*index)[k] != npos) cols->data[k] = xv.data[(*index)[k]];
  Matrix out = paco::matmul(*cols, weight.value());
  for (std::size_t r = 0; r < out.rows; ++r) kernels::axpy(1.0, bias.value().data, out.row(r));
  std::size_t id = t.size();
  return t.record(std::move(out), any_grad({x, weight, bias}), [x, weight, bias, index, cols, id, &t] {
    const Matrix& g = t.grad(id);
    if (weight.requires_grad()) accumulate(weight, paco::matmul_tn(*cols, g));
    if (bias.requires_grad()) {
      Matrix& db = t.grad(bias.id());
      for (std::size_t r = 0; r < g.rows; ++r) kernels::axpy(1.0, g.row(r), db.data);
    }
    if (x.requires_grad()) {
      Matrix dcols = paco::matmul_nt(g, weight.value());
      Matrix& dx = t.grad(x.id());
      const std::size_t npos = static_cast<std::size_t>(-1);
      for (std::size_t k = 0; k < index->size(); ++k)
        if ((*index)[k] != npos) dx.data[(*index)[k]] += dcols.data[k];
    }
  });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data) s += v;
  std::size_t id = t.size();
  return t.record(Matrix(1, 1, s), x.requires_grad(), [x, id, &t] {
    const double g = t.grad(id).data[0];
    for (double& v : t.grad(x.id()).data) v += g;
  });
}

Var mse(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mse");
  Tape& t = tape_of(a);
  const double n = static_cast<double>(a.value().size());
  const double v = kernels::sq_dist(a.value().data, b.value().data) / n;
  std::size_t id = t.size();
  return t.record(Matrix(1, 1, v), any_grad({a, b}), [a, b, n, id, &t] {
    const double g = t.grad(id).data[0] * 2.0 / n;
    const auto& av = a.value().data;
    const auto& bv = b.value().data;
    if (a.requires_grad()) {
      auto& da = t.grad(a.id()).data;
      for (std::size_t i = 0; i < av.size(); ++i) da[i] += g * (av[i] - bv[i]);
    }
    if (b.requires_grad()) {
      auto& db = t.grad(b.id()).data;
      for (std::size_t i = 0; i < av.size(); ++i) db[i] -= g * (av[i] - bv[i]);
    }
  });
}

Var cosine(Var a, Var b) {
  if (a.value().size() != b.value().size()) throw ShapeError("cosine: size mismatch");
  Tape& t = tape_of(a);
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  const double na = std::sqrt(kernels::dot(av, av));
  const double nb = std::sqrt(kernels::dot(bv, bv));
  const bool degenerate = na < 1e-12 || nb < 1e-12;
  const double c = degenerate ? 0.0 : kernels::dot(av, bv) / (na * nb);
  std::size_t id = t.size();
  return t.record(Matrix(1, 1, c), any_grad({a, b}) && !degenerate, [a, b, na, nb, c, id, &t] {
    const double g = t.grad(id).data[0];
    const auto& av = a.value().data;
    const auto& bv = b.value().data;
    if (a.requires_grad()) {
      auto& da = t.grad(a.id()).data;
      for (std::size_t i = 0; i < av.size(); ++i)
        da[i] += g * (bv[i] / (na * nb) - c * av[i] / (na * na));
    }
    if (b.requires_grad()) {
      auto& db = t.grad(b.id()).data;
      for (std::size_t i = 0; i < bv.size(); ++i)
        db[i] += g * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
    }
  });
}

Var cross_entropy(Var logits, const std::vector<std::size_t>& labels, bool mean) {
  const Matrix& lv = logits.value();
  if (labels.size() != lv.rows) throw ShapeError("cross_entropy: one label per row required");
  Tape& t = tape_of(logits);
  auto probs = std::make_shared<Matrix>(lv.rows, lv.cols);
  double loss = 0.0;
  for (std::size_t r = 0; r < lv.rows; ++r) {
    if (labels[r] >= lv.cols) throw std::out_of_range("cross_entropy: label out of range");
    auto in = lv.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (double v : in) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < lv.cols; ++c) (*probs)(r, c) = std::exp(in[c] - lse);
    loss += lse - in[labels[r]];
  }
  const double norm = (mean && lv.rows > 0) ? 1.0 / static_cast<double>(lv.rows) : 1.0;
  std::size_t id = t.size();
  return t.record(Matrix(1, 1, loss * norm), logits.requires_grad(),
                  [logits, labels, probs, norm, id, &t] {
                    const double g = t.grad(id).data[0] * norm;
                    Matrix& dl = t.grad(logits.id());
                    for (std::size_t r = 0; r < probs->rows; ++r)
                      for (std::size_t c = 0; c < probs->cols; ++c)
                        dl(r, c) += g * ((*probs)(r, c) - (c == labels[r] ? 1.0 : 0.0));
                  });
}

}  // namespace ag
}  // namespace paco
