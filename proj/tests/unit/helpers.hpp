// SPDX-License-Identifier: Apache-2.0
//
// Shared test utilities: random generators and a central-difference checker.

#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "paco/autograd.hpp"
#include "paco/config.hpp"
#include "paco/core.hpp"
#include "paco/rng.hpp"

namespace paco::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

inline ImageTensor random_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  ImageTensor img(h, w, c);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

/// Smallest tiny config that still exercises every component.
inline RunConfig micro_config() {
  RunConfig c = RunConfig::preset("micro");
  c.validate();
  return c;
}

/// Largest relative error between analytic and numeric gradients. The
/// denominator is floored so near-zero entries compare absolutely, and
/// differences below `noise` (the rounding floor of a central difference at
/// h = 1e-5) count as agreement: an exactly-zero gradient otherwise reads as
/// a large relative error against 1e-11 of numeric noise.
inline double max_rel_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-6,
                            double noise = 1e-9) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data[i], n = numeric.data[i];
    if (std::abs(a - n) < noise) continue;
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

/// Central differences of loss() with respect to every entry of `values`.
inline Matrix numeric_gradient(Matrix& values, const std::function<double()>& loss, double h = 1e-5) {
  Matrix g(values.rows, values.cols);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values.data[i];
    values.data[i] = keep + h;
    const double up = loss();
    values.data[i] = keep - h;
    const double down = loss();
    values.data[i] = keep;
    g.data[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Builds the loss on a fresh tape, back-propagates, and compares each
/// parameter's gradient with central differences.
inline double param_gradient_error(const std::vector<Parameter*>& params,
                                   const std::function<Var(Tape&)>& build) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    t.backward(build(t));
  }
  const auto eval = [&] {
    Tape t(false);
    return build(t).scalar();
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    const Matrix numeric = numeric_gradient(p->value, eval);
    worst = std::max(worst, max_rel_error(analytic, numeric));
  }
  return worst;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "paco-" + tag;
    if (info) name += std::string("-") + info->test_suite_name() + "-" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& child = "") const { return (path_ / child).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace paco::testing
