// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "paco/codebook.hpp"
#include "paco/core.hpp"
#include "paco/model.hpp"

namespace paco {

enum class Phase { kIncubation, kMain };

std::string phase_name(Phase p);
Phase parse_phase(const std::string& s);

struct LossReport {
  double mse = 0.0;
  double perceptual = 0.0;
  double belief_ce = 0.0;
  double total = 0.0;
};

/// Mean squared per-pixel difference over the entire image.
double mse_loss(const ImageTensor& predicted, const ImageTensor& original);

/// -sum over tap layers of cos(f(original), f(predicted)), each feature map flattened.
double perceptual_loss(const PerceptualBackbone& backbone, const ImageTensor& predicted,
                       const ImageTensor& original);

/// Mean (or sum) over all masked positions of -log p(label). probs rows must
/// be distributions; labels must lie in [0, n).
double belief_ce_loss(const std::vector<TokenSelection>& selections,
                      const std::vector<std::vector<std::size_t>>& labels, bool mean = true);

/// total = mse + weight * perceptual (+ ce during incubation).
LossReport total_loss(double mse, double perceptual, double belief_ce, double perceptual_weight,
                      Phase phase);

/// Per-patch standardized copy of patches (mean 0, unit variance per row).
Matrix normalize_patches(const Matrix& patches, double eps = 1e-6);

namespace ag {
/// Differentiable -sum_l cos(f_l(original), f_l(pred_pixels)); original features are constants.
Var perceptual_loss(Tape& t, const PerceptualBackbone& backbone, Var pred_pixels,
                    const std::vector<Matrix>& original_features);
}  // namespace ag

void write_loss_csv_header(std::ostream& os);
void write_loss_csv_row(std::ostream& os, std::size_t step, Phase phase, const LossReport& r);

}  // namespace paco
