// SPDX-License-Identifier: Apache-2.0

#include "paco/losses.hpp"

#include <cmath>
#include <iomanip>
#include <stdexcept>

#include "paco/kernels.hpp"

namespace paco {

std::string phase_name(Phase p) { return p == Phase::kIncubation ? "incubation" : "main"; }

Phase parse_phase(const std::string& s) {
  if (s == "incubation") return Phase::kIncubation;
  if (s == "main") return Phase::kMain;
  throw std::invalid_argument("unknown phase '" + s + "'");
}

double mse_loss(const ImageTensor& predicted, const ImageTensor& original) {
  if (!predicted.same_shape(original)) throw ShapeError("mse_loss: image shapes differ");
  if (original.data.empty()) return 0.0;
  return kernels::sq_dist(predicted.data, original.data) / static_cast<double>(original.data.size());
}

double perceptual_loss(const PerceptualBackbone& backbone, const ImageTensor& predicted,
                       const ImageTensor& original) {
  if (!predicted.same_shape(original)) throw ShapeError("perceptual_loss: image shapes differ");
  const auto fo = backbone.features(original);
  const auto fp = backbone.features(predicted);
  double loss = 0.0;
  for (std::size_t l = 0; l < fo.size(); ++l) loss -= cosine_similarity(fo[l].data, fp[l].data);
  return loss;
}

double belief_ce_loss(const std::vector<TokenSelection>& selections,
                      const std::vector<std::vector<std::size_t>>& labels, bool mean) {
  if (selections.size() != labels.size())
    throw std::invalid_argument("belief_ce_loss: one label list per selection required");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < selections.size(); ++s) {
    const TokenSelection& sel = selections[s];
    if (labels[s].size() != sel.size() || sel.probs.rows != sel.size())
      throw std::invalid_argument("belief_ce_loss: one label per masked position required");
    for (std::size_t k = 0; k < sel.size(); ++k) {
      if (labels[s][k] >= sel.probs.cols) throw std::out_of_range("belief_ce_loss: label out of range");
      total -= std::log(sel.probs(k, labels[s][k]));
      ++count;
    }
  }
  return (mean && count > 0) ? total / static_cast<double>(count) : total;
}

LossReport total_loss(double mse, double perceptual, double belief_ce, double perceptual_weight,
                      Phase phase) {
  LossReport r;
  r.mse = mse;
  r.perceptual = perceptual;
  r.belief_ce = phase == Phase::kIncubation ? belief_ce : 0.0;
  r.total = mse + perceptual_weight * perceptual + r.belief_ce;
  return r;
}

Matrix normalize_patches(const Matrix& patches, double eps) {
  Matrix out = patches;
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto row = out.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    const double inv = 1.0 / std::sqrt(var + eps);
    for (double& v : row) v = (v - mean) * inv;
  }
  return out;
}

namespace ag {

Var perceptual_loss(Tape& t, const PerceptualBackbone& backbone, Var pred_pixels,
                    const std::vector<Matrix>& original_features) {
  const auto fp = backbone.features(t, pred_pixels);
  if (fp.size() != original_features.size())
    throw ShapeError("perceptual_loss: feature count mismatch");
  Var total = t.constant(Matrix(1, 1));
  for (std::size_t l = 0; l < fp.size(); ++l)
    total = sub(total, cosine(t.constant(original_features[l]), fp[l]));
  return total;
}

}  // namespace ag

void write_loss_csv_header(std::ostream& os) { os << "step,phase,mse,perceptual,belief_ce,total\n"; }

void write_loss_csv_row(std::ostream& os, std::size_t step, Phase phase, const LossReport& r) {
  os << step << ',' << phase_name(phase) << ',' << std::setprecision(17) << r.mse << ','
     << r.perceptual << ',' << r.belief_ce << ',' << r.total << '\n';
}

}  // namespace paco
