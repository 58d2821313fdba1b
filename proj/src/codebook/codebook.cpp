// SPDX-License-Identifier: Apache-2.0

#include "paco/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "paco/kernels.hpp"
#include "paco/model.hpp"

namespace paco {

PatchCodebook::PatchCodebook(std::size_t positions, std::size_t n, std::size_t dim, Rng& rng)
    : positions_(positions),
      n_(n),
      tokens_("codebook.tokens", nn::normal_init(positions * n, dim, 0.02, rng), false) {
  if (positions == 0 || n == 0 || dim == 0)
    throw std::invalid_argument("PatchCodebook: all dimensions must be positive");
}

BeliefPredictor::BeliefPredictor(std::size_t positions, std::size_t patch_dim, std::size_t hidden,
                                 std::size_t n, Rng& rng)
    : in_("predictor.in", patch_dim, hidden, rng),
      pos_embed_("predictor.pos_embed", nn::normal_init(positions, hidden, 0.02, rng), false),
      out_("predictor.out", hidden, n, rng) {}

BeliefPredictor::BeliefPredictor(const RunConfig& cfg, Rng& rng)
    : BeliefPredictor(cfg.num_patches(), cfg.patch_dim(), cfg.predictor_hidden_width(),
                      cfg.n_tokens, rng) {}

Var BeliefPredictor::logits(Tape& t, Var patch_rows, const std::vector<std::size_t>& positions) {
  if (patch_rows.cols() != patch_dim())
    throw ShapeError("BeliefPredictor: patch length " + std::to_string(patch_rows.cols()) +
                     " does not match predictor input " + std::to_string(patch_dim()));
  if (patch_rows.rows() != positions.size())
    throw ShapeError("BeliefPredictor: one position per patch row required");
  Var h = ag::add(in_.forward(t, patch_rows), ag::gather_rows(t.param(pos_embed_), positions));
  return out_.forward(t, ag::gelu(h));
}

nn::ParamList BeliefPredictor::parameters() {
  nn::ParamList out;
  in_.collect(out);
  out.push_back(&pos_embed_);
  out_.collect(out);
  return out;
}

std::uint64_t BeliefPredictor::checksum() { return nn::params_checksum(parameters()); }

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    auto in = logits.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) s += (p(r, c) = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < logits.cols; ++c) p(r, c) /= s;
  }
  return p;
}

TokenSelection selection_from_logits(const std::vector<std::size_t>& positions, Matrix logits) {
  if (logits.rows != positions.size()) throw ShapeError("selection_from_logits: row count mismatch");
  TokenSelection s;
  s.positions = positions;
  s.alpha.resize(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k) s.alpha[k] = argmax(logits.row(k));
  s.probs = softmax_rows(logits);
  s.logits = std::move(logits);
  return s;
}

TokenSelection predict_beliefs(BeliefPredictor& predictor, const PatchGrid& patches,
                               const MaskSet& mask) {
  for (std::size_t i : mask.positions)
    if (i >= patches.count()) throw ShapeError("predict_beliefs: mask position outside grid");
  Matrix rows(mask.size(), patches.patch_dim());
  for (std::size_t k = 0; k < mask.size(); ++k) {
    auto src = patches.patches.row(mask.positions[k]);
    std::copy(src.begin(), src.end(), rows.row(k).begin());
  }
  Tape t(false);
  Var logits = predictor.logits(t, t.constant(std::move(rows)), mask.positions);
  return selection_from_logits(mask.positions, logits.value());
}

TokenSelection random_selection(const MaskSet& mask, std::size_t n, Rng& rng) {
  TokenSelection s;
  s.positions = mask.positions;
  s.alpha.resize(mask.size());
  for (auto& a : s.alpha) a = static_cast<std::size_t>(rng.below(n));
  return s;
}

namespace {

void check_selection(const PatchCodebook& codebook, const TokenSelection& selection,
                     const MaskSet& mask, std::size_t rows) {
  if (selection.positions != mask.positions || selection.alpha.size() != mask.size())
    throw std::invalid_argument("substitute: selection does not cover exactly the mask positions");
  if (rows != codebook.positions())
    throw ShapeError("substitute: embedding rows do not match codebook positions");
  for (std::size_t a : selection.alpha)
    if (a >= codebook.n()) throw std::out_of_range("substitute: token index out of range");
}

}  // namespace

Matrix substitute(const Matrix& embedded, const PatchCodebook& codebook,
                  const TokenSelection& selection, const MaskSet& mask) {
  check_selection(codebook, selection, mask, embedded.rows);
  if (embedded.cols != codebook.dim()) throw ShapeError("substitute: width mismatch");
  Matrix out = embedded;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    auto tok = codebook.token(mask.positions[k], selection.alpha[k]);
    std::copy(tok.begin(), tok.end(), out.row(mask.positions[k]).begin());
  }
  return out;
}

Var substitute(Var embedded, Var tokens, const PatchCodebook& codebook,
               const TokenSelection& selection, const MaskSet& mask) {
  check_selection(codebook, selection, mask, embedded.rows());
  std::vector<std::size_t> rows(mask.size());
  for (std::size_t k = 0; k < mask.size(); ++k)
    rows[k] = codebook.row(mask.positions[k], selection.alpha[k]);
  return ag::substitute_rows(embedded, tokens, mask.positions, rows);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(kernels::dot(a, a));
  const double nb = std::sqrt(kernels::dot(b, b));
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return kernels::dot(a, b) / (na * nb);
}

std::vector<std::size_t> labels_from_reconstructions(const PatchGrid& patches, const MaskSet& mask,
                                                     const std::vector<Matrix>& recon) {
  if (recon.empty()) throw std::invalid_argument("incubation labels need at least one candidate");
  for (const Matrix& r : recon)
    require_same_shape(r, patches.patches, "incubation reconstruction");
  std::vector<std::size_t> labels(mask.size());
  std::vector<double> sims(recon.size());
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const std::size_t i = mask.positions[k];
    for (std::size_t j = 0; j < recon.size(); ++j)
      sims[j] = cosine_similarity(recon[j].row(i), patches.patches.row(i));
    labels[k] = argmax(sims);
  }
  return labels;
}

std::vector<std::size_t> incubation_labels(const PatchGrid& patches, const MaskSet& mask,
                                           const PatchCodebook& codebook, const Matrix& embedded,
                                           const ReconstructFn& model) {
  if (codebook.n() == 1) return std::vector<std::size_t>(mask.size(), 0);
  std::vector<Matrix> recon;
  recon.reserve(codebook.n());
  TokenSelection all_j;
  all_j.positions = mask.positions;
  for (std::size_t j = 0; j < codebook.n(); ++j) {
    all_j.alpha.assign(mask.size(), j);
    recon.push_back(model(substitute(embedded, codebook, all_j, mask)));
  }
  return labels_from_reconstructions(patches, mask, recon);
}

std::vector<std::size_t> incubation_labels(const PatchGrid& patches, const MaskSet& mask,
                                           const PatchCodebook& codebook, Encoder& encoder,
                                           PixelDecoder& decoder) {
  Matrix embedded;
  {
    Tape t(false);
    embedded = encoder.embed(t, t.constant(patches.patches)).value();
  }
  ReconstructFn fn = [&](const Matrix& substituted) {
    Tape t(false);
    return decoder.decode(t, encoder.encode(t, t.constant(substituted)).output).value();
  };
  return incubation_labels(patches, mask, codebook, embedded, fn);
}

TokenSelection incubation_corrupt(const TokenSelection& selection, std::size_t n, double fraction,
                                  Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw std::invalid_argument("incubation_corrupt: fraction must lie in [0, 1]");
  if (n == 0) throw std::invalid_argument("incubation_corrupt: n must be positive");
  TokenSelection out = selection;
  out.resampled = sample_without_replacement(selection.size(), mask_count(selection.size(), fraction), rng);
  for (std::size_t k : out.resampled) out.alpha[k] = static_cast<std::size_t>(rng.below(n));
  return out;
}

}  // namespace paco
