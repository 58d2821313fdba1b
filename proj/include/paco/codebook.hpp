// SPDX-License-Identifier: Apache-2.0
//
// Per-position token codebook and the Belief Predictor that picks which of a
// position's n tokens replaces a masked patch.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "paco/config.hpp"
#include "paco/core.hpp"
#include "paco/nn.hpp"

namespace paco {

class Encoder;
class PixelDecoder;

/// n learnable D-dim tokens for each of K positions, stored as one
/// [K*n, D] parameter where row i*n + j is token j of position i.
class PatchCodebook {
 public:
  PatchCodebook() = default;
  PatchCodebook(std::size_t positions, std::size_t n, std::size_t dim, Rng& rng);

  std::size_t positions() const { return positions_; }
  std::size_t n() const { return n_; }
  std::size_t dim() const { return tokens_.value.cols; }
  std::size_t row(std::size_t position, std::size_t j) const { return position * n_ + j; }
  std::span<const double> token(std::size_t position, std::size_t j) const {
    return tokens_.value.row(row(position, j));
  }

  Parameter& tokens() { return tokens_; }
  const Parameter& tokens() const { return tokens_; }

 private:
  std::size_t positions_ = 0;
  std::size_t n_ = 0;
  Parameter tokens_;
};

/// Two-layer network over a patch's raw pixels:
///   logits = W2 GELU(W1 x + b1 + pos[i]) + b2
class BeliefPredictor {
 public:
  BeliefPredictor() = default;
  BeliefPredictor(std::size_t positions, std::size_t patch_dim, std::size_t hidden, std::size_t n,
                  Rng& rng);
  BeliefPredictor(const RunConfig& cfg, Rng& rng);

  /// patch_rows: [m, P*P*C] for the listed positions -> logits [m, n].
  Var logits(Tape& t, Var patch_rows, const std::vector<std::size_t>& positions);

  std::size_t n() const { return out_.out_features(); }
  std::size_t patch_dim() const { return in_.in_features(); }
  nn::ParamList parameters();
  std::uint64_t checksum();

 private:
  nn::Linear in_;
  Parameter pos_embed_;
  nn::Linear out_;
};

/// Token choice for each masked position (positions[k] <-> alpha[k]).
/// `logits`/`probs` are empty when the choice did not come from the predictor;
/// `resampled` lists k's whose alpha was replaced by incubation_corrupt.
struct TokenSelection {
  std::vector<std::size_t> positions;
  std::vector<std::size_t> alpha;
  Matrix logits;
  Matrix probs;
  std::vector<std::size_t> resampled;

  std::size_t size() const { return positions.size(); }
};

/// Lowest index among the maxima.
std::size_t argmax(std::span<const double> v);
Matrix softmax_rows(const Matrix& logits);

/// Predictor beliefs for every masked position, evaluated without gradients.
TokenSelection predict_beliefs(BeliefPredictor& predictor, const PatchGrid& patches,
                               const MaskSet& mask);
/// Builds a selection from logits (alpha = argmax, probs = softmax).
TokenSelection selection_from_logits(const std::vector<std::size_t>& positions, Matrix logits);
/// alpha uniform in [0, n) at every masked position.
TokenSelection random_selection(const MaskSet& mask, std::size_t n, Rng& rng);

/// Rows of `embedded` at masked positions replaced by the selected tokens.
Matrix substitute(const Matrix& embedded, const PatchCodebook& codebook,
                  const TokenSelection& selection, const MaskSet& mask);
/// Differentiable variant; `tokens` must be the codebook's [K*n, D] table on the tape.
Var substitute(Var embedded, Var tokens, const PatchCodebook& codebook,
               const TokenSelection& selection, const MaskSet& mask);

/// Maps substituted encoder input [K, D] to reconstructed patches [K, P*P*C].
using ReconstructFn = std::function<Matrix(const Matrix& substituted)>;

/// Labels from precomputed reconstructions: recon[j] is the decoder output when
/// every masked position holds token j. y_k = argmax_j cos(recon[j][i_k], patch i_k).
std::vector<std::size_t> labels_from_reconstructions(const PatchGrid& patches, const MaskSet& mask,
                                                     const std::vector<Matrix>& recon);

/// Incubation supervision: runs the frozen model once per candidate index j.
std::vector<std::size_t> incubation_labels(const PatchGrid& patches, const MaskSet& mask,
                                           const PatchCodebook& codebook, const Matrix& embedded,
                                           const ReconstructFn& model);
/// Same, with the encoder + decoder as the frozen model.
std::vector<std::size_t> incubation_labels(const PatchGrid& patches, const MaskSet& mask,
                                           const PatchCodebook& codebook, Encoder& encoder,
                                           PixelDecoder& decoder);

/// Resamples alpha uniformly at a random round(fraction*|M|) subset of the
/// selection; the rest keep their alpha. Logits and probabilities are kept.
TokenSelection incubation_corrupt(const TokenSelection& selection, std::size_t n, double fraction,
                                  Rng& rng);

/// Cosine of two vectors, 0 when either norm is below 1e-12.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace paco
