// SPDX-License-Identifier: Apache-2.0
//
// Two-phase pre-training: an incubation epoch that supervises the Belief
// Predictor, then main epochs in which the predictor is frozen and only the
// encoder, decoder and codebook learn.

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "paco/checkpoint.hpp"
#include "paco/codebook.hpp"
#include "paco/config.hpp"
#include "paco/losses.hpp"
#include "paco/model.hpp"
#include "paco/nn.hpp"

namespace paco {

enum class SelectionMode { kBelief, kRandom, kSingleToken };

struct AblationSpec {
  SelectionMode selection = SelectionMode::kBelief;
  // 0 keeps config.n_tokens.
  std::size_t n_override = 0;
  bool incubation_enabled = true;

  /// Comma separated `selection=belief|random|single_token`, `n=<int>`,
  /// `incubation=on|off`. Empty string gives the default.
  static AblationSpec parse(const std::string& text);
  std::string to_string() const;
  /// Token count after overrides (single_token forces 1).
  std::size_t effective_n(const RunConfig& cfg) const;
  /// Whether the predictor keeps learning during main steps (the no-incubation arm).
  bool predictor_trains_in_main() const {
    return selection == SelectionMode::kBelief && !incubation_enabled;
  }
  bool has_incubation_epoch() const {
    return selection == SelectionMode::kBelief && incubation_enabled;
  }
};

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainState {
  RunConfig config;  // n_tokens already reflects the ablation
  AblationSpec ablation;
  Encoder encoder;
  PixelDecoder decoder;
  PatchCodebook codebook;
  BeliefPredictor predictor;
  PerceptualBackbone backbone;
  nn::AdamW model_opt;
  nn::AdamW predictor_opt;
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed optimizer steps
  Phase phase = Phase::kIncubation;
  Rng rng;
  double lr = 0.0;            // current model learning rate
  double predictor_lr = 0.0;  // current predictor learning rate

  static TrainState create(const RunConfig& config, const AblationSpec& ablation = {});

  /// Encoder, decoder and codebook parameters.
  nn::ParamList model_params();
  nn::ParamList predictor_params() { return predictor.parameters(); }
  /// Sets phase and the matching predictor trainability.
  void set_phase(Phase p);

  TensorArchive to_archive();
  static TrainState from_archive(const TensorArchive& archive);
  void save(const std::string& path) { to_archive().write(path); }
  static TrainState load(const std::string& path) { return from_archive(TensorArchive::read(path)); }
};

/// Reconstruction forward pass for one image under a given selection, without gradients.
ImageTensor reconstruct(TrainState& state, const ImageTensor& image, const MaskSet& mask,
                        const TokenSelection& selection);
/// Selection for one image according to the ablation mode (predictor frozen).
TokenSelection select_tokens(TrainState& state, const PatchGrid& grid, const MaskSet& mask);

/// One optimizer step of the main phase over a batch; returns batch-mean losses.
LossReport train_step_main(TrainState& state, const std::vector<ImageTensor>& batch);
/// One optimizer step of the incubation phase over a batch.
LossReport train_step_incubation(TrainState& state, const std::vector<ImageTensor>& batch);

/// Per-step learning rate: linear warmup then cosine decay to min_lr.
double scheduled_lr(const RunConfig& cfg, std::size_t step, std::size_t steps_per_epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  Phase phase = Phase::kMain;
  LossReport mean;
};

struct PretrainResult {
  std::string final_checkpoint;
  std::vector<std::string> epoch_checkpoints;
  std::vector<EpochRecord> epochs;
  std::vector<LossReport> steps;
};

struct PretrainOptions {
  std::string out_dir;
  std::optional<std::string> resume;
  bool write_checkpoints = true;
  bool quiet = true;
  std::function<void(const TrainState&, const EpochRecord&)> on_epoch;
};

/// Runs config.epochs epochs (epoch 0 = incubation when enabled), writing
/// train_log.csv, epoch_<k>.ckpt and final.ckpt under out_dir.
PretrainResult run_pretraining(const RunConfig& config, const AblationSpec& ablation,
                               const std::vector<ImageTensor>& dataset,
                               const PretrainOptions& options);

/// Per-position counts of predictor choices over a set of images (all positions scored).
std::vector<std::vector<std::size_t>> selection_histogram(TrainState& state,
                                                          const std::vector<ImageTensor>& images);

}  // namespace paco
