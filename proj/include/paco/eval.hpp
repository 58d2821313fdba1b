// SPDX-License-Identifier: Apache-2.0
//
// Downstream metrics (parsing F1, landmark NME, AUC / failure rate) and small
// probe heads trained on multi-level encoder features.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paco/data.hpp"
#include "paco/model.hpp"
#include "paco/pretrain.hpp"

namespace paco {

// ---------------------------------------------------------------------------
// Metrics

struct F1Options {
  std::size_t background = 0;
  bool exclude_background = true;
  /// Score for a class absent from both prediction and ground truth. When
  /// false such classes get NaN and are left out of the mean.
  bool absent_is_one = true;
};

struct F1Report {
  std::vector<double> per_class;
  std::vector<std::size_t> tp, fp, fn;
  double mean = 0.0;
};

/// F1_c = 2 TP / (2 TP + FP + FN) over all pixels; labels must be < num_classes.
F1Report f1_per_class(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt,
                      std::size_t num_classes, const F1Options& opt = {});
/// Pools the confusion counts of several images before scoring.
F1Report f1_pooled(const std::vector<std::vector<std::uint8_t>>& preds,
                   const std::vector<std::vector<std::uint8_t>>& gts, std::size_t num_classes,
                   const F1Options& opt = {});

enum class NormMode { kInterOcular, kDiag, kBox };
std::string norm_mode_name(NormMode m);
NormMode parse_norm_mode(const std::string& s);

/// Normalizers supplied with a sample; missing values are derived from the
/// ground truth (eye centres 4/5, or the landmark bounding box).
struct LandmarkNorm {
  std::optional<double> inter_ocular;
  std::optional<double> diag;
  std::optional<double> box;
};

struct LandmarkPrediction {
  Matrix pred;  // [L, 2]
  Matrix gt;    // [L, 2]
  LandmarkNorm norm;
};

double normalizer(const LandmarkPrediction& p, NormMode mode);
/// Mean landmark euclidean error over the normalizer, as a fraction.
double sample_nme(const LandmarkPrediction& p, NormMode mode);
/// Average of sample_nme over samples, in percent.
double nme(const std::vector<LandmarkPrediction>& preds, NormMode mode);

struct AucFr {
  double auc = 0.0;
  double fr = 0.0;
};
/// FR = share of errors above the threshold; AUC = integral over [0, t] of
/// the empirical cumulative error distribution (a step function) divided by t.
AucFr auc_fr(const std::vector<double>& per_sample_nme, double threshold);

// ---------------------------------------------------------------------------
// Probes

enum class ProbeTask { kParsing, kAlignment };
enum class ProbeMode { kFrozen, kFinetune };
std::string probe_task_name(ProbeTask t);
std::string probe_mode_name(ProbeMode m);
ProbeTask parse_probe_task(const std::string& s);
ProbeMode parse_probe_mode(const std::string& s);

struct ProbeConfig {
  std::size_t hidden = 32;
  std::size_t steps = 300;
  std::size_t batch_size = 8;
  double lr = 3e-3;
  double backbone_lr = 1e-4;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  NormMode norm = NormMode::kInterOcular;
  double auc_threshold = 0.07;
  F1Options f1;
};

/// Per-tap linear projections D -> h, summed and passed through GELU, then a
/// task layer shared across positions. Parsing: logits for P*P pixels x
/// classes per position. Alignment: one heatmap over positions per landmark
/// plus a per-position offset; coordinates are the heatmap-weighted patch
/// centres plus offsets (soft-argmax).
class ProbeHead {
 public:
  ProbeHead() = default;
  ProbeHead(ProbeTask task, std::size_t taps, std::size_t dim, std::size_t positions,
            std::size_t patch_size, std::size_t hidden, std::size_t outputs, Rng& rng);
  /// features: one [K, D] matrix per tap. Parsing returns [K*P*P, classes];
  /// alignment returns [1, 2L] coordinates divided by the image side.
  Var forward(Tape& t, const std::vector<Var>& features);
  nn::ParamList parameters();
  ProbeTask task() const { return task_; }

 private:
  ProbeTask task_ = ProbeTask::kAlignment;
  std::size_t positions_ = 0;
  std::size_t patch_size_ = 0;
  std::size_t outputs_ = 0;
  std::vector<nn::Linear> taps_;
  nn::Linear out_;  // parsing logits, or alignment offsets
  Parameter heat_;  // alignment: [L, h] landmark queries
};

struct ProbeReport {
  ProbeTask task = ProbeTask::kAlignment;
  ProbeMode mode = ProbeMode::kFrozen;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
  std::vector<double> per_class_f1;    // parsing
  std::vector<double> per_sample_nme;  // alignment, fractions
  std::vector<double> train_loss;      // one entry per step
  std::uint64_t backbone_checksum_before = 0;
  std::uint64_t backbone_checksum_after = 0;
};

/// Seg labels of a sample reordered to patch order: index k*P*P + dy*P + dx.
std::vector<std::size_t> labels_in_patch_order(const std::vector<std::uint8_t>& seg, std::size_t size,
                                               std::size_t patch_size);

/// Trains a probe on `train` and scores it on `test`. The encoder is modified
/// only in finetune mode. Samples must already match the encoder's input size.
ProbeReport run_probe(Encoder& encoder, const RunConfig& cfg, ProbeTask task, ProbeMode mode,
                      const std::vector<FaceSample>& train, const std::vector<FaceSample>& test,
                      const ProbeConfig& probe);
/// Same, starting from a checkpoint file.
ProbeReport run_probe(const std::string& checkpoint, ProbeTask task, ProbeMode mode,
                      const std::vector<FaceSample>& train, const std::vector<FaceSample>& test,
                      const ProbeConfig& probe);

// ---------------------------------------------------------------------------
// Ablation arms

struct ArmSpec {
  std::string name;
  AblationSpec ablation;
};

/// Named arm grids. "table7-mini": 1 token single, 3/5 tokens random,
/// 3/5 tokens belief, 3 tokens belief without incubation.
std::vector<ArmSpec> ablation_preset(const std::string& name);

struct ArmResult {
  std::string name;
  AblationSpec ablation;
  std::uint64_t seed = 0;
  LossReport final_epoch;
  ProbeReport probe;
  std::string checkpoint;
};

/// Pretrains one arm and scores it with a frozen alignment probe. Checkpoints
/// go under out_dir when it is non-empty.
ArmResult run_arm(const RunConfig& cfg, const ArmSpec& arm, const std::vector<ImageTensor>& pretrain,
                  const std::vector<FaceSample>& probe_train, const std::vector<FaceSample>& probe_test,
                  const ProbeConfig& probe, const std::string& out_dir = "");

}  // namespace paco
