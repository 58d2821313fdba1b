// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "paco/eval.hpp"

namespace paco {

std::string probe_task_name(ProbeTask t) { return t == ProbeTask::kParsing ? "parsing" : "alignment"; }
std::string probe_mode_name(ProbeMode m) { return m == ProbeMode::kFrozen ? "frozen" : "finetune"; }

ProbeTask parse_probe_task(const std::string& s) {
  if (s == "parsing") return ProbeTask::kParsing;
  if (s == "alignment") return ProbeTask::kAlignment;
  throw std::invalid_argument("unknown task '" + s + "' (parsing|alignment)");
}

ProbeMode parse_probe_mode(const std::string& s) {
  if (s == "frozen") return ProbeMode::kFrozen;
  if (s == "finetune") return ProbeMode::kFinetune;
  throw std::invalid_argument("unknown mode '" + s + "' (frozen|finetune)");
}

ProbeHead::ProbeHead(ProbeTask task, std::size_t taps, std::size_t dim, std::size_t positions,
                     std::size_t patch_size, std::size_t hidden, std::size_t outputs, Rng& rng)
    : task_(task), positions_(positions), patch_size_(patch_size), outputs_(outputs) {
  if (taps == 0) throw std::invalid_argument("ProbeHead: at least one tap layer is required");
  for (std::size_t i = 0; i < taps; ++i) taps_.emplace_back("probe.tap" + std::to_string(i), dim, hidden, rng);
  if (task == ProbeTask::kParsing) {
    out_ = nn::Linear("probe.out", hidden, patch_size * patch_size * outputs, rng);
  } else {
    if (outputs % 2 != 0) throw std::invalid_argument("ProbeHead: alignment outputs must be 2L");
    out_ = nn::Linear("probe.offset", hidden, outputs, rng);
    heat_ = Parameter("probe.heat", nn::xavier(outputs / 2, hidden, rng));
  }
}

Var ProbeHead::forward(Tape& t, const std::vector<Var>& features) {
  if (features.size() != taps_.size())
    throw ShapeError("ProbeHead: expected " + std::to_string(taps_.size()) + " feature maps, got " +
                     std::to_string(features.size()));
  // Parameter-free per-token normalization of each tap.
  const auto norm = [&](Var f) {
    Matrix ones(1, f.cols());
    ones.fill(1.0);
    return ag::layer_norm(f, t.constant(std::move(ones)), t.constant(Matrix(1, f.cols())));
  };
  Var fused = taps_[0].forward(t, norm(features[0]));
  for (std::size_t i = 1; i < taps_.size(); ++i) fused = ag::add(fused, taps_[i].forward(t, norm(features[i])));
  fused = ag::gelu(fused);
  if (task_ == ProbeTask::kParsing) {
    Var logits = out_.forward(t, fused);  // [K, P*P*classes], (dy, dx, class) per row
    return ag::reshape(logits, positions_ * patch_size_ * patch_size_, outputs_);
  }
  const std::size_t landmarks = outputs_ / 2;
  const auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(positions_))));
  Matrix centers(positions_, 2);
  for (std::size_t k = 0; k < positions_; ++k) {
    centers(k, 0) = (static_cast<double>(k % g) + 0.5) / static_cast<double>(g);
    centers(k, 1) = (static_cast<double>(k / g) + 0.5) / static_cast<double>(g);
  }
  Var heat = ag::softmax_rows(ag::matmul_nt(t.param(heat_), fused));  // [L, K]
  Var base = ag::matmul(heat, t.constant(std::move(centers)));         // [L, 2]
  Var mixed = ag::matmul(heat, out_.forward(t, fused));                // [L, 2L]
  std::vector<std::size_t> own(2 * landmarks);
  for (std::size_t l = 0; l < landmarks; ++l) {
    own[2 * l] = l * outputs_ + 2 * l;
    own[2 * l + 1] = l * outputs_ + 2 * l + 1;
  }
  Var offset = ag::scale(ag::gather(mixed, own, landmarks, 2), 1.0 / static_cast<double>(g));
  return ag::reshape(ag::add(base, offset), 1, outputs_);
}

nn::ParamList ProbeHead::parameters() {
  nn::ParamList out;
  for (auto& l : taps_) l.collect(out);
  out_.collect(out);
  if (task_ == ProbeTask::kAlignment) out.push_back(&heat_);
  return out;
}

std::vector<std::size_t> labels_in_patch_order(const std::vector<std::uint8_t>& seg, std::size_t size,
                                               std::size_t patch_size) {
  if (seg.size() != size * size || size % patch_size != 0)
    throw ShapeError("labels_in_patch_order: label map does not tile into patches");
  const std::size_t g = size / patch_size;
  std::vector<std::size_t> out(seg.size());
  std::size_t k = 0;
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx)
      for (std::size_t dy = 0; dy < patch_size; ++dy)
        for (std::size_t dx = 0; dx < patch_size; ++dx)
          out[k++] = seg[(gy * patch_size + dy) * size + gx * patch_size + dx];
  return out;
}

namespace {

std::vector<Var> pyramid(Tape& t, Encoder& encoder, const ImageTensor& image, std::size_t patch_size) {
  const PatchGrid grid = patchify(image, patch_size);
  return encoder.encode(t, encoder.embed(t, t.constant(grid.patches))).pyramid.features;
}

std::vector<Matrix> pyramid_values(Encoder& encoder, const ImageTensor& image, std::size_t patch_size) {
  Tape t(false);
  std::vector<Matrix> out;
  for (const Var& v : pyramid(t, encoder, image, patch_size)) out.push_back(v.value());
  return out;
}

Matrix alignment_target(const FaceSample& s) {
  Matrix m(1, 2 * s.landmarks.rows);
  for (std::size_t l = 0; l < s.landmarks.rows; ++l) {
    m(0, 2 * l) = s.landmarks(l, 0) / static_cast<double>(s.image.width);
    m(0, 2 * l + 1) = s.landmarks(l, 1) / static_cast<double>(s.image.height);
  }
  return m;
}

void check_samples(const std::vector<FaceSample>& samples, ProbeTask task, const RunConfig& cfg,
                   const char* which) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const FaceSample& s = samples[i];
    const std::string where = std::string(which) + " sample " + std::to_string(i) + ": ";
    if (s.image.height != cfg.image_size || s.image.width != cfg.image_size || s.image.channels != cfg.channels)
      throw ShapeError(where + "image does not match the encoder input size");
    if (task == ProbeTask::kParsing && s.seg.size() != cfg.image_size * cfg.image_size)
      throw std::invalid_argument(where + "parsing needs segmentation labels");
    if (task == ProbeTask::kAlignment && (s.landmarks.rows == 0 || s.landmarks.rows != samples[0].landmarks.rows))
      throw std::invalid_argument(where + "alignment needs a consistent landmark set");
  }
}

}  // namespace

ProbeReport run_probe(Encoder& encoder, const RunConfig& cfg, ProbeTask task, ProbeMode mode,
                      const std::vector<FaceSample>& train, const std::vector<FaceSample>& test,
                      const ProbeConfig& pc) {
  if (train.empty() || test.empty()) throw std::invalid_argument("run_probe: train and test splits must be non-empty");
  check_samples(train, task, cfg, "train");
  check_samples(test, task, cfg, "test");
  if (encoder.tap_layers().empty()) throw std::invalid_argument("run_probe: encoder has no tap layers");

  ProbeReport rep;
  rep.task = task;
  rep.mode = mode;
  rep.seed = pc.seed;
  nn::ParamList backbone = encoder.parameters();
  rep.backbone_checksum_before = nn::params_checksum(backbone);

  const std::size_t k = cfg.num_patches(), p = cfg.patch_size;
  const std::size_t outputs = task == ProbeTask::kParsing ? kNumSegClasses : 2 * train[0].landmarks.rows;
  Rng rng = Rng::derive(pc.seed, 0x50524f42ULL);
  ProbeHead head(task, encoder.tap_layers().size(), encoder.dim(), k, p, pc.hidden, outputs, rng);
  nn::ParamList head_params = head.parameters();

  std::vector<Matrix> targets;
  std::vector<std::vector<std::size_t>> labels;
  for (const FaceSample& s : train) {
    if (task == ProbeTask::kParsing) labels.push_back(labels_in_patch_order(s.seg, cfg.image_size, p));
    else targets.push_back(alignment_target(s));
  }

  const bool frozen = mode == ProbeMode::kFrozen;
  std::vector<std::vector<Matrix>> cache;
  if (frozen)
    for (const FaceSample& s : train) cache.push_back(pyramid_values(encoder, s.image, p));

  nn::AdamW head_opt({0.9, 0.999, 1e-8, pc.weight_decay});
  nn::AdamW backbone_opt({0.9, 0.999, 1e-8, pc.weight_decay});
  std::vector<bool> saved_trainable;
  for (Parameter* q : backbone) saved_trainable.push_back(q->trainable);
  nn::set_trainable(backbone, !frozen);

  const std::size_t bs = std::min(pc.batch_size, train.size());
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  for (std::size_t step = 0; step < pc.steps; ++step) {
    nn::zero_grads(head_params);
    if (!frozen) nn::zero_grads(backbone);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < bs; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      Tape t;
      std::vector<Var> feats;
      if (frozen) {
        for (const Matrix& m : cache[idx]) feats.push_back(t.constant(m));
      } else {
        feats = pyramid(t, encoder, train[idx].image, p);
      }
      Var out = head.forward(t, feats);
      Var loss = task == ProbeTask::kParsing ? ag::cross_entropy(out, labels[idx], true)
                                             : ag::mse(out, t.constant(targets[idx]));
      loss_sum += loss.scalar();
      t.backward(loss);
    }
    const double scale = 1.0 / static_cast<double>(bs);
    head_opt.step(head_params, pc.lr, scale);
    if (!frozen) backbone_opt.step(backbone, pc.backbone_lr, scale);
    rep.train_loss.push_back(loss_sum * scale);
  }
  for (std::size_t i = 0; i < backbone.size(); ++i) backbone[i]->trainable = saved_trainable[i];

  // Test split.
  std::vector<std::vector<std::uint8_t>> preds, gts;
  std::vector<LandmarkPrediction> lms;
  for (const FaceSample& s : test) {
    Tape t(false);
    Var out = head.forward(t, pyramid(t, encoder, s.image, p));
    if (task == ProbeTask::kParsing) {
      const Matrix& logits = out.value();
      std::vector<std::uint8_t> pred(cfg.image_size * cfg.image_size);
      const std::size_t g = cfg.grid_side();
      for (std::size_t r = 0; r < logits.rows; ++r) {
        const std::size_t patch = r / (p * p), within = r % (p * p);
        const std::size_t y = (patch / g) * p + within / p, x = (patch % g) * p + within % p;
        pred[y * cfg.image_size + x] = static_cast<std::uint8_t>(argmax(logits.row(r)));
      }
      preds.push_back(std::move(pred));
      gts.push_back(s.seg);
    } else {
      LandmarkPrediction lp;
      lp.gt = s.landmarks;
      lp.pred = Matrix(s.landmarks.rows, 2);
      for (std::size_t l = 0; l < s.landmarks.rows; ++l) {
        lp.pred(l, 0) = out.value()(0, 2 * l) * static_cast<double>(s.image.width);
        lp.pred(l, 1) = out.value()(0, 2 * l + 1) * static_cast<double>(s.image.height);
      }
      if (s.face_box) {
        const auto& bx = *s.face_box;
        const double w = bx[2] - bx[0], h = bx[3] - bx[1];
        lp.norm.diag = std::hypot(w, h);
        lp.norm.box = std::sqrt(w * h);
      }
      lms.push_back(std::move(lp));
    }
  }
  if (task == ProbeTask::kParsing) {
    const F1Report f1 = f1_pooled(preds, gts, kNumSegClasses, pc.f1);
    rep.per_class_f1 = f1.per_class;
    rep.metrics["mean_f1"] = f1.mean;
  } else {
    for (const auto& lp : lms) rep.per_sample_nme.push_back(sample_nme(lp, pc.norm));
    rep.metrics["nme"] = nme(lms, pc.norm);
    const AucFr af = auc_fr(rep.per_sample_nme, pc.auc_threshold);
    rep.metrics["auc"] = af.auc;
    rep.metrics["fr"] = af.fr;
  }
  rep.metrics["final_train_loss"] = rep.train_loss.empty() ? 0.0 : rep.train_loss.back();
  rep.backbone_checksum_after = nn::params_checksum(backbone);
  return rep;
}

ProbeReport run_probe(const std::string& checkpoint, ProbeTask task, ProbeMode mode,
                      const std::vector<FaceSample>& train, const std::vector<FaceSample>& test,
                      const ProbeConfig& probe) {
  TrainState s = TrainState::load(checkpoint);
  return run_probe(s.encoder, s.config, task, mode, train, test, probe);
}

}  // namespace paco
