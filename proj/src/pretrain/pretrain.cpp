// SPDX-License-Identifier: Apache-2.0

#include "paco/pretrain.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace paco {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// AblationSpec

AblationSpec AblationSpec::parse(const std::string& text) {
  AblationSpec a;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("ablation: expected key=value, got '" + item + "'");
    const std::string k = item.substr(0, eq), v = item.substr(eq + 1);
    if (k == "selection") {
      if (v == "belief") a.selection = SelectionMode::kBelief;
      else if (v == "random") a.selection = SelectionMode::kRandom;
      else if (v == "single_token") a.selection = SelectionMode::kSingleToken;
      else throw std::invalid_argument("ablation: unknown selection '" + v + "'");
    } else if (k == "n") {
      a.n_override = static_cast<std::size_t>(std::stoul(v));
    } else if (k == "incubation") {
      if (v == "on" || v == "true") a.incubation_enabled = true;
      else if (v == "off" || v == "false") a.incubation_enabled = false;
      else throw std::invalid_argument("ablation: incubation must be on|off");
    } else {
      throw std::invalid_argument("ablation: unknown key '" + k + "'");
    }
  }
  return a;
}

std::string AblationSpec::to_string() const {
  const char* sel = selection == SelectionMode::kBelief   ? "belief"
                    : selection == SelectionMode::kRandom ? "random"
                                                          : "single_token";
  return std::string("selection=") + sel + ",n=" + std::to_string(n_override) +
         ",incubation=" + (incubation_enabled ? "on" : "off");
}

std::size_t AblationSpec::effective_n(const RunConfig& cfg) const {
  if (selection == SelectionMode::kSingleToken) return 1;
  return n_override ? n_override : cfg.n_tokens;
}

// ---------------------------------------------------------------------------
// TrainState

TrainState TrainState::create(const RunConfig& config, const AblationSpec& ablation) {
  TrainState s;
  s.config = config;
  s.config.n_tokens = ablation.effective_n(config);
  s.config.validate();
  s.ablation = ablation;
  // Separate streams per component so that changing one size leaves the others' init intact.
  Rng enc_rng = Rng::derive(s.config.seed, 1);
  Rng dec_rng = Rng::derive(s.config.seed, 2);
  Rng cb_rng = Rng::derive(s.config.seed, 3);
  Rng pred_rng = Rng::derive(s.config.seed, 4);
  s.encoder = Encoder(s.config, enc_rng);
  s.decoder = PixelDecoder(s.config, dec_rng);
  s.codebook = PatchCodebook(s.config.num_patches(), s.config.n_tokens, s.config.embed_dim, cb_rng);
  s.predictor = BeliefPredictor(s.config, pred_rng);
  s.backbone = PerceptualBackbone::from_config(s.config);
  nn::AdamWConfig oc{s.config.beta1, s.config.beta2, 1e-8, s.config.weight_decay};
  s.model_opt = nn::AdamW(oc);
  s.predictor_opt = nn::AdamW(oc);
  s.rng = Rng::derive(s.config.seed, 5);
  s.lr = s.config.lr;
  s.predictor_lr = s.config.predictor_lr;
  s.set_phase(ablation.has_incubation_epoch() ? Phase::kIncubation : Phase::kMain);
  return s;
}

nn::ParamList TrainState::model_params() {
  nn::ParamList out = encoder.parameters();
  for (Parameter* p : decoder.parameters()) out.push_back(p);
  out.push_back(&codebook.tokens());
  return out;
}

void TrainState::set_phase(Phase p) {
  phase = p;
  const bool trains = p == Phase::kIncubation || ablation.predictor_trains_in_main();
  nn::set_trainable(predictor.parameters(), trains);
}

TensorArchive TrainState::to_archive() {
  TensorArchive a;
  a.meta["format"] = "paco-checkpoint";
  a.meta["config"] = config.to_text();
  a.meta["ablation"] = ablation.to_string();
  a.meta["epoch"] = std::to_string(epoch);
  a.meta["step"] = std::to_string(step);
  a.meta["phase"] = phase_name(phase);
  a.meta["rng"] = rng.save();
  auto put_params = [&](const nn::ParamList& ps) {
    for (Parameter* p : ps) a.tensors[p->name] = p->value;
  };
  put_params(model_params());
  put_params(predictor.parameters());
  for (const Parameter& p : backbone.weights()) a.tensors[p.name] = p.value;
  auto put_opt = [&](const std::string& prefix, const nn::AdamW& opt) {
    for (const auto& [name, mom] : opt.state()) {
      a.tensors[prefix + "/m/" + name] = mom.m;
      a.tensors[prefix + "/v/" + name] = mom.v;
      a.meta[prefix + "/steps/" + name] = std::to_string(mom.steps);
    }
  };
  put_opt("opt.model", model_opt);
  put_opt("opt.predictor", predictor_opt);
  return a;
}

TrainState TrainState::from_archive(const TensorArchive& a) {
  if (a.meta_at("format") != "paco-checkpoint") throw ArchiveError("archive is not a paco checkpoint");
  RunConfig cfg = RunConfig::from_text(a.meta_at("config"));
  AblationSpec abl = AblationSpec::parse(a.meta_at("ablation"));
  // The stored config already carries the effective n.
  abl.n_override = cfg.n_tokens;
  if (abl.selection == SelectionMode::kSingleToken) abl.n_override = 0;
  TrainState s = create(cfg, abl);
  s.ablation = AblationSpec::parse(a.meta_at("ablation"));
  auto load_params = [&](const nn::ParamList& ps) {
    for (Parameter* p : ps) {
      const Matrix* m = a.find(p->name);
      if (!m) throw ArchiveError("checkpoint is missing tensor " + p->name);
      if (!m->same_shape(p->value))
        throw ArchiveError("checkpoint tensor " + p->name + " has shape " + shape_str(*m));
      p->value = *m;
    }
  };
  load_params(s.model_params());
  load_params(s.predictor.parameters());
  for (Parameter& p : s.backbone.weights()) {
    const Matrix* m = a.find(p.name);
    if (!m || !m->same_shape(p.value)) throw ArchiveError("checkpoint is missing backbone tensor " + p.name);
    p.value = *m;
  }
  auto load_opt = [&](const std::string& prefix, nn::AdamW& opt) {
    const std::string steps_prefix = prefix + "/steps/";
    for (const auto& [key, val] : a.meta) {
      if (key.rfind(steps_prefix, 0) != 0) continue;
      const std::string name = key.substr(steps_prefix.size());
      const Matrix* m = a.find(prefix + "/m/" + name);
      const Matrix* v = a.find(prefix + "/v/" + name);
      if (!m || !v) throw ArchiveError("checkpoint optimizer state incomplete for " + name);
      opt.state()[name] = nn::AdamW::Moments{*m, *v, std::stoull(val)};
    }
  };
  load_opt("opt.model", s.model_opt);
  load_opt("opt.predictor", s.predictor_opt);
  s.epoch = std::stoull(a.meta_at("epoch"));
  s.step = std::stoull(a.meta_at("step"));
  s.rng.load(a.meta_at("rng"));
  s.set_phase(parse_phase(a.meta_at("phase")));
  return s;
}

// ---------------------------------------------------------------------------
// Steps

namespace {

struct ImageContext {
  PatchGrid grid;
  Matrix target;
  std::vector<Matrix> original_features;
};

ImageContext prepare(TrainState& s, const ImageTensor& image, bool need_features) {
  if (image.height != s.config.image_size || image.width != s.config.image_size ||
      image.channels != s.config.channels)
    throw ShapeError("training image " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + "x" + std::to_string(image.channels) +
                     " does not match the configured input");
  ImageContext c;
  c.grid = patchify(image, s.config.patch_size);
  c.target = s.config.mse_patch_norm ? normalize_patches(c.grid.patches) : c.grid.patches;
  if (need_features) c.original_features = s.backbone.features(image);
  return c;
}

struct ReconTerms {
  Var mse;
  Var perceptual;
  Var total;
};

// Reconstruction objective mse + w * perceptual for one image on tape t.
ReconTerms reconstruction_terms(Tape& t, TrainState& s, const ImageContext& c, const MaskSet& mask,
                                const TokenSelection& sel) {
  Var patches = t.constant(c.grid.patches);
  Var embedded = s.encoder.embed(t, patches);
  Var substituted = substitute(embedded, t.param(s.codebook.tokens()), s.codebook, sel, mask);
  Var recon = s.decoder.decode(t, s.encoder.encode(t, substituted).output);
  ReconTerms r;
  r.mse = ag::mse(recon, t.constant(c.target));
  r.total = r.mse;
  if (s.config.loss_weight_perceptual != 0.0) {
    Var pixels = patches_to_pixels(recon, c.grid.grid_rows, c.grid.grid_cols, c.grid.patch_size,
                                   c.grid.channels);
    r.perceptual = ag::perceptual_loss(t, s.backbone, pixels, c.original_features);
    r.total = ag::add(r.total, ag::scale(r.perceptual, s.config.loss_weight_perceptual));
  } else {
    r.perceptual = t.constant(Matrix(1, 1));
  }
  return r;
}

Matrix masked_rows(const PatchGrid& grid, const MaskSet& mask) {
  Matrix rows(mask.size(), grid.patch_dim());
  for (std::size_t k = 0; k < mask.size(); ++k) {
    auto src = grid.patches.row(mask.positions[k]);
    std::copy(src.begin(), src.end(), rows.row(k).begin());
  }
  return rows;
}

void check_finite(const LossReport& r, const TrainState& s) {
  if (std::isfinite(r.mse) && std::isfinite(r.perceptual) && std::isfinite(r.belief_ce) &&
      std::isfinite(r.total))
    return;
  std::ostringstream os;
  os << "non-finite loss at epoch " << s.epoch << " step " << s.step << " (" << phase_name(s.phase)
     << "): mse=" << r.mse << " perceptual=" << r.perceptual << " belief_ce=" << r.belief_ce;
  throw NonFiniteLossError(os.str());
}

class TrainableGuard {
 public:
  TrainableGuard(nn::ParamList params, bool trainable) : params_(std::move(params)) {
    for (Parameter* p : params_) {
      saved_.push_back(p->trainable);
      p->trainable = trainable;
    }
  }
  ~TrainableGuard() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->trainable = saved_[i];
  }
  TrainableGuard(const TrainableGuard&) = delete;
  TrainableGuard& operator=(const TrainableGuard&) = delete;

 private:
  nn::ParamList params_;
  std::vector<bool> saved_;
};

void accumulate_report(LossReport& acc, const LossReport& r) {
  acc.mse += r.mse;
  acc.perceptual += r.perceptual;
  acc.belief_ce += r.belief_ce;
  acc.total += r.total;
}

LossReport average(LossReport acc, std::size_t n) {
  const double inv = 1.0 / static_cast<double>(n);
  acc.mse *= inv;
  acc.perceptual *= inv;
  acc.belief_ce *= inv;
  acc.total *= inv;
  return acc;
}

}  // namespace

TokenSelection select_tokens(TrainState& s, const PatchGrid& grid, const MaskSet& mask) {
  switch (s.ablation.selection) {
    case SelectionMode::kBelief:
      return predict_beliefs(s.predictor, grid, mask);
    case SelectionMode::kRandom:
      return random_selection(mask, s.codebook.n(), s.rng);
    case SelectionMode::kSingleToken: {
      TokenSelection sel;
      sel.positions = mask.positions;
      sel.alpha.assign(mask.size(), 0);
      return sel;
    }
  }
  throw std::logic_error("unhandled selection mode");
}

ImageTensor reconstruct(TrainState& s, const ImageTensor& image, const MaskSet& mask,
                        const TokenSelection& selection) {
  const PatchGrid grid = patchify(image, s.config.patch_size);
  Tape t(false);
  Var embedded = s.encoder.embed(t, t.constant(grid.patches));
  Var substituted = substitute(embedded, t.constant(s.codebook.tokens().value), s.codebook, selection, mask);
  PatchGrid out = grid;
  out.patches = s.decoder.decode(t, s.encoder.encode(t, substituted).output).value();
  return unpatchify(out);
}

LossReport train_step_main(TrainState& s, const std::vector<ImageTensor>& batch) {
  if (s.phase != Phase::kMain) throw std::logic_error("train_step_main called outside the main phase");
  if (batch.empty()) throw std::invalid_argument("train_step_main: empty batch");
  const bool train_predictor = s.ablation.predictor_trains_in_main();
  nn::ParamList model = s.model_params();
  nn::ParamList pred = s.predictor.parameters();
  nn::zero_grads(model);
  if (train_predictor) nn::zero_grads(pred);

  LossReport acc;
  for (const ImageTensor& image : batch) {
    const ImageContext c = prepare(s, image, s.config.loss_weight_perceptual != 0.0);
    const MaskSet mask = sample_mask(c.grid.count(), s.config.mask_ratio, s.rng);
    Tape t;
    TokenSelection sel;
    Var ce;
    if (train_predictor) {
      // No-incubation ablation: the predictor keeps learning from fresh labels every step.
      const auto labels = incubation_labels(c.grid, mask, s.codebook, s.encoder, s.decoder);
      Var logits = s.predictor.logits(t, t.constant(masked_rows(c.grid, mask)), mask.positions);
      sel = selection_from_logits(mask.positions, logits.value());
      ce = ag::cross_entropy(logits, labels, s.config.ce_mean);
    } else {
      sel = select_tokens(s, c.grid, mask);
    }
    ReconTerms r = reconstruction_terms(t, s, c, mask, sel);
    Var total = train_predictor ? ag::add(r.total, ce) : r.total;
    LossReport rep;
    rep.mse = r.mse.scalar();
    rep.perceptual = r.perceptual.scalar();
    rep.belief_ce = train_predictor ? ce.scalar() : 0.0;
    rep.total = total.scalar();
    check_finite(rep, s);
    t.backward(total);
    accumulate_report(acc, rep);
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  s.model_opt.step(model, s.lr, scale);
  if (train_predictor) s.predictor_opt.step(pred, s.predictor_lr, scale);
  ++s.step;
  return average(acc, batch.size());
}

LossReport train_step_incubation(TrainState& s, const std::vector<ImageTensor>& batch) {
  if (s.phase != Phase::kIncubation) throw std::logic_error("train_step_incubation called outside incubation");
  if (batch.empty()) throw std::invalid_argument("train_step_incubation: empty batch");
  nn::ParamList model = s.model_params();
  nn::ParamList pred = s.predictor.parameters();
  nn::zero_grads(model);
  nn::zero_grads(pred);
  const bool ce_only = s.config.incubation_ce_only;

  LossReport acc;
  for (const ImageTensor& image : batch) {
    const ImageContext c = prepare(s, image, s.config.loss_weight_perceptual != 0.0);
    const MaskSet mask = sample_mask(c.grid.count(), s.config.mask_ratio, s.rng);
    // Labels come from the model as it stands before this step's update.
    const auto labels = incubation_labels(c.grid, mask, s.codebook, s.encoder, s.decoder);

    Tape t;
    Var logits = s.predictor.logits(t, t.constant(masked_rows(c.grid, mask)), mask.positions);
    const TokenSelection sel = incubation_corrupt(selection_from_logits(mask.positions, logits.value()),
                                                  s.codebook.n(), s.config.incubation_random_fraction,
                                                  s.rng);
    Var ce = ag::cross_entropy(logits, labels, s.config.ce_mean);

    std::optional<TrainableGuard> freeze;
    if (ce_only) freeze.emplace(model, false);
    ReconTerms r = reconstruction_terms(t, s, c, mask, sel);
    Var total = ag::add(r.total, ce);
    const LossReport rep = total_loss(r.mse.scalar(), r.perceptual.scalar(), ce.scalar(),
                                      s.config.loss_weight_perceptual, Phase::kIncubation);
    check_finite(rep, s);
    t.backward(total);
    accumulate_report(acc, rep);
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  s.predictor_opt.step(pred, s.predictor_lr, scale);
  if (!ce_only) s.model_opt.step(model, s.lr, scale);
  ++s.step;
  return average(acc, batch.size());
}

double scheduled_lr(const RunConfig& cfg, std::size_t step, std::size_t steps_per_epoch) {
  const std::size_t warmup = cfg.warmup_epochs * steps_per_epoch;
  const std::size_t total = std::max<std::size_t>(cfg.epochs * steps_per_epoch, 1);
  if (step < warmup) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total <= warmup) return cfg.lr;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  return cfg.min_lr + (cfg.lr - cfg.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------
// Loop

namespace {

std::string epoch_name(std::size_t completed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", completed);
  return buf;
}

Phase phase_for_epoch(const AblationSpec& a, std::size_t epoch) {
  return (epoch == 0 && a.has_incubation_epoch()) ? Phase::kIncubation : Phase::kMain;
}

}  // namespace

PretrainResult run_pretraining(const RunConfig& config, const AblationSpec& ablation,
                               const std::vector<ImageTensor>& dataset,
                               const PretrainOptions& opt) {
  if (dataset.empty()) throw std::invalid_argument("run_pretraining: dataset is empty");
  TrainState s;
  if (opt.resume) {
    s = TrainState::load(*opt.resume);
    s.config.epochs = config.epochs;
  } else {
    s = TrainState::create(config, ablation);
  }
  if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);

  std::ofstream log;
  if (!opt.out_dir.empty()) {
    const fs::path log_path = fs::path(opt.out_dir) / "train_log.csv";
    const bool append = opt.resume.has_value() && fs::exists(log_path);
    log.open(log_path, append ? std::ios::app : std::ios::trunc);
    if (!append) write_loss_csv_header(log);
  }

  const std::size_t bs = s.config.batch_size;
  const std::size_t spe = (dataset.size() + bs - 1) / bs;
  PretrainResult result;
  for (std::size_t epoch = s.epoch; epoch < s.config.epochs; ++epoch) {
    s.set_phase(phase_for_epoch(s.ablation, epoch));
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = Rng::derive(s.config.seed, 0x5348554646ULL, epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.below(i))]);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = s.phase;
    for (std::size_t b = 0; b < spe; ++b) {
      std::vector<ImageTensor> batch;
      for (std::size_t i = b * bs; i < std::min(dataset.size(), (b + 1) * bs); ++i)
        batch.push_back(dataset[order[i]]);
      s.lr = scheduled_lr(s.config, s.step, spe);
      s.predictor_lr = s.config.predictor_lr;
      LossReport r;
      try {
        r = s.phase == Phase::kIncubation ? train_step_incubation(s, batch) : train_step_main(s, batch);
      } catch (const NonFiniteLossError&) {
        if (!opt.out_dir.empty()) s.save((fs::path(opt.out_dir) / "nan_dump.ckpt").string());
        throw;
      }
      if (log) write_loss_csv_row(log, s.step, s.phase, r);
      result.steps.push_back(r);
      accumulate_report(rec.mean, r);
    }
    rec.mean = average(rec.mean, spe);
    result.epochs.push_back(rec);
    s.epoch = epoch + 1;
    s.set_phase(phase_for_epoch(s.ablation, s.epoch));
    if (!opt.quiet)
      std::cerr << "epoch " << epoch << " [" << phase_name(rec.phase) << "] mse=" << rec.mean.mse
                << " perceptual=" << rec.mean.perceptual << " ce=" << rec.mean.belief_ce << "\n";
    if (opt.write_checkpoints && !opt.out_dir.empty()) {
      const std::string path = (fs::path(opt.out_dir) / epoch_name(s.epoch)).string();
      s.save(path);
      result.epoch_checkpoints.push_back(path);
    }
    if (opt.on_epoch) opt.on_epoch(s, rec);
  }
  if (!opt.out_dir.empty()) {
    result.final_checkpoint = (fs::path(opt.out_dir) / "final.ckpt").string();
    s.save(result.final_checkpoint);
  }
  return result;
}

std::vector<std::vector<std::size_t>> selection_histogram(TrainState& s,
                                                          const std::vector<ImageTensor>& images) {
  const std::size_t k = s.config.num_patches();
  std::vector<std::vector<std::size_t>> hist(k, std::vector<std::size_t>(s.codebook.n(), 0));
  MaskSet all;
  all.total = k;
  all.ratio = 1.0;
  all.positions.resize(k);
  std::iota(all.positions.begin(), all.positions.end(), 0);
  for (const ImageTensor& img : images) {
    const TokenSelection sel = predict_beliefs(s.predictor, patchify(img, s.config.patch_size), all);
    for (std::size_t i = 0; i < k; ++i) ++hist[i][sel.alpha[i]];
  }
  return hist;
}

}  // namespace paco
