// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "paco/cli.hpp"
#include "paco/codebook.hpp"
#include "paco/data.hpp"
#include "paco/eval.hpp"
#include "paco/losses.hpp"
#include "paco/pretrain.hpp"

namespace {

using namespace paco;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Matrix uniform_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

std::vector<FaceSample> faces(std::size_t count, std::uint64_t seed, std::size_t size) {
  SynthOptions so;
  so.image_size = size;
  return generate_synthetic(count, seed, so);
}

// ---------------------------------------------------------------------------

Outcome mask_cardinality() {
  Rng rng(20240101);
  std::size_t failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const MaskSet m = sample_mask(196, 0.75, rng);
    const std::set<std::size_t> distinct(m.positions.begin(), m.positions.end());
    const bool in_range = distinct.empty() || *distinct.rbegin() < 196;
    failures += m.size() != 147 || distinct.size() != 147 || !in_range;
  }
  return {failures == 0, fmt("10000 draws, %.0f failures", static_cast<double>(failures))};
}

Outcome substitution_exactness() {
  Rng rng(7);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.below(196), n = 1 + rng.below(5), d = 1 + rng.below(16);
    const MaskSet mask = sample_mask(k, rng.uniform(0.0, 1.0), rng);
    PatchCodebook cb(k, n, d, rng);
    const Matrix embedded = uniform_matrix(k, d, rng, -5.0, 5.0);
    const TokenSelection sel = random_selection(mask, n, rng);
    const Matrix out = substitute(embedded, cb, sel, mask);
    Tape t(false);
    const Matrix via_tape = substitute(t.constant(embedded), t.constant(cb.tokens().value), cb, sel, mask).value();
    std::vector<long> chosen(k, -1);
    for (std::size_t i = 0; i < sel.size(); ++i) chosen[sel.positions[i]] = static_cast<long>(sel.alpha[i]);
    for (std::size_t r = 0; r < k; ++r) {
      const auto expect = chosen[r] < 0 ? embedded.row(r) : cb.token(r, static_cast<std::size_t>(chosen[r]));
      bad += std::memcmp(out.row(r).data(), expect.data(), d * sizeof(double)) != 0;
      bad += std::memcmp(via_tape.row(r).data(), expect.data(), d * sizeof(double)) != 0;
    }
  }
  return {bad == 0, fmt("1000 cases, %.0f mismatched rows", static_cast<double>(bad))};
}

// Max relative error between the tape gradient and central differences over
// every element of `params`. Differences below `noise` count as agreement.
double fd_check(const nn::ParamList& params, const std::function<Var(Tape&)>& build) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    t.backward(build(t));
  }
  const auto eval = [&] {
    Tape t(false);
    return build(t).scalar();
  };
  const double h = 1e-5, floor = 1e-6, noise = 1e-9;
  double worst = 0.0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      const double keep = p->value.data[i];
      p->value.data[i] = keep + h;
      const double up = eval();
      p->value.data[i] = keep - h;
      const double down = eval();
      p->value.data[i] = keep;
      const double numeric = (up - down) / (2.0 * h), analytic = p->grad.data[i];
      const double diff = std::abs(numeric - analytic);
      if (diff < noise) continue;
      worst = std::max(worst, diff / std::max({std::abs(numeric), std::abs(analytic), floor}));
    }
  }
  return worst;
}

Outcome gradient_fidelity() {
  RunConfig cfg;
  cfg.image_size = 4;
  cfg.patch_size = 2;  // K = 4
  cfg.embed_dim = 8;
  cfg.encoder_heads = 2;
  cfg.encoder_depth = 1;
  cfg.decoder_depth = 1;
  cfg.mlp_ratio = 2;
  cfg.n_tokens = 3;
  cfg.predictor_hidden = 6;
  cfg.perceptual_channels = {4, 4};
  cfg.perceptual_layer_indices = {1, 2};
  cfg.seed = 3;
  cfg.validate();
  TrainState s = TrainState::create(cfg);
  Rng rng(11);
  ImageTensor image(4, 4, 3);
  for (double& v : image.data) v = rng.uniform(0.0, 1.0);
  const PatchGrid grid = patchify(image, cfg.patch_size);
  MaskSet mask;
  mask.positions = {0, 2, 3};
  mask.total = 4;
  mask.ratio = 0.75;
  const TokenSelection sel = random_selection(mask, cfg.n_tokens, rng);
  const std::vector<std::size_t> labels{2, 0, 1};
  const auto orig_features = s.backbone.features(image);
  const std::size_t g = cfg.grid_side();

  const auto recon = [&](Tape& t) {
    Var embedded = s.encoder.embed(t, t.constant(grid.patches));
    Var sub = substitute(embedded, t.param(s.codebook.tokens()), s.codebook, sel, mask);
    return s.decoder.decode(t, s.encoder.encode(t, sub).output);
  };
  const auto mse = [&](Tape& t) { return ag::mse(recon(t), t.constant(grid.patches)); };
  const auto perc = [&](Tape& t) {
    return ag::perceptual_loss(t, s.backbone, patches_to_pixels(recon(t), g, g, cfg.patch_size, cfg.channels),
                               orig_features);
  };
  const auto ce = [&](Tape& t) {
    Matrix rows(mask.size(), grid.patches.cols);
    for (std::size_t i = 0; i < mask.size(); ++i)
      std::copy_n(grid.patches.row(mask.positions[i]).data(), rows.cols, rows.row(i).data());
    return ag::cross_entropy(s.predictor.logits(t, t.constant(rows), mask.positions), labels, true);
  };

  nn::ParamList model = s.model_params();
  nn::ParamList pred = s.predictor.parameters();
  nn::ParamList all = model;
  all.insert(all.end(), pred.begin(), pred.end());
  const double e_mse = fd_check(model, mse);
  const double e_perc = fd_check(model, perc);
  const double e_ce = fd_check(pred, ce);
  const double e_all = fd_check(all, [&](Tape& t) {
    return ag::add(ag::add(mse(t), ag::scale(perc(t), 0.7)), ce(t));
  });
  const double worst = std::max({e_mse, e_perc, e_ce, e_all});
  return {worst < 1e-4, fmt("max rel err mse %.2e perc %.2e ce %.2e composed %.2e", e_mse, e_perc, e_ce, e_all)};
}

// Naive reference: reconstruct every candidate image, then per masked
// position keep the first token with the strictly highest cosine.
std::vector<std::size_t> naive_labels(const PatchGrid& grid, const MaskSet& mask, const PatchCodebook& cb,
                                      const Matrix& embedded, const ReconstructFn& model) {
  const std::size_t n = cb.n();
  std::vector<Matrix> recon;
  for (std::size_t j = 0; j < n; ++j) {
    Matrix sub = embedded;
    for (std::size_t p : mask.positions)
      for (std::size_t c = 0; c < sub.cols; ++c) sub(p, c) = cb.token(p, j)[c];
    recon.push_back(model(sub));
  }
  std::vector<std::size_t> out;
  for (std::size_t p : mask.positions) {
    std::size_t best = 0;
    double best_cos = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t c = 0; c < grid.patches.cols; ++c) {
        const double a = grid.patches(p, c), b = recon[j](p, c);
        dot += a * b, na += a * a, nb += b * b;
      }
      const double denom = std::sqrt(na) * std::sqrt(nb);
      const double cos = denom > 0.0 ? dot / denom : 0.0;
      if (cos > best_cos) best_cos = cos, best = j;
    }
    out.push_back(best);
  }
  return out;
}

Outcome incubation_label_oracle() {
  Rng rng(5);
  std::size_t mismatches = 0, tie_trials = 0, ties_low = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.below(16), n = 1 + rng.below(5), d = 1 + rng.below(6), pd = 1 + rng.below(8);
    PatchGrid grid{uniform_matrix(k, pd, rng), k, 1, 1, pd};
    const MaskSet mask = sample_mask(k, rng.uniform(0.2, 1.0), rng);
    PatchCodebook cb(k, n, d, rng);
    // Duplicate tokens in a third of the trials so exact ties occur.
    if (trial % 3 == 0 && n > 1)
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t c = 0; c < d; ++c) cb.tokens().value(cb.row(p, n - 1), c) = cb.token(p, 0)[c];
    const Matrix w = uniform_matrix(d, pd, rng), embedded = uniform_matrix(k, d, rng);
    // Row-mixing nonlinear model so that every position sees the others.
    const ReconstructFn model = [&](const Matrix& sub) {
      Matrix out(sub.rows, pd);
      for (std::size_t r = 0; r < sub.rows; ++r)
        for (std::size_t o = 0; o < pd; ++o) {
          double acc = 0.0;
          for (std::size_t c = 0; c < d; ++c) acc += (sub(r, c) + 0.3 * sub((r + 1) % sub.rows, c)) * w(c, o);
          out(r, o) = std::tanh(acc);
        }
      return out;
    };
    const auto fast = incubation_labels(grid, mask, cb, embedded, model);
    const auto slow = naive_labels(grid, mask, cb, embedded, model);
    mismatches += fast != slow;
    if (trial % 3 == 0 && n > 1) {
      ++tie_trials;
      ties_low += std::count(fast.begin(), fast.end(), std::size_t{n - 1}) == 0;
    }
  }
  // The same comparison through the real encoder and decoder.
  RunConfig cfg = RunConfig::preset("tiny");
  cfg.image_size = 16;  // K = 16
  cfg.validate();
  TrainState s = TrainState::create(cfg);
  for (int trial = 0; trial < 10; ++trial) {
    ImageTensor img(16, 16, 3);
    for (double& v : img.data) v = rng.uniform(0.0, 1.0);
    const PatchGrid grid = patchify(img, cfg.patch_size);
    const MaskSet mask = sample_mask(grid.count(), cfg.mask_ratio, rng);
    Tape t(false);
    const Matrix embedded = s.encoder.embed(t, t.constant(grid.patches)).value();
    const ReconstructFn model = [&](const Matrix& sub) {
      Tape u(false);
      return s.decoder.decode(u, s.encoder.encode(u, u.constant(sub)).output).value();
    };
    mismatches += incubation_labels(grid, mask, s.codebook, s.encoder, s.decoder) !=
                  naive_labels(grid, mask, s.codebook, embedded, model);
  }
  return {mismatches == 0 && ties_low == tie_trials,
          fmt("110 trials, %.0f mismatches, %.0f of %.0f tie trials resolved to the lowest index",
              static_cast<double>(mismatches), static_cast<double>(ties_low), static_cast<double>(tie_trials))};
}

Outcome token_sparsity() {
  RunConfig cfg = RunConfig::preset("tiny");
  std::size_t leaks = 0, nonzero_total = 0, runs = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    cfg.seed = seed;
    TrainState s = TrainState::create(cfg);
    s.set_phase(Phase::kMain);
    s.lr = cfg.lr;
    const auto batch = images_of(faces(1, 40 + seed, cfg.image_size));
    Rng replay = s.rng;
    const PatchGrid grid = patchify(batch[0], cfg.patch_size);
    const MaskSet mask = sample_mask(grid.count(), cfg.mask_ratio, replay);
    const TokenSelection sel = predict_beliefs(s.predictor, grid, mask);
    train_step_main(s, batch);
    const Matrix& g = s.codebook.tokens().grad;
    std::vector<bool> used(g.rows, false);
    for (std::size_t i = 0; i < sel.size(); ++i) used[s.codebook.row(sel.positions[i], sel.alpha[i])] = true;
    std::size_t nonzero = 0;
    for (std::size_t r = 0; r < g.rows; ++r) {
      double norm = 0.0;
      for (double v : g.row(r)) norm += v * v;
      leaks += !used[r] && norm != 0.0;
      nonzero += used[r] && norm > 0.0;
    }
    nonzero_total += nonzero;
    runs += nonzero > 0;
  }
  return {leaks == 0 && runs == 3, fmt("3 steps, %.0f non-selected rows with gradient, %.0f selected rows nonzero",
                                       static_cast<double>(leaks), static_cast<double>(nonzero_total))};
}

double fixed_mask_mse(TrainState& s, const std::vector<ImageTensor>& images) {
  Rng rng(77);
  double total = 0.0;
  for (const ImageTensor& img : images) {
    const MaskSet mask = sample_mask(s.config.num_patches(), s.config.mask_ratio, rng);
    const TokenSelection sel = select_tokens(s, patchify(img, s.config.patch_size), mask);
    total += mse_loss(reconstruct(s, img, mask, sel), img);
  }
  return total / static_cast<double>(images.size());
}

Outcome overfit_smoke() {
  RunConfig cfg = RunConfig::preset("tiny");
  cfg.loss_weight_perceptual = 0.0;
  cfg.seed = 1;
  TrainState s = TrainState::create(cfg);
  s.set_phase(Phase::kMain);
  s.lr = cfg.lr;
  const auto batch = images_of(faces(8, 60, cfg.image_size));
  const double before = fixed_mask_mse(s, batch);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 300; ++step) {
    const LossReport r = train_step_main(s, batch);
    if (step == 0) first = r.mse;
    last = r.mse;
  }
  const double after = fixed_mask_mse(s, batch);
  return {after < 0.1 * before,
          fmt("fixed-mask mse %.4f -> %.4f (ratio %.3f)", before, after, after / before) +
              fmt("; step mse %.4f -> %.4f", first, last)};
}

Outcome predictor_learnability() {
  std::vector<double> accs;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RunConfig cfg = RunConfig::preset("tiny");
    cfg.incubation_ce_only = true;
    cfg.seed = seed;
    TrainState s = TrainState::create(cfg);
    // Zero residual branches: each patch is reconstructed from its own token
    // and position alone, so labels are a fixed function of patch content.
    for (auto* blocks : {&s.encoder.blocks(), &s.decoder.blocks()})
      for (nn::TransformerBlock& b : *blocks) {
        nn::ParamList ps;
        b.collect(ps);
        for (Parameter* p : ps) p->value.fill(0.0);
      }
    s.set_phase(Phase::kIncubation);
    s.predictor_lr = cfg.predictor_lr;
    const auto images = images_of(faces(8, 100 + seed, cfg.image_size));
    std::size_t cursor = 0;
    for (int step = 0; step < 200; ++step) {
      std::vector<ImageTensor> batch;
      for (int b = 0; b < 4; ++b) batch.push_back(images[cursor++ % images.size()]);
      train_step_incubation(s, batch);
    }
    Rng eval(900 + seed);
    std::size_t hit = 0, total = 0;
    for (int rep = 0; rep < 4; ++rep)
      for (const ImageTensor& img : images) {
        const PatchGrid grid = patchify(img, cfg.patch_size);
        const MaskSet mask = sample_mask(grid.count(), cfg.mask_ratio, eval);
        const auto labels = incubation_labels(grid, mask, s.codebook, s.encoder, s.decoder);
        const TokenSelection sel = predict_beliefs(s.predictor, grid, mask);
        for (std::size_t i = 0; i < labels.size(); ++i) hit += labels[i] == sel.alpha[i], ++total;
      }
    accs.push_back(static_cast<double>(hit) / static_cast<double>(total));
  }
  const double med = median3(accs);
  return {med > 0.9, fmt("accuracy %.3f / %.3f / %.3f, median %.3f", accs[0], accs[1], accs[2], med)};
}

Outcome metric_exactness() {
  double worst = 0.0;
  const auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  F1Options keep;
  keep.exclude_background = false;
  const F1Report f = f1_per_class({0, 1, 1, 1}, {0, 0, 1, 1}, 2, keep);
  track(f.per_class[0], 2.0 / 3.0);
  track(f.per_class[1], 4.0 / 5.0);
  const F1Report same = f1_per_class({0, 1, 2}, {0, 1, 2}, 4, keep);
  for (double v : same.per_class) track(v, 1.0);  // includes the absent class 3

  LandmarkPrediction one;
  one.gt = Matrix(1, 2, {30.0, 30.0});
  one.pred = Matrix(1, 2, {33.0, 30.0});
  one.norm.inter_ocular = 60.0;
  track(nme({one}, NormMode::kInterOcular), 5.0);
  LandmarkPrediction ring;
  ring.gt = Matrix(4, 2, {0, 0, 10, 0, 10, 10, 0, 10});
  ring.pred = Matrix(4, 2, {1, 0, 10, 1, 9, 10, 0, 9});
  ring.norm.diag = 100.0;
  ring.norm.box = 50.0;
  track(nme({ring}, NormMode::kDiag), 1.0);
  track(nme({ring}, NormMode::kBox), 2.0);
  LandmarkPrediction zero = ring;
  zero.pred = zero.gt;
  track(nme({zero}, NormMode::kDiag), 0.0);

  const AucFr ok = auc_fr({0.0, 0.0}, 0.07);
  track(ok.auc, 1.0);
  track(ok.fr, 0.0);
  const AucFr bad = auc_fr({0.1, 0.2}, 0.07);
  track(bad.auc, 0.0);
  track(bad.fr, 1.0);
  // Step CED: 0 on [0, 0.035), 1/2 on [0.035, 0.07) -> area 0.0175 / 0.07.
  const AucFr two = auc_fr({0.035, 0.07}, 0.07);
  track(two.auc, 0.5 * (0.07 - 0.035) / 0.07);
  track(two.fr, 0.0);
  return {worst <= 1e-9, fmt("max abs deviation %.2e", worst)};
}

// Scratch-vs-pretrained and ablation arms share one set of pretraining runs.
struct TrendRuns {
  bool done = false;
  std::vector<double> scratch, belief, random, no_incubation;
};

RunConfig trend_config(std::uint64_t seed) {
  RunConfig cfg = RunConfig::preset("tiny");
  cfg.epochs = 8;
  cfg.warmup_epochs = 2;
  cfg.seed = seed;
  return cfg;
}

TrendRuns& trend_runs(bool with_ablation) {
  static TrendRuns runs;
  static bool ablation_done = false;
  if (runs.done && (ablation_done || !with_ablation)) return runs;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const RunConfig cfg = trend_config(seed);
    const auto pretrain = images_of(faces(200, 1000 + seed, cfg.image_size));
    const auto ptrain = faces(200, 2000 + seed, cfg.image_size);
    const auto ptest = faces(100, 3000 + seed, cfg.image_size);
    ProbeConfig pc;
    pc.seed = seed;
    const auto arm = [&](const char* spec) {
      return run_arm(cfg, ArmSpec{spec, AblationSpec::parse(spec)}, pretrain, ptrain, ptest, pc)
          .probe.metrics.at("nme");
    };
    if (!runs.done) {
      TrainState init = TrainState::create(cfg);
      runs.scratch.push_back(
          run_probe(init.encoder, cfg, ProbeTask::kAlignment, ProbeMode::kFrozen, ptrain, ptest, pc).metrics.at("nme"));
      runs.belief.push_back(arm("selection=belief"));
    }
    if (with_ablation) {
      runs.random.push_back(arm("selection=random"));
      runs.no_incubation.push_back(arm("selection=belief,incubation=off"));
    }
  }
  runs.done = true;
  ablation_done |= with_ablation;
  return runs;
}

Outcome scratch_vs_pretrained() {
  const TrendRuns& r = trend_runs(false);
  std::vector<double> gains;
  for (std::size_t i = 0; i < 3; ++i) gains.push_back((r.scratch[i] - r.belief[i]) / r.scratch[i]);
  const double med = median3(gains);
  return {med >= 0.10, fmt("NME scratch %.2f/%.2f/%.2f", r.scratch[0], r.scratch[1], r.scratch[2]) +
                           fmt(" pretrained %.2f/%.2f/%.2f", r.belief[0], r.belief[1], r.belief[2]) +
                           fmt("; median relative gain %.3f (need >= 0.100)", med)};
}

Outcome ablation_direction() {
  const TrendRuns& r = trend_runs(true);
  const double b = median3(r.belief), rnd = median3(r.random), no = median3(r.no_incubation);
  return {b <= rnd && b < no,
          fmt("median NME belief %.3f, random %.3f, belief w/o incubation %.3f", b, rnd, no)};
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("paco_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  std::ostringstream out, err;
  const auto call = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "paco");
    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    return cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  int rc = call({"data-synth", "--count", "64", "--seed", "5", "--size", "32", "--test-fraction", "0",
                 "--out", (dir / "data").string()});
  for (const char* run : {"a", "b"})
    rc |= call({"pretrain", "--data", (dir / "data").string(), "--out", (dir / run).string(), "--preset", "tiny",
                "--set", "epochs=3", "--seed", "9", "--quiet"});
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  const std::string a = slurp(dir / "a" / "final.ckpt"), b = slurp(dir / "b" / "final.ckpt");
  const bool same = rc == 0 && !a.empty() && a == b;
  const bool logs = slurp(dir / "a" / "train_log.csv") == slurp(dir / "b" / "train_log.csv");
  fs::remove_all(dir);
  return {same && logs, fmt("exit %.0f, final checkpoints %.0f bytes, identical: ", rc, static_cast<double>(a.size())) +
                            (same ? "yes" : "no") + ", logs identical: " + (logs ? "yes" : "no")};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "mask cardinality", 5, mask_cardinality},
      {2, "substitution exactness", 30, substitution_exactness},
      {3, "gradient fidelity", 120, gradient_fidelity},
      {4, "incubation label oracle", 60, incubation_label_oracle},
      {5, "token-gradient sparsity", 30, token_sparsity},
      {6, "overfit smoke", 300, overfit_smoke},
      {7, "belief predictor learnability", 300, predictor_learnability},
      {8, "metric exactness", 5, metric_exactness},
      {9, "scratch vs pretrained probe", 1200, scratch_vs_pretrained},
      {10, "ablation direction", 2400, ablation_direction},
      {11, "pretrain determinism", 600, determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const Criterion& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s [%d] %s: %s (%.1f s, limit %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.limit_s, in_time ? "" : ", over time");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
