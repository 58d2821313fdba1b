// SPDX-License-Identifier: Apache-2.0

#include "paco/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "paco/data.hpp"
#include "paco/eval.hpp"
#include "paco/kernels.hpp"
#include "paco/pretrain.hpp"

namespace paco::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigFlags {
  std::string config_path;
  std::string preset;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd, const std::string& preset_flag = "--preset") {
    cmd->add_option("--config", config_path, "Run config file (key = value lines)");
    cmd->add_option(preset_flag, preset, "Built-in config: desk, tiny, micro, vit-b16");
    cmd->add_option("--set", overrides, "Config override key=value (repeatable)");
    cmd->add_option("--seed", seed, "Seed; overrides the config seed");
  }

  RunConfig resolve() const {
    if (!config_path.empty() && !preset.empty()) throw UsageError("a config file and a config preset are exclusive");
    RunConfig cfg = !config_path.empty() ? RunConfig::load(config_path) : RunConfig::preset(preset);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

std::string manifest_path(const std::string& data) {
  const fs::path p(data);
  if (fs::is_directory(p)) return (p / "manifest.jsonl").string();
  return p.string();
}

/// Synthetic samples, stored under PACO_CACHE_DIR when that is set.
std::vector<FaceSample> synthetic_samples(std::size_t count, std::uint64_t seed, std::size_t size) {
  SynthOptions so;
  so.image_size = size;
  const char* cache = std::getenv("PACO_CACHE_DIR");
  if (!cache || !*cache) return generate_synthetic(count, seed, so);
  const fs::path dir = fs::path(cache) / ("synth-n" + std::to_string(count) + "-s" + std::to_string(seed) +
                                          "-px" + std::to_string(size));
  const fs::path manifest = dir / "manifest.jsonl";
  if (!fs::exists(manifest)) write_synthetic_dataset(dir.string(), count, seed, so, 0.0);
  return load_split(DatasetManifest::read(manifest.string()), "train", size);
}

json config_json(const RunConfig& cfg) {
  json j = json::object();
  std::istringstream in(cfg.to_text());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

json loss_json(const LossReport& r) {
  return {{"mse", r.mse}, {"perceptual", r.perceptual}, {"belief_ce", r.belief_ce}, {"total", r.total}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

json probe_report_json(const ProbeReport& r) {
  json j;
  j["task"] = probe_task_name(r.task);
  j["mode"] = probe_mode_name(r.mode);
  j["seed"] = r.seed;
  j["metrics"] = r.metrics;
  if (!r.per_class_f1.empty()) {
    json pc = json::object();
    for (std::size_t c = 0; c < r.per_class_f1.size(); ++c) pc[seg_class_name(c)] = r.per_class_f1[c];
    j["per_class_f1"] = pc;
  }
  if (!r.per_sample_nme.empty()) j["per_sample_nme"] = r.per_sample_nme;
  j["backbone_checksum_before"] = r.backbone_checksum_before;
  j["backbone_checksum_after"] = r.backbone_checksum_after;
  return j;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---------------------------------------------------------------------------
// Subcommands. Each fills `summary` (outputs, metrics) and returns normally
// or throws.

struct PretrainArgs {
  ConfigFlags cfg;
  std::string data, out, ablation, resume, split = "train";
  std::optional<std::size_t> epochs;
  bool quiet = false;
};

void cmd_pretrain(const PretrainArgs& a, json& summary) {
  RunConfig cfg = a.cfg.resolve();
  if (a.epochs) cfg.epochs = *a.epochs;
  const AblationSpec ablation = AblationSpec::parse(a.ablation);
  const DatasetManifest m = DatasetManifest::read(manifest_path(a.data));
  const auto samples = load_split(m, a.split, cfg.image_size);
  if (samples.empty()) throw std::runtime_error("split '" + a.split + "' of " + a.data + " is empty");
  fs::create_directories(a.out);
  cfg.save((fs::path(a.out) / "config.txt").string());
  PretrainOptions opt;
  opt.out_dir = a.out;
  opt.quiet = a.quiet;
  if (!a.resume.empty()) opt.resume = a.resume;
  const PretrainResult r = run_pretraining(cfg, ablation, images_of(samples), opt);
  summary["config"] = config_json(cfg);
  summary["seed"] = cfg.seed;
  summary["outputs"] = {{"final_checkpoint", r.final_checkpoint},
                        {"epoch_checkpoints", r.epoch_checkpoints},
                        {"log", (fs::path(a.out) / "train_log.csv").string()},
                        {"config", (fs::path(a.out) / "config.txt").string()}};
  json epochs = json::array();
  for (const EpochRecord& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"phase", phase_name(e.phase)}, {"loss", loss_json(e.mean)}});
  summary["metrics"] = {{"epochs", epochs}, {"ablation", ablation.to_string()}};
  if (!r.epochs.empty()) summary["metrics"]["final"] = loss_json(r.epochs.back().mean);
}

struct EvaluateArgs {
  std::string ckpt, task = "alignment", mode = "frozen", data, out, norm = "inter_ocular";
  ProbeConfig probe;
};

void cmd_evaluate(const EvaluateArgs& a, json& summary) {
  ProbeConfig pc = a.probe;
  pc.norm = parse_norm_mode(a.norm);
  const ProbeTask task = parse_probe_task(a.task);
  const ProbeMode mode = parse_probe_mode(a.mode);
  TrainState state = TrainState::load(a.ckpt);
  const DatasetManifest m = DatasetManifest::read(manifest_path(a.data));
  const auto train = load_split(m, "train", state.config.image_size);
  const auto test = load_split(m, "test", state.config.image_size);
  if (train.empty() || test.empty()) throw std::runtime_error("evaluation needs non-empty train and test splits");
  const ProbeReport r = run_probe(state.encoder, state.config, task, mode, train, test, pc);
  fs::create_directories(a.out);
  const fs::path report = fs::path(a.out) / "report.json";
  const fs::path breakdown = fs::path(a.out) / "breakdown.csv";
  write_text(report, probe_report_json(r).dump(2) + "\n");
  std::ostringstream csv;
  csv << std::setprecision(17);
  if (task == ProbeTask::kParsing) {
    csv << "class_id,class,f1\n";
    for (std::size_t c = 0; c < r.per_class_f1.size(); ++c)
      csv << c << ',' << seg_class_name(c) << ',' << r.per_class_f1[c] << '\n';
  } else {
    csv << "sample,nme\n";
    for (std::size_t i = 0; i < r.per_sample_nme.size(); ++i) csv << test[i].id << ',' << r.per_sample_nme[i] << '\n';
  }
  write_text(breakdown, csv.str());
  summary["config"] = config_json(state.config);
  summary["seed"] = pc.seed;
  summary["outputs"] = {{"report", report.string()}, {"breakdown", breakdown.string()}};
  summary["metrics"] = r.metrics;
}

struct ReconstructArgs {
  std::string ckpt, image, out;
  std::uint64_t seed = 0;
  std::optional<double> mask_ratio;
  std::size_t scale = 4;
};

void cmd_reconstruct(const ReconstructArgs& a, json& summary) {
  if (a.scale == 0) throw UsageError("--scale must be positive");
  TrainState s = TrainState::load(a.ckpt);
  const RunConfig& cfg = s.config;
  ImageTensor img = read_png(a.image);
  img = resize_bilinear(img, cfg.image_size, cfg.image_size);
  s.rng = Rng::derive(a.seed, 0x5245434fULL);
  const PatchGrid grid = patchify(img, cfg.patch_size);
  const MaskSet mask = sample_mask(grid.count(), a.mask_ratio.value_or(cfg.mask_ratio), s.rng);
  const TokenSelection sel = select_tokens(s, grid, mask);
  ImageTensor recon = reconstruct(s, img, mask, sel);
  for (double& v : recon.data) v = std::clamp(v, 0.0, 1.0);
  PatchGrid masked_grid = grid;
  for (std::size_t k : mask.positions)
    for (double& v : masked_grid.patches.row(k)) v = 0.5;
  const ImageTensor masked = unpatchify(masked_grid);

  const std::size_t n = cfg.image_size, gap = 2;
  ImageTensor panel(n, 3 * n + 2 * gap, cfg.channels, 1.0);
  const ImageTensor* parts[3] = {&img, &masked, &recon};
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        for (std::size_t c = 0; c < cfg.channels; ++c) panel.at(y, p * (n + gap) + x, c) = parts[p]->at(y, x, c);
  fs::create_directories(a.out);
  const auto save = [&](const std::string& name, const ImageTensor& t) {
    const fs::path path = fs::path(a.out) / name;
    write_png(path.string(), resize_bilinear(t, t.height * a.scale, t.width * a.scale));
    return path.string();
  };
  summary["outputs"] = {{"panel", save("panel.png", panel)},
                        {"original", save("original.png", img)},
                        {"masked", save("masked.png", masked)},
                        {"reconstruction", save("reconstruction.png", recon)}};
  summary["config"] = config_json(cfg);
  summary["seed"] = a.seed;
  summary["metrics"] = {{"mse", mse_loss(recon, img)}, {"masked_patches", mask.size()}};
}

struct CodebookArgs {
  std::string ckpt, out, data;
  std::size_t count = 64;
  std::uint64_t seed = 0;
};

void cmd_codebook_dump(const CodebookArgs& a, json& summary) {
  TrainState s = TrainState::load(a.ckpt);
  const Matrix& tokens = s.codebook.tokens().value;
  fs::create_directories(a.out);
  const fs::path bin = fs::path(a.out) / "tokens.bin";
  {
    std::ofstream f(bin, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + bin.string());
    f.write("PACOTOK1", 8);
    const std::uint64_t dims[3] = {s.codebook.positions(), s.codebook.n(), s.codebook.dim()};
    f.write(reinterpret_cast<const char*>(dims), sizeof dims);
    f.write(reinterpret_cast<const char*>(tokens.data.data()),
            static_cast<std::streamsize>(tokens.data.size() * sizeof(double)));
  }
  std::vector<ImageTensor> images;
  if (!a.data.empty()) {
    const DatasetManifest m = DatasetManifest::read(manifest_path(a.data));
    for (const char* split : {"train", "test"})
      for (auto& smp : load_split(m, split, s.config.image_size)) images.push_back(std::move(smp.image));
  } else {
    images = images_of(synthetic_samples(a.count, a.seed, s.config.image_size));
  }
  const auto hist = selection_histogram(s, images);
  const fs::path jl = fs::path(a.out) / "histograms.jsonl";
  std::ostringstream lines;
  std::size_t used = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    json j = {{"position", i}, {"counts", hist[i]}};
    lines << j.dump() << '\n';
    for (std::size_t c : hist[i]) used += c > 0;
  }
  write_text(jl, lines.str());
  summary["config"] = config_json(s.config);
  summary["seed"] = a.seed;
  summary["outputs"] = {{"tokens", bin.string()}, {"histograms", jl.string()}};
  summary["metrics"] = {{"positions", s.codebook.positions()},
                        {"tokens_per_position", s.codebook.n()},
                        {"dim", s.codebook.dim()},
                        {"images", images.size()},
                        {"tokens_used", used}};
}

struct SynthArgs {
  std::size_t count = 0, size = 64;
  std::string out;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
};

void cmd_data_synth(const SynthArgs& a, json& summary) {
  if (a.count == 0) throw UsageError("--count must be positive");
  SynthOptions so;
  so.image_size = a.size;
  const SynthWriteResult r = write_synthetic_dataset(a.out, a.count, a.seed, so, a.test_fraction);
  summary["seed"] = a.seed;
  summary["config"] = {{"count", a.count}, {"size", a.size}, {"test_fraction", a.test_fraction}};
  summary["outputs"] = {{"manifest", r.manifest_path}};
  summary["metrics"] = {{"train", r.train}, {"test", r.test}};
}

struct PrepArgs {
  std::string manifest, tmpl, out;
  std::size_t size = 0;
};

void cmd_data_prep(const PrepArgs& a, json& summary) {
  const AlignTemplate t = a.tmpl.empty() ? AlignTemplate::standard() : AlignTemplate::load(a.tmpl);
  const DatasetManifest m = DatasetManifest::read(a.manifest);
  const std::string out_manifest = prepare_dataset(m, t, a.out, a.size);
  summary["config"] = {{"crop", t.crop}, {"canvas", t.canvas}, {"background", t.background}, {"size", a.size}};
  summary["outputs"] = {{"manifest", out_manifest}};
  summary["metrics"] = {{"records", m.records.size()}};
}

struct AblateArgs {
  ConfigFlags cfg;
  std::string preset = "table7-mini", out, data;
  std::size_t seeds = 1, pretrain_count = 200, probe_train = 200, probe_test = 100;
  ProbeConfig probe;
};

void cmd_ablate(const AblateArgs& a, json& summary) {
  RunConfig base = a.cfg.resolve();
  const auto arms = ablation_preset(a.preset);
  if (a.seeds == 0) throw UsageError("--seeds must be positive");
  fs::create_directories(a.out);
  std::ostringstream csv;
  csv << std::setprecision(17) << "arm,selection,n,incubation,seed,nme,auc,fr,final_mse\n";
  json rows = json::array();
  std::map<std::string, std::vector<double>> per_arm;
  for (std::size_t k = 0; k < a.seeds; ++k) {
    RunConfig cfg = base;
    cfg.seed = base.seed + k;
    std::vector<ImageTensor> pretrain;
    std::vector<FaceSample> ptrain, ptest;
    if (!a.data.empty()) {
      const DatasetManifest m = DatasetManifest::read(manifest_path(a.data));
      ptrain = load_split(m, "train", cfg.image_size);
      ptest = load_split(m, "test", cfg.image_size);
      pretrain = images_of(ptrain);
    } else {
      pretrain = images_of(synthetic_samples(a.pretrain_count, 1000 + cfg.seed, cfg.image_size));
      ptrain = synthetic_samples(a.probe_train, 2000 + cfg.seed, cfg.image_size);
      ptest = synthetic_samples(a.probe_test, 3000 + cfg.seed, cfg.image_size);
    }
    ProbeConfig pc = a.probe;
    pc.seed = cfg.seed;
    for (std::size_t i = 0; i < arms.size(); ++i) {
      const fs::path dir = fs::path(a.out) / ("arm" + std::to_string(i)) / ("seed" + std::to_string(cfg.seed));
      const ArmResult r = run_arm(cfg, arms[i], pretrain, ptrain, ptest, pc, dir.string());
      const double score = r.probe.metrics.at("nme");
      per_arm[arms[i].name].push_back(score);
      csv << '"' << r.name << "\"," << r.ablation.to_string().substr(10, r.ablation.to_string().find(',') - 10) << ','
          << r.ablation.effective_n(cfg) << ',' << (r.ablation.has_incubation_epoch() ? "on" : "off") << ','
          << cfg.seed << ',' << score << ',' << r.probe.metrics.at("auc") << ',' << r.probe.metrics.at("fr") << ','
          << r.final_epoch.mse << '\n';
      rows.push_back({{"arm", r.name},
                      {"ablation", r.ablation.to_string()},
                      {"seed", cfg.seed},
                      {"nme", score},
                      {"auc", r.probe.metrics.at("auc")},
                      {"fr", r.probe.metrics.at("fr")},
                      {"final_mse", r.final_epoch.mse},
                      {"checkpoint", r.checkpoint}});
    }
  }
  std::ostringstream table;
  table << "| arm | median NME (%) | seeds |\n|---|---|---|\n";
  json medians = json::object();
  for (const ArmSpec& arm : arms) {
    const double med = median(per_arm[arm.name]);
    medians[arm.name] = med;
    table << "| " << arm.name << " | " << std::fixed << std::setprecision(4) << med << " | "
          << per_arm[arm.name].size() << " |\n";
  }
  write_text(fs::path(a.out) / "ablation.csv", csv.str());
  write_text(fs::path(a.out) / "ablation.md", table.str());
  summary["config"] = config_json(base);
  summary["seed"] = base.seed;
  summary["outputs"] = {{"csv", (fs::path(a.out) / "ablation.csv").string()},
                        {"table", (fs::path(a.out) / "ablation.md").string()}};
  summary["metrics"] = {{"median_nme", medians}, {"rows", rows}};
}

void add_probe_flags(CLI::App* cmd, ProbeConfig& p) {
  cmd->add_option("--probe-steps", p.steps, "Probe optimizer steps")->capture_default_str();
  cmd->add_option("--probe-hidden", p.hidden, "Probe hidden width")->capture_default_str();
  cmd->add_option("--probe-lr", p.lr, "Probe head learning rate")->capture_default_str();
  cmd->add_option("--probe-batch", p.batch_size, "Probe batch size")->capture_default_str();
  cmd->add_option("--threshold", p.auc_threshold, "AUC / failure-rate threshold")->capture_default_str();
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"paco: masked image modeling with a patch codebook and belief-guided token selection"};
  app.require_subcommand(1);
  std::string kernels;
  app.add_option("--kernels", kernels, "Kernel backend: scalar, avx2, neon (default: best available)");

  PretrainArgs pre;
  auto* c_pre = app.add_subcommand("pretrain", "Pre-train encoder, decoder, codebook and predictor");
  pre.cfg.attach(c_pre);
  c_pre->add_option("--data", pre.data, "Dataset directory or manifest.jsonl")->required();
  c_pre->add_option("--out", pre.out, "Output directory")->required();
  c_pre->add_option("--ablation", pre.ablation, "selection=belief|random|single_token,n=<int>,incubation=on|off");
  c_pre->add_option("--resume", pre.resume, "Checkpoint to resume from");
  c_pre->add_option("--epochs", pre.epochs, "Total epochs; overrides the config");
  c_pre->add_option("--split", pre.split, "Manifest split to train on")->capture_default_str();
  c_pre->add_flag("--quiet", pre.quiet, "No per-epoch progress on stderr");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Train and score a probe on a pre-trained encoder");
  c_ev->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  c_ev->add_option("--task", ev.task, "parsing | alignment")->capture_default_str();
  c_ev->add_option("--mode", ev.mode, "frozen | finetune")->capture_default_str();
  c_ev->add_option("--data", ev.data, "Dataset directory or manifest.jsonl")->required();
  c_ev->add_option("--out", ev.out, "Output directory")->required();
  c_ev->add_option("--norm", ev.norm, "inter_ocular | diag | box")->capture_default_str();
  c_ev->add_option("--seed", ev.probe.seed, "Probe seed")->capture_default_str();
  c_ev->add_option("--backbone-lr", ev.probe.backbone_lr, "Encoder learning rate in finetune mode")->capture_default_str();
  add_probe_flags(c_ev, ev.probe);

  ReconstructArgs rc;
  auto* c_rc = app.add_subcommand("reconstruct", "Original / masked / reconstructed panel for one image");
  c_rc->add_option("--ckpt", rc.ckpt, "Checkpoint")->required();
  c_rc->add_option("--image", rc.image, "Input PNG")->required();
  c_rc->add_option("--out", rc.out, "Output directory")->required();
  c_rc->add_option("--seed", rc.seed, "Mask seed")->capture_default_str();
  c_rc->add_option("--mask-ratio", rc.mask_ratio, "Mask ratio; defaults to the checkpoint's");
  c_rc->add_option("--scale", rc.scale, "Integer upscaling of the written PNGs")->capture_default_str();

  CodebookArgs cb;
  auto* c_cb = app.add_subcommand("codebook-dump", "Write codebook tokens and per-position selection histograms");
  c_cb->add_option("--ckpt", cb.ckpt, "Checkpoint")->required();
  c_cb->add_option("--out", cb.out, "Output directory")->required();
  c_cb->add_option("--data", cb.data, "Images to histogram; synthetic when omitted");
  c_cb->add_option("--count", cb.count, "Synthetic image count when --data is omitted")->capture_default_str();
  c_cb->add_option("--seed", cb.seed, "Synthetic data seed")->capture_default_str();

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("data-synth", "Generate a labelled synthetic face dataset");
  c_sy->add_option("--count", sy.count, "Number of samples")->required();
  c_sy->add_option("--out", sy.out, "Output directory")->required();
  c_sy->add_option("--seed", sy.seed, "Generator seed")->capture_default_str();
  c_sy->add_option("--size", sy.size, "Image side in pixels")->capture_default_str();
  c_sy->add_option("--test-fraction", sy.test_fraction, "Share of samples in the test split")->capture_default_str();

  PrepArgs pp;
  auto* c_pp = app.add_subcommand("data-prep", "Align, crop and pad images listed in a manifest");
  c_pp->add_option("--manifest", pp.manifest, "Input manifest.jsonl (records need landmarks)")->required();
  c_pp->add_option("--template", pp.tmpl, "Template JSON; the standard five-point template when omitted");
  c_pp->add_option("--out", pp.out, "Output directory")->required();
  c_pp->add_option("--size", pp.size, "Final resize; 0 keeps the padded canvas")->capture_default_str();

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "Run an ablation grid and compare arms with a frozen alignment probe");
  ab.cfg.attach(c_ab, "--config-preset");
  c_ab->add_option("--preset", ab.preset, "Arm grid")->capture_default_str();
  c_ab->add_option("--out", ab.out, "Output directory")->required();
  c_ab->add_option("--data", ab.data, "Dataset; synthetic when omitted");
  c_ab->add_option("--seeds", ab.seeds, "Seeds per arm (consecutive from the config seed)")->capture_default_str();
  c_ab->add_option("--pretrain-count", ab.pretrain_count, "Synthetic pre-training images")->capture_default_str();
  c_ab->add_option("--probe-train", ab.probe_train, "Synthetic probe training images")->capture_default_str();
  c_ab->add_option("--probe-test", ab.probe_test, "Synthetic probe test images")->capture_default_str();
  add_probe_flags(c_ab, ab.probe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << json{{"error", e.what()}, {"command", "usage"}}.dump() << '\n';
    err << app.help();
    return kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const auto t0 = std::chrono::steady_clock::now();
  json summary;
  summary["command"] = name;
  try {
    if (!kernels.empty()) {
      const std::map<std::string, kernels::Backend> names = {
          {"scalar", kernels::Backend::kScalar}, {"avx2", kernels::Backend::kAvx2}, {"neon", kernels::Backend::kNeon}};
      const auto it = names.find(kernels);
      if (it == names.end()) throw UsageError("unknown kernel backend '" + kernels + "'");
      if (!kernels::backend_available(it->second)) throw UsageError("kernel backend '" + kernels + "' is unavailable");
      kernels::set_backend(it->second);
    }
    if (name == "pretrain") cmd_pretrain(pre, summary);
    else if (name == "evaluate") cmd_evaluate(ev, summary);
    else if (name == "reconstruct") cmd_reconstruct(rc, summary);
    else if (name == "codebook-dump") cmd_codebook_dump(cb, summary);
    else if (name == "data-synth") cmd_data_synth(sy, summary);
    else if (name == "data-prep") cmd_data_prep(pp, summary);
    else if (name == "ablate") cmd_ablate(ab, summary);
  } catch (const UsageError& e) {
    err << json{{"error", e.what()}, {"command", name}}.dump() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << json{{"error", e.what()}, {"command", name}}.dump() << '\n';
    return kExitRuntime;
  }
  summary["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  summary["kernels"] = kernels::backend_name(kernels::active_backend());
  out << summary.dump() << '\n';
  return kExitOk;
}

}  // namespace paco::cli
