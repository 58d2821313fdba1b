// SPDX-License-Identifier: Apache-2.0

#include <stdexcept>

#include "paco/eval.hpp"

namespace paco {

std::vector<ArmSpec> ablation_preset(const std::string& name) {
  if (name != "table7-mini") throw std::invalid_argument("unknown ablation preset '" + name + "'");
  const auto arm = [](const char* label, const char* spec) { return ArmSpec{label, AblationSpec::parse(spec)}; };
  return {
      arm("1xK single", "selection=single_token,n=1"),
      arm("3xK random", "selection=random,n=3"),
      arm("5xK random", "selection=random,n=5"),
      arm("3xK belief", "selection=belief,n=3"),
      arm("5xK belief", "selection=belief,n=5"),
      arm("3xK belief w/o incubation", "selection=belief,n=3,incubation=off"),
  };
}

ArmResult run_arm(const RunConfig& cfg, const ArmSpec& arm, const std::vector<ImageTensor>& pretrain,
                  const std::vector<FaceSample>& probe_train, const std::vector<FaceSample>& probe_test,
                  const ProbeConfig& probe, const std::string& out_dir) {
  PretrainOptions opt;
  opt.write_checkpoints = false;
  TrainState final_state;
  bool captured = false;
  opt.on_epoch = [&](const TrainState& s, const EpochRecord&) {
    if (s.epoch == s.config.epochs) {
      final_state = s;
      captured = true;
    }
  };
  opt.out_dir = out_dir;
  ArmResult r;
  r.name = arm.name;
  r.ablation = arm.ablation;
  r.seed = cfg.seed;
  const PretrainResult pr = run_pretraining(cfg, arm.ablation, pretrain, opt);
  if (!captured) throw std::logic_error("run_arm: pretraining produced no final state");
  r.checkpoint = pr.final_checkpoint;
  if (!pr.epochs.empty()) r.final_epoch = pr.epochs.back().mean;
  r.probe = run_probe(final_state.encoder, final_state.config, ProbeTask::kAlignment, ProbeMode::kFrozen,
                      probe_train, probe_test, probe);
  return r;
}

}  // namespace paco
