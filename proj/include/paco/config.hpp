// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace paco {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable of a run. Serialized as flat `key = value` text; list values
/// are comma separated. See docs in README for the full key list.
struct RunConfig {
  // Geometry.
  std::size_t image_size = 64;
  std::size_t channels = 3;
  std::size_t patch_size = 8;
  std::size_t n_tokens = 3;

  // Encoder / decoder.
  std::size_t embed_dim = 64;
  std::size_t encoder_depth = 4;
  std::size_t encoder_heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t decoder_depth = 1;
  // Empty means "scale {2,4,8,12}/12 to encoder_depth".
  std::vector<std::size_t> feature_tap_layers;

  // Belief predictor; 0 means 4 * n_tokens * 8.
  std::size_t predictor_hidden = 0;

  // Perceptual backbone: conv channels per layer (3x3, stride 2 for each).
  std::vector<std::size_t> perceptual_channels{8, 16};
  // 1-based layers of the backbone that feed the perceptual loss.
  std::vector<std::size_t> perceptual_layer_indices{1, 2};
  std::uint64_t perceptual_seed = 7;

  // Masking and incubation.
  double mask_ratio = 0.75;
  double incubation_random_fraction = 0.75;
  bool incubation_ce_only = false;

  // Losses.
  double loss_weight_perceptual = 1.0;
  bool ce_mean = true;
  bool mse_patch_norm = false;

  // Optimization.
  double lr = 1.5e-4;
  double predictor_lr = 1e-3;
  double min_lr = 0.0;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  std::size_t warmup_epochs = 1;
  std::size_t epochs = 2;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;

  std::size_t grid_side() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid_side() * grid_side(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t predictor_hidden_width() const {
    return predictor_hidden ? predictor_hidden : 4 * n_tokens * 8;
  }
  /// feature_tap_layers, or the default scaling when unset.
  std::vector<std::size_t> tap_layers() const;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;

  /// Applies one `key=value` assignment.
  void set(const std::string& key, const std::string& value);
  std::string to_text() const;
  static RunConfig from_text(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  /// Named presets: "desk" (default), "tiny", "micro", "vit-b16".
  static RunConfig preset(const std::string& name);
};

/// ceil(f * depth) for f in {2,4,8,12}/12, deduplicated.
std::vector<std::size_t> default_tap_layers(std::size_t depth);

}  // namespace paco
