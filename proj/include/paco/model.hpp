// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "paco/config.hpp"
#include "paco/core.hpp"
#include "paco/nn.hpp"

namespace paco {

/// Encoder activations captured after each configured block, ascending.
struct FeaturePyramid {
  std::vector<std::size_t> layers;
  std::vector<Var> features;  // each [K, D]
};

struct EncodeResult {
  Var output;  // [K, D], after the final norm
  FeaturePyramid pyramid;
};

/// ViT encoder. Patch projection and positional embeddings are separate
/// steps so that codebook tokens can replace projected patches before the
/// positional embedding is added.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const RunConfig& cfg, Rng& rng);

  /// [K, P*P*C] -> [K, D]
  Var embed(Tape& t, Var patches);
  /// Adds positional embeddings, runs the blocks, applies the final norm.
  EncodeResult encode(Tape& t, Var substituted);

  nn::ParamList parameters();
  std::size_t dim() const { return patch_proj_.out_features(); }
  std::size_t depth() const { return blocks_.size(); }
  const std::vector<std::size_t>& tap_layers() const { return taps_; }

  nn::Linear& patch_proj() { return patch_proj_; }
  Parameter& pos_embed() { return pos_embed_; }
  std::vector<nn::TransformerBlock>& blocks() { return blocks_; }
  nn::LayerNorm& norm() { return norm_; }

 private:
  nn::Linear patch_proj_;
  Parameter pos_embed_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm norm_;
  std::vector<std::size_t> taps_;
};

/// decoder_depth transformer blocks followed by a per-patch linear map to pixels.
class PixelDecoder {
 public:
  PixelDecoder() = default;
  PixelDecoder(const RunConfig& cfg, Rng& rng);

  /// [K, D] -> [K, P*P*C]
  Var decode(Tape& t, Var encoded);

  nn::ParamList parameters();
  std::vector<nn::TransformerBlock>& blocks() { return blocks_; }
  nn::Linear& head() { return head_; }

 private:
  std::vector<nn::TransformerBlock> blocks_;
  nn::Linear head_;
};

struct ConvSpec {
  std::size_t out_channels = 8;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t pad = 1;
  bool relu = true;
};

/// Frozen convolutional feature extractor for the perceptual loss. Its
/// parameters are never marked trainable.
class PerceptualBackbone {
 public:
  PerceptualBackbone() = default;
  PerceptualBackbone(std::size_t image_size, std::size_t channels, std::vector<ConvSpec> layers,
                     std::vector<std::size_t> tap_indices, std::uint64_t seed);
  static PerceptualBackbone from_config(const RunConfig& cfg);

  /// One flattened feature map per tap index (1-based), in tap order.
  std::vector<Var> features(Tape& t, Var image_pixels) const;
  std::vector<Matrix> features(const ImageTensor& image) const;

  std::size_t num_taps() const { return taps_.size(); }
  std::size_t image_size() const { return size_; }
  std::size_t channels() const { return channels_; }
  const std::vector<ConvSpec>& layers() const { return specs_; }
  std::vector<Parameter>& weights() { return weights_; }
  const std::vector<Parameter>& weights() const { return weights_; }
  std::uint64_t checksum() const;

  /// Replaces the weights with tensors named backbone.<i>.weight / backbone.<i>.bias
  /// from a tensor archive (see checkpoint.hpp).
  void load_weights(const std::string& path);

 private:
  std::size_t size_ = 0;
  std::size_t channels_ = 0;
  std::vector<ConvSpec> specs_;
  std::vector<std::size_t> taps_;
  // weight/bias pairs: weights_[2*i], weights_[2*i+1]
  std::vector<Parameter> weights_;
};

/// Pixels [H*W, C] of a decoded patch matrix, as a differentiable gather.
Var patches_to_pixels(Var patches, std::size_t grid_rows, std::size_t grid_cols,
                      std::size_t patch_size, std::size_t channels);

}  // namespace paco
