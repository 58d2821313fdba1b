// SPDX-License-Identifier: Apache-2.0

#include "paco/model.hpp"

#include <algorithm>
#include <cmath>

#include "paco/checkpoint.hpp"

namespace paco {

Encoder::Encoder(const RunConfig& cfg, Rng& rng)
    : patch_proj_("encoder.patch_proj", cfg.patch_dim(), cfg.embed_dim, rng),
      pos_embed_("encoder.pos_embed", nn::normal_init(cfg.num_patches(), cfg.embed_dim, 0.02, rng),
                 false),
      norm_("encoder.norm", cfg.embed_dim),
      taps_(cfg.tap_layers()) {
  blocks_.reserve(cfg.encoder_depth);
  for (std::size_t i = 0; i < cfg.encoder_depth; ++i)
    blocks_.emplace_back("encoder.blocks." + std::to_string(i), cfg.embed_dim, cfg.encoder_heads,
                         cfg.mlp_ratio * cfg.embed_dim, rng);
}

Var Encoder::embed(Tape& t, Var patches) {
  if (patches.cols() != patch_proj_.in_features())
    throw ShapeError("Encoder::embed: patch length " + std::to_string(patches.cols()) +
                     " != " + std::to_string(patch_proj_.in_features()));
  return patch_proj_.forward(t, patches);
}

EncodeResult Encoder::encode(Tape& t, Var substituted) {
  const Matrix& pe = pos_embed_.value;
  if (substituted.rows() != pe.rows || substituted.cols() != pe.cols)
    throw ShapeError("Encoder::encode: input " + shape_str(substituted.value()) + " expected " +
                     shape_str(pe));
  EncodeResult r;
  Var x = ag::add(substituted, t.param(pos_embed_));
  std::size_t next_tap = 0;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    x = blocks_[l].forward(t, x);
    if (next_tap < taps_.size() && taps_[next_tap] == l + 1) {
      r.pyramid.layers.push_back(l + 1);
      r.pyramid.features.push_back(x);
      ++next_tap;
    }
  }
  r.output = norm_.forward(t, x);
  return r;
}

nn::ParamList Encoder::parameters() {
  nn::ParamList out;
  patch_proj_.collect(out);
  out.push_back(&pos_embed_);
  for (auto& b : blocks_) b.collect(out);
  norm_.collect(out);
  return out;
}

PixelDecoder::PixelDecoder(const RunConfig& cfg, Rng& rng)
    : head_("decoder.head", cfg.embed_dim, cfg.patch_dim(), rng) {
  blocks_.reserve(cfg.decoder_depth);
  for (std::size_t i = 0; i < cfg.decoder_depth; ++i)
    blocks_.emplace_back("decoder.blocks." + std::to_string(i), cfg.embed_dim, cfg.encoder_heads,
                         cfg.mlp_ratio * cfg.embed_dim, rng);
}

Var PixelDecoder::decode(Tape& t, Var encoded) {
  if (encoded.cols() != head_.in_features())
    throw ShapeError("PixelDecoder::decode: width " + std::to_string(encoded.cols()) +
                     " != " + std::to_string(head_.in_features()));
  Var x = encoded;
  for (auto& b : blocks_) x = b.forward(t, x);
  return head_.forward(t, x);
}

nn::ParamList PixelDecoder::parameters() {
  nn::ParamList out;
  for (auto& b : blocks_) b.collect(out);
  head_.collect(out);
  return out;
}

PerceptualBackbone::PerceptualBackbone(std::size_t image_size, std::size_t channels,
                                       std::vector<ConvSpec> layers,
                                       std::vector<std::size_t> tap_indices, std::uint64_t seed)
    : size_(image_size), channels_(channels), specs_(std::move(layers)), taps_(std::move(tap_indices)) {
  for (std::size_t tap : taps_)
    if (tap < 1 || tap > specs_.size())
      throw std::invalid_argument("PerceptualBackbone: tap index out of range");
  Rng rng(seed);
  std::size_t cin = channels;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const ConvSpec& s = specs_[i];
    const std::size_t fan_in = s.kernel * s.kernel * cin;
    // He-normal so that activations keep their scale through the ReLUs.
    Matrix w = nn::normal_init(fan_in, s.out_channels, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
    Parameter pw("backbone." + std::to_string(i) + ".weight", std::move(w));
    Parameter pb("backbone." + std::to_string(i) + ".bias", Matrix(1, s.out_channels), false);
    pw.trainable = pb.trainable = false;
    weights_.push_back(std::move(pw));
    weights_.push_back(std::move(pb));
    cin = s.out_channels;
  }
}

PerceptualBackbone PerceptualBackbone::from_config(const RunConfig& cfg) {
  std::vector<ConvSpec> specs;
  for (std::size_t ch : cfg.perceptual_channels) specs.push_back(ConvSpec{ch, 3, 2, 1, true});
  return PerceptualBackbone(cfg.image_size, cfg.channels, std::move(specs),
                            cfg.perceptual_layer_indices, cfg.perceptual_seed);
}

std::vector<Var> PerceptualBackbone::features(Tape& t, Var image_pixels) const {
  if (image_pixels.rows() != size_ * size_ || image_pixels.cols() != channels_)
    throw ShapeError("PerceptualBackbone: expected " + std::to_string(size_) + "x" +
                     std::to_string(size_) + "x" + std::to_string(channels_) + " input, got " +
                     shape_str(image_pixels.value()));
  std::vector<Var> per_layer;
  Var x = image_pixels;
  std::size_t h = size_, w = size_, cin = channels_;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const ConvSpec& s = specs_[i];
    ag::Conv2dShape shape{h, w, cin, s.out_channels, s.kernel, s.stride, s.pad};
    x = ag::conv2d(x, t.constant(weights_[2 * i].value), t.constant(weights_[2 * i + 1].value), shape);
    if (s.relu) x = ag::relu(x);
    per_layer.push_back(x);
    h = shape.out_height();
    w = shape.out_width();
    cin = s.out_channels;
  }
  std::vector<Var> out;
  out.reserve(taps_.size());
  for (std::size_t tap : taps_) out.push_back(per_layer[tap - 1]);
  return out;
}

std::vector<Matrix> PerceptualBackbone::features(const ImageTensor& image) const {
  Tape t(false);
  std::vector<Matrix> out;
  for (const Var& v : features(t, t.constant(image.as_matrix()))) out.push_back(v.value());
  return out;
}

std::uint64_t PerceptualBackbone::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Parameter& p : weights_) h = paco::checksum(p.value.data, h);
  return h;
}

void PerceptualBackbone::load_weights(const std::string& path) {
  const TensorArchive archive = TensorArchive::read(path);
  for (Parameter& p : weights_) {
    const Matrix* m = archive.find(p.name);
    if (!m) throw std::runtime_error("backbone weights: missing tensor " + p.name);
    if (!m->same_shape(p.value))
      throw ShapeError("backbone weights: " + p.name + " has shape " + shape_str(*m) +
                       ", expected " + shape_str(p.value));
    p.value = *m;
  }
}

Var patches_to_pixels(Var patches, std::size_t grid_rows, std::size_t grid_cols,
                      std::size_t patch_size, std::size_t channels) {
  const auto idx = patch_to_image_index(grid_rows, grid_cols, patch_size, channels);
  return ag::gather(patches, idx, grid_rows * grid_cols * patch_size * patch_size, channels);
}

}  // namespace paco
