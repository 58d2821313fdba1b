// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "paco/checkpoint.hpp"
#include "paco/model.hpp"

namespace paco {
namespace {

using testing::random_image;
using testing::random_matrix;

void zero_all(const nn::ParamList& ps) {
  for (Parameter* p : ps) p->value.fill(0.0);
}

TEST(Encoder, ZeroBlocksReduceToNormOfInputPlusPositions) {
  RunConfig cfg;
  cfg.image_size = 2;
  cfg.patch_size = 1;
  cfg.channels = 1;
  cfg.embed_dim = 2;
  cfg.encoder_heads = 1;
  cfg.encoder_depth = 1;
  cfg.validate();
  ASSERT_EQ(cfg.num_patches(), 4u);
  Rng rng(1);
  Encoder enc(cfg, rng);
  for (auto& b : enc.blocks()) {
    nn::ParamList ps;
    b.collect(ps);
    zero_all(ps);
  }
  Matrix x(4, 2, {0.3, -0.2, 1.0, 2.0, -0.5, 0.5, 0.0, 0.1});
  enc.pos_embed().value = Matrix(4, 2, {0.1, 0.1, -0.4, 0.2, 0.0, 0.3, 0.7, 0.0});
  Tape t(false);
  const EncodeResult r = enc.encode(t, t.constant(x));
  // With zero block weights each residual branch adds exactly zero, so the
  // output is LayerNorm(x + pos) with unit gain: for two features a, b this
  // is +-(a-b)/2 / sqrt(((a-b)/2)^2 + eps).
  for (std::size_t i = 0; i < 4; ++i) {
    const double a = x(i, 0) + enc.pos_embed().value(i, 0), b = x(i, 1) + enc.pos_embed().value(i, 1);
    const double half = (a - b) / 2.0;
    const double v = half / std::sqrt(half * half + 1e-6);
    EXPECT_NEAR(r.output.value()(i, 0), v, 1e-12);
    EXPECT_NEAR(r.output.value()(i, 1), -v, 1e-12);
    // The tap sits before the final norm.
    EXPECT_NEAR(r.pyramid.features[0].value()(i, 0), a, 1e-15);
  }
}

TEST(Encoder, DeterministicAndPyramidFollowsTaps) {
  RunConfig cfg = testing::micro_config();
  cfg.encoder_depth = 2;
  cfg.feature_tap_layers = {1, 2};
  cfg.validate();
  Rng rng(2);
  Encoder enc(cfg, rng);
  const Matrix x = random_matrix(cfg.num_patches(), cfg.embed_dim, rng);
  Tape t1(false), t2(false);
  const EncodeResult a = enc.encode(t1, t1.constant(x)), b = enc.encode(t2, t2.constant(x));
  EXPECT_EQ(a.output.value(), b.output.value());
  EXPECT_EQ(a.pyramid.layers, (std::vector<std::size_t>{1, 2}));
  ASSERT_EQ(a.pyramid.features.size(), 2u);
  for (const Var& f : a.pyramid.features) {
    EXPECT_EQ(f.rows(), cfg.num_patches());
    EXPECT_EQ(f.cols(), cfg.embed_dim);
  }
  EXPECT_THROW(enc.encode(t1, t1.constant(Matrix(3, cfg.embed_dim))), ShapeError);
}

TEST(Encoder, DefaultTapsAtDepthFour) {
  RunConfig cfg = RunConfig::preset("tiny");
  Rng rng(3);
  Encoder enc(cfg, rng);
  Tape t(false);
  const auto r = enc.encode(t, t.constant(Matrix(cfg.num_patches(), cfg.embed_dim)));
  EXPECT_EQ(r.pyramid.layers, (std::vector<std::size_t>{1, 2, 3, 4}));
}

TEST(Decoder, ZeroInputAndWeightsGiveZeroImage) {
  RunConfig cfg = testing::micro_config();
  Rng rng(4);
  PixelDecoder dec(cfg, rng);
  zero_all(dec.parameters());
  Tape t(false);
  const Var out = dec.decode(t, t.constant(Matrix(cfg.num_patches(), cfg.embed_dim)));
  PatchGrid g{out.value(), cfg.grid_side(), cfg.grid_side(), cfg.patch_size, cfg.channels};
  const ImageTensor img = unpatchify(g);
  EXPECT_EQ(img.height, cfg.image_size);
  EXPECT_EQ(img.width, cfg.image_size);
  EXPECT_EQ(img.channels, cfg.channels);
  for (double v : img.data) EXPECT_EQ(v, 0.0);
}

TEST(Decoder, DepthZeroIsOneMatmulPerPatch) {
  RunConfig cfg = testing::micro_config();
  cfg.embed_dim = 4;
  cfg.encoder_heads = 2;
  cfg.decoder_depth = 0;
  cfg.validate();
  Rng rng(5);
  PixelDecoder dec(cfg, rng);
  for (double& v : dec.head().bias.value.data) v = rng.normal();
  const Matrix x = random_matrix(cfg.num_patches(), 4, rng);
  Tape t(false);
  const Matrix out = dec.decode(t, t.constant(x)).value();
  const Matrix& w = dec.head().weight.value;
  ASSERT_EQ(out.cols, cfg.patch_dim());
  for (std::size_t k = 0; k < x.rows; ++k)
    for (std::size_t o = 0; o < out.cols; ++o) {
      double s = dec.head().bias.value(0, o);
      for (std::size_t d = 0; d < 4; ++d) s += x(k, d) * w(d, o);
      EXPECT_NEAR(out(k, o), s, 1e-13);
    }
}

TEST(Decoder, ShapeContractAndMismatch) {
  RunConfig cfg = RunConfig::preset("tiny");
  Rng rng(6);
  PixelDecoder dec(cfg, rng);
  Tape t(false);
  const Var out = dec.decode(t, t.constant(random_matrix(cfg.num_patches(), cfg.embed_dim, rng)));
  EXPECT_EQ(out.rows(), cfg.num_patches());
  EXPECT_EQ(out.cols(), cfg.patch_dim());
  EXPECT_THROW(dec.decode(t, t.constant(Matrix(4, cfg.embed_dim + 1))), ShapeError);
}

TEST(Pipeline, DecodeEncodeGradientsMatchFiniteDifferences) {
  RunConfig cfg;
  cfg.image_size = 4;
  cfg.patch_size = 2;
  cfg.channels = 1;
  cfg.embed_dim = 8;
  cfg.encoder_heads = 2;
  cfg.encoder_depth = 1;
  cfg.mlp_ratio = 2;
  cfg.validate();
  Rng rng(7);
  Encoder enc(cfg, rng);
  PixelDecoder dec(cfg, rng);
  Parameter input("substituted", random_matrix(cfg.num_patches(), cfg.embed_dim, rng));
  const Matrix target = random_matrix(cfg.num_patches(), cfg.patch_dim(), rng);
  nn::ParamList ps = enc.parameters();
  for (Parameter* p : dec.parameters()) ps.push_back(p);
  ps.push_back(&input);
  const double err = testing::param_gradient_error(ps, [&](Tape& t) {
    return ag::mse(dec.decode(t, enc.encode(t, t.param(input)).output), t.constant(target));
  });
  EXPECT_LT(err, 1e-4);
}

TEST(PatchesToPixels, MatchesUnpatchify) {
  Rng rng(8);
  const ImageTensor img = random_image(6, 6, 3, rng);
  const PatchGrid g = patchify(img, 3);
  Tape t(false);
  const Var px = patches_to_pixels(t.constant(g.patches), 2, 2, 3, 3);
  EXPECT_EQ(px.value(), img.as_matrix());
}

// ---------------------------------------------------------------------------

TEST(Perceptual, IdentityConvReturnsRawImage) {
  PerceptualBackbone bb(5, 3, {ConvSpec{3, 1, 1, 0, false}}, {1}, 0);
  auto& w = bb.weights();
  w[0].value = Matrix(3, 3);
  for (std::size_t c = 0; c < 3; ++c) w[0].value(c, c) = 1.0;
  w[1].value.fill(0.0);
  Rng rng(9);
  const ImageTensor img = random_image(5, 5, 3, rng);
  const auto f = bb.features(img);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0], img.as_matrix());
}

TEST(Perceptual, OneMapPerTapAndFrozenDeterminism) {
  const RunConfig cfg = RunConfig::preset("tiny");
  const PerceptualBackbone bb = PerceptualBackbone::from_config(cfg);
  EXPECT_EQ(bb.num_taps(), cfg.perceptual_layer_indices.size());
  for (const Parameter& p : bb.weights()) EXPECT_FALSE(p.trainable);
  Rng rng(10);
  const ImageTensor img = random_image(cfg.image_size, cfg.image_size, 3, rng);
  const auto before = bb.checksum();
  const auto a = bb.features(img), b = bb.features(img);
  EXPECT_EQ(a.size(), cfg.perceptual_layer_indices.size());
  EXPECT_EQ(a, b);
  EXPECT_EQ(bb.checksum(), before);
  EXPECT_EQ(a[0].rows, (cfg.image_size / 2) * (cfg.image_size / 2));
  EXPECT_THROW(bb.features(random_image(8, 8, 3, rng)), ShapeError);
}

TEST(Perceptual, SameSeedSameWeightsAndExternalLoad) {
  const RunConfig cfg = RunConfig::preset("micro");
  const PerceptualBackbone a = PerceptualBackbone::from_config(cfg), b = PerceptualBackbone::from_config(cfg);
  EXPECT_EQ(a.checksum(), b.checksum());

  testing::TempDir dir("backbone");
  TensorArchive ar;
  PerceptualBackbone c = PerceptualBackbone::from_config(cfg);
  for (const Parameter& p : c.weights()) ar.tensors[p.name] = Matrix(p.value.rows, p.value.cols, 0.25);
  ar.write(dir.str("w.bin"));
  c.load_weights(dir.str("w.bin"));
  EXPECT_NE(c.checksum(), a.checksum());
  for (const Parameter& p : c.weights()) EXPECT_EQ(p.value(0, 0), 0.25);

  ar.tensors.begin()->second = Matrix(1, 1);
  ar.write(dir.str("bad.bin"));
  EXPECT_THROW(c.load_weights(dir.str("bad.bin")), ShapeError);
}

}  // namespace
}  // namespace paco
