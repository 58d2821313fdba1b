// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "helpers.hpp"
#include "paco/data.hpp"

namespace paco {
namespace {

namespace fs = std::filesystem;

TEST(Synthetic, SameSeedBitIdenticalAndIndependentOfCount) {
  const auto a = generate_synthetic(6, 5), b = generate_synthetic(6, 5), c = generate_synthetic(3, 5);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].seg, b[i].seg);
    EXPECT_EQ(a[i].landmarks, b[i].landmarks);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].image, c[i].image);
  EXPECT_NE(generate_synthetic(1, 6)[0].image, a[0].image);
  EXPECT_EQ(a[3].id, "000003");
}

TEST(Synthetic, ThousandSamplesSatisfyInvariants) {
  const auto s = generate_synthetic(1000, 11);
  for (const FaceSample& f : s) {
    ASSERT_NO_THROW(validate_sample(f)) << f.id;
    ASSERT_EQ(f.landmarks.rows, kNumLandmarks);
    for (double v : f.image.data) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(Synthetic, EyeCentresInUpperHalf) {
  const auto s = generate_synthetic(1000, 12);
  const double size = 64.0;
  std::size_t escapes = 0;
  double mean_y = 0.0;
  for (const FaceSample& f : s)
    for (std::size_t l : {kLeftEyeCenter, kRightEyeCenter}) {
      const double y = f.landmarks(l, 1);
      mean_y += y;
      escapes += y >= size / 2.0;
    }
  mean_y /= 2000.0;
  EXPECT_LT(mean_y, size / 2.0);
  EXPECT_LE(static_cast<double>(escapes) / 2000.0, 0.05);
  // Left eye centre lies left of the right one in every sample.
  for (const FaceSample& f : s) EXPECT_LT(f.landmarks(kLeftEyeCenter, 0), f.landmarks(kRightEyeCenter, 0));
}

TEST(Synthetic, LandmarksLieInOrNearTheirRegions) {
  const auto s = generate_synthetic(200, 13);
  // Landmark index -> segmentation class whose region it must touch within 2 px.
  const std::vector<std::pair<std::size_t, std::uint8_t>> owner{
      {0, kLeftEye}, {1, kLeftEye}, {2, kRightEye}, {3, kRightEye}, {4, kLeftEye},
      {5, kRightEye}, {6, kNose}, {7, kMouth}, {8, kMouth}};
  for (const FaceSample& f : s) {
    const std::size_t n = f.image.width;
    for (const auto& [l, cls] : owner) {
      const double x = f.landmarks(l, 0), y = f.landmarks(l, 1);
      bool near = false;
      for (std::size_t py = 0; py < n && !near; ++py)
        for (std::size_t px = 0; px < n && !near; ++px)
          if (f.seg[py * n + px] == cls) near = std::hypot(px + 0.5 - x, py + 0.5 - y) <= 2.0 + std::sqrt(0.5);
      EXPECT_TRUE(near) << f.id << " landmark " << l;
    }
  }
}

TEST(Synthetic, ValidateRejectsBrokenSamples) {
  FaceSample f = generate_synthetic(1, 1)[0];
  FaceSample out_of_bounds = f;
  out_of_bounds.landmarks(0, 0) = -1.0;
  EXPECT_THROW(validate_sample(out_of_bounds), DataError);
  FaceSample no_nose = f;
  std::replace(no_nose.seg.begin(), no_nose.seg.end(), std::uint8_t{kNose}, std::uint8_t{kSkin});
  EXPECT_THROW(validate_sample(no_nose), DataError);
  EXPECT_NO_THROW(validate_sample(no_nose, false));
  FaceSample bad_id = f;
  bad_id.seg[0] = 9;
  EXPECT_THROW(validate_sample(bad_id), DataError);
}

// ---------------------------------------------------------------------------

TEST(Similarity, RecoversKnownTransformAndRejectsCollinear) {
  Rng rng(1);
  const Similarity truth{1.3 * std::cos(0.4), 1.3 * std::sin(0.4), 5.0, -2.0};
  Matrix src(5, 2), dst(5, 2);
  for (std::size_t i = 0; i < 5; ++i) {
    src(i, 0) = rng.uniform(0, 50);
    src(i, 1) = rng.uniform(0, 50);
    const auto p = truth.apply(src(i, 0), src(i, 1));
    dst(i, 0) = p[0];
    dst(i, 1) = p[1];
  }
  const Similarity est = estimate_similarity(src, dst);
  EXPECT_NEAR(est.a, truth.a, 1e-10);
  EXPECT_NEAR(est.b, truth.b, 1e-10);
  EXPECT_NEAR(est.tx, truth.tx, 1e-9);
  EXPECT_NEAR(est.ty, truth.ty, 1e-9);
  const Similarity inv = est.inverse();
  const auto back = inv.apply(dst(2, 0), dst(2, 1));
  EXPECT_NEAR(back[0], src(2, 0), 1e-9);
  EXPECT_NEAR(est.scale(), 1.3, 1e-10);

  Matrix line(5, 2);
  for (std::size_t i = 0; i < 5; ++i) line(i, 0) = line(i, 1) = static_cast<double>(i);
  EXPECT_THROW(estimate_similarity(line, dst), DataError);
}

TEST(Resample, BilinearCentresAndFill) {
  ImageTensor img(2, 2, 1);
  img.data = {0.0, 1.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(sample_bilinear(img, 0.5, 0.5, 0, -1), 0.0);
  EXPECT_DOUBLE_EQ(sample_bilinear(img, 1.0, 1.0, 0, -1), 1.5);
  EXPECT_DOUBLE_EQ(sample_bilinear(img, 1.5, 0.5, 0, -1), 1.0);
  EXPECT_DOUBLE_EQ(sample_bilinear(img, -3.0, 0.5, 0, -1), -1.0);
  const ImageTensor same = resize_bilinear(img, 2, 2);
  EXPECT_EQ(same, img);
  const ImageTensor big = resize_bilinear(img, 4, 4);
  EXPECT_EQ(big.height, 4u);
  EXPECT_DOUBLE_EQ(big.at(0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(big.at(3, 3, 0), 3.0);
}

Matrix template_points(const AlignTemplate& t) {
  Matrix m(5, 2);
  for (std::size_t i = 0; i < 5; ++i) m(i, 0) = t.points[i][0], m(i, 1) = t.points[i][1];
  return m;
}

TEST(Align, TemplateLandmarksGiveIdentityPlusPad) {
  Rng rng(2);
  const AlignTemplate t = AlignTemplate::standard();
  EXPECT_NO_THROW(t.validate());
  const ImageTensor img = testing::random_image(200, 200, 3, rng);
  const ImageTensor out = align_crop_pad(img, template_points(t), t);
  ASSERT_EQ(out.height, 256u);
  ASSERT_EQ(out.width, 256u);
  double worst = 0.0;
  for (std::size_t y = 0; y < 256; ++y)
    for (std::size_t x = 0; x < 256; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const bool inside = y >= 28 && y < 228 && x >= 28 && x < 228;
        const double expect = inside ? img.at(y - 28, x - 28, c) : 0.5;
        worst = std::max(worst, std::abs(out.at(y, x, c) - expect));
      }
  EXPECT_LT(worst, 1e-9);
  const Similarity s = alignment_transform(template_points(t), t);
  EXPECT_NEAR(s.a, 1.0, 1e-12);
  EXPECT_NEAR(s.tx, 28.0, 1e-9);
  EXPECT_EQ(align_crop_pad(img, template_points(t), t, 224).height, 224u);
}

TEST(Align, RotatedInputAlignsToSameOutput) {
  SynthOptions so;
  so.image_size = 128;
  so.max_rotation_deg = 0.0;
  so.noise = 0.0;
  Rng rng(3);
  const FaceSample f = generate_face(so, rng);
  const AlignTemplate t = AlignTemplate::standard();
  const Matrix lm5 = five_point_subset(f.landmarks);
  const ImageTensor base = align_crop_pad(f.image, lm5, t, 64);

  // Rotate the image by 30 degrees about its centre onto a larger canvas.
  const double th = 30.0 * std::numbers::pi / 180.0, c = 64.0;
  const std::size_t big = 192;
  const double off = (big - 128) / 2.0;
  const Similarity fwd{std::cos(th), std::sin(th), 0, 0};
  const auto rc = fwd.apply(c, c);
  const Similarity in_to_out{fwd.a, fwd.b, c + off - rc[0], c + off - rc[1]};
  const ImageTensor rotated = warp(f.image, in_to_out.inverse(), big, big, 0.5);
  Matrix rlm(5, 2);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto p = in_to_out.apply(lm5(i, 0), lm5(i, 1));
    rlm(i, 0) = p[0], rlm(i, 1) = p[1];
  }
  const ImageTensor aligned = align_crop_pad(rotated, rlm, t, 64);
  double diff = 0.0;
  for (std::size_t i = 0; i < base.data.size(); ++i) diff += std::abs(base.data[i] - aligned.data[i]);
  EXPECT_LT(diff / static_cast<double>(base.data.size()), 0.02);
}

TEST(Align, RejectsDegenerateLandmarksAndBadTemplates) {
  const AlignTemplate t = AlignTemplate::standard();
  Matrix same(5, 2, 10.0);
  EXPECT_THROW(align_crop_pad(ImageTensor(10, 10, 3), same, t), DataError);
  AlignTemplate bad = t;
  bad.points[0] = {250.0, 10.0};
  EXPECT_THROW(bad.validate(), DataError);
  AlignTemplate small = t;
  small.canvas = 100;
  EXPECT_THROW(small.validate(), DataError);
}

TEST(Align, TemplateFileOverridesAndKeepsDefaults) {
  testing::TempDir dir("tmpl");
  std::ofstream(dir.str("t.json")) << R"({"background": 0.25, "canvas": 240})";
  const AlignTemplate t = AlignTemplate::load(dir.str("t.json"));
  EXPECT_EQ(t.background, 0.25);
  EXPECT_EQ(t.canvas, 240u);
  EXPECT_EQ(t.crop, 200u);
  EXPECT_EQ(t.points, AlignTemplate::standard().points);
  std::ofstream(dir.str("bad.json")) << R"({"points": [[1, 2]]})";
  EXPECT_THROW(AlignTemplate::load(dir.str("bad.json")), DataError);
}

// ---------------------------------------------------------------------------

TEST(Storage, PngRoundTrips) {
  testing::TempDir dir("png");
  const FaceSample f = generate_synthetic(1, 3)[0];
  write_png(dir.str("a.png"), f.image);
  EXPECT_EQ(read_png(dir.str("a.png")), f.image);  // quantized generator -> lossless
  write_label_png(dir.str("m.png"), f.seg, 64, 64);
  std::size_t h = 0, w = 0;
  EXPECT_EQ(read_label_png(dir.str("m.png"), h, w), f.seg);
  EXPECT_EQ(h, 64u);
  ImageTensor gray(3, 2, 1);
  gray.data = {0, 1, 0.2, 0.4, 2.0, -1.0};
  write_png(dir.str("g.png"), gray);
  const ImageTensor back = read_png(dir.str("g.png"));
  EXPECT_EQ(back.channels, 3u);
  EXPECT_EQ(back.at(2, 0, 1), 1.0);  // clamped
  EXPECT_EQ(back.at(2, 1, 2), 0.0);
  EXPECT_THROW(read_png(dir.str("none.png")), DataError);
}

TEST(Storage, LandmarkSidecarRoundTrip) {
  testing::TempDir dir("lm");
  const FaceSample f = generate_synthetic(1, 4)[0];
  write_landmarks_json(dir.str("l.json"), f.landmarks, std::array<double, 4>{1, 2, 30, 40});
  std::optional<std::array<double, 4>> box;
  EXPECT_EQ(read_landmarks_json(dir.str("l.json"), &box), f.landmarks);
  ASSERT_TRUE(box.has_value());
  EXPECT_EQ((*box)[3], 40.0);
}

TEST(Manifest, RoundTripSplitsAndValidation) {
  testing::TempDir dir("manifest");
  DatasetManifest m;
  m.records = {{"a", "images/a.png", "lm/a.json", "", "train"},
               {"b", "images/b.png", "", "masks/b.png", "test"},
               {"c", "/abs/c.png", "", "", "train"}};
  m.write(dir.str("manifest.jsonl"));
  const DatasetManifest r = DatasetManifest::read(dir.str("manifest.jsonl"));
  EXPECT_EQ(r.records, m.records);
  EXPECT_EQ(r.split_indices("train"), (std::vector<std::size_t>{0, 2}));
  EXPECT_TRUE(r.split_indices("val").empty());
  EXPECT_EQ(r.resolve("images/a.png"), (dir.path() / "images/a.png").string());
  EXPECT_EQ(r.resolve("/abs/c.png"), "/abs/c.png");

  DatasetManifest dup = m;
  dup.records.push_back({"a", "images/z.png", "", "", "train"});
  EXPECT_THROW(dup.validate(), DataError);
  DatasetManifest cross = m;
  cross.records.push_back({"d", "images/a.png", "", "", "test"});
  EXPECT_THROW(cross.validate(), DataError);

  std::ofstream(dir.str("bad.jsonl")) << R"({"id":"x","image":"x.png","split":"train"})" << "\n{broken\n";
  try {
    DatasetManifest::read(dir.str("bad.jsonl"));
    FAIL() << "malformed manifest accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos) << e.what();
  }
}

TEST(Reader, SyntheticTreeReloadsWithInvariants) {
  testing::TempDir dir("reader");
  SynthOptions so;
  so.image_size = 32;
  const SynthWriteResult w = write_synthetic_dataset(dir.str(), 64, 7, so, 0.0);
  EXPECT_EQ(w.train, 64u);
  EXPECT_EQ(w.test, 0u);
  const DatasetManifest m = DatasetManifest::read(w.manifest_path);
  DatasetReader reader(m, "train");
  ASSERT_EQ(reader.size(), 64u);
  const auto originals = generate_synthetic(64, 7, so);
  std::size_t count = 0;
  while (auto s = reader.next()) {
    EXPECT_NO_THROW(validate_sample(*s));
    EXPECT_EQ(s->image, originals[count].image);
    EXPECT_EQ(s->seg, originals[count].seg);
    ++count;
  }
  EXPECT_EQ(count, 64u);
  DatasetReader empty(m, "test");
  EXPECT_EQ(empty.size(), 0u);
  EXPECT_FALSE(empty.next().has_value());
}

TEST(Reader, ShuffledOrderIsSeededPermutation) {
  testing::TempDir dir("shuffle");
  SynthOptions so;
  so.image_size = 16;
  const auto w = write_synthetic_dataset(dir.str(), 20, 8, so, 0.25);
  EXPECT_EQ(w.test, 5u);
  const DatasetManifest m = DatasetManifest::read(w.manifest_path);
  DatasetReader plain(m, "train"), a(m, "train", 3), b(m, "train", 3), c(m, "train", 4);
  std::multiset<std::string> ids_plain, ids_shuffled;
  std::vector<std::size_t> order_a, order_b, order_c;
  for (std::size_t i = 0; i < plain.size(); ++i) {
    ids_plain.insert(plain.load(i).id);
    ids_shuffled.insert(a.load(i).id);
    order_a.push_back(a.record_index(i));
    order_b.push_back(b.record_index(i));
    order_c.push_back(c.record_index(i));
  }
  EXPECT_EQ(ids_plain, ids_shuffled);
  EXPECT_EQ(order_a, order_b);
  EXPECT_NE(order_a, order_c);
}

TEST(Reader, MissingFileErrorNamesRecord) {
  testing::TempDir dir("missing");
  SynthOptions so;
  so.image_size = 16;
  const auto w = write_synthetic_dataset(dir.str(), 3, 9, so, 0.0);
  fs::remove(dir.path() / "images" / "000001.png");
  DatasetReader r(DatasetManifest::read(w.manifest_path), "train");
  EXPECT_NO_THROW(r.load(0));
  try {
    r.load(1);
    FAIL() << "missing image accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos) << e.what();
  }
}

TEST(Reader, LoadSplitResizesLabelsAndLandmarks) {
  const FaceSample f = generate_synthetic(1, 10)[0];
  const FaceSample r = resize_sample(f, 32);
  EXPECT_EQ(r.image.height, 32u);
  EXPECT_EQ(r.seg.size(), 32u * 32u);
  EXPECT_NEAR(r.landmarks(6, 0), f.landmarks(6, 0) / 2.0, 1e-12);
  std::set<std::uint8_t> classes(r.seg.begin(), r.seg.end());
  EXPECT_TRUE(std::all_of(classes.begin(), classes.end(), [](std::uint8_t c) { return c < kNumSegClasses; }));
}

TEST(Prepare, AlignedTreeHasCanvasImagesAndMappedLandmarks) {
  testing::TempDir dir("prep");
  SynthOptions so;
  so.image_size = 64;
  const auto w = write_synthetic_dataset(dir.str("raw"), 4, 11, so, 0.25);
  const DatasetManifest in = DatasetManifest::read(w.manifest_path);
  const std::string out = prepare_dataset(in, AlignTemplate::standard(), dir.str("aligned"), 0);
  const DatasetManifest m = DatasetManifest::read(out);
  ASSERT_EQ(m.records.size(), 4u);
  EXPECT_EQ(m.split_indices("test").size(), 1u);
  const FaceSample s = DatasetReader(m, "train").load(0);
  EXPECT_EQ(s.image.height, 256u);
  // Eye centres land on the template's eye points (within least-squares slack).
  const AlignTemplate t = AlignTemplate::standard();
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(s.landmarks(kLeftEyeCenter + k, 0), t.points[k][0] + 28.0, 6.0);
    EXPECT_NEAR(s.landmarks(kLeftEyeCenter + k, 1), t.points[k][1] + 28.0, 6.0);
  }
  EXPECT_TRUE(m.records[0].seg.empty());
}

}  // namespace
}  // namespace paco
