// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>

#include "paco/data.hpp"

namespace paco {

namespace {

// Face layout in a unit frame centred on the face, y pointing down. A unit
// equals the image side at scale 1.
constexpr double kFaceCenterY = 0.52;
constexpr double kSkinRx = 0.30, kSkinRy = 0.38;
constexpr double kHairCy = -0.08, kHairRx = 0.36, kHairRy = 0.46;
constexpr double kEyeX = 0.12, kEyeY = -0.08, kEyeRx = 0.065, kEyeRy = 0.03;
constexpr double kNoseApexY = -0.02, kNoseBaseY = 0.12, kNoseHalfBase = 0.05, kNoseTipY = 0.10;
constexpr double kMouthY = 0.22, kMouthRx = 0.10, kMouthRy = 0.035;
constexpr double kChinY = 0.36;

bool in_ellipse(double u, double v, double cu, double cv, double ru, double rv) {
  const double du = (u - cu) / ru, dv = (v - cv) / rv;
  return du * du + dv * dv <= 1.0;
}

bool in_nose(double u, double v) {
  if (v < kNoseApexY || v > kNoseBaseY) return false;
  const double half = kNoseHalfBase * (v - kNoseApexY) / (kNoseBaseY - kNoseApexY);
  return std::abs(u) <= half;
}

struct Rgb {
  double r, g, b;
};

Rgb scaled(Rgb c, double s) { return {c.r * s, c.g * s, c.b * s}; }

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

const char* seg_class_name(std::size_t c) {
  static constexpr const char* kNames[] = {"background", "skin",  "left_eye", "right_eye",
                                           "nose",       "mouth", "hair"};
  return c < kNumSegClasses ? kNames[c] : "unknown";
}

void validate_sample(const FaceSample& s, bool require_all_classes) {
  const auto fail = [&](const std::string& m) { throw DataError("sample " + s.id + ": " + m); };
  const std::size_t h = s.image.height, w = s.image.width;
  if (h == 0 || w == 0 || s.image.data.size() != h * w * s.image.channels) fail("malformed image");
  if (!s.seg.empty()) {
    if (s.seg.size() != h * w) fail("segmentation size does not match the image");
    std::array<std::size_t, kNumSegClasses> counts{};
    for (std::uint8_t c : s.seg) {
      if (c >= kNumSegClasses) fail("segmentation id " + std::to_string(c) + " outside the vocabulary");
      ++counts[c];
    }
    if (require_all_classes)
      for (std::size_t c = 1; c < kNumSegClasses; ++c)
        if (counts[c] == 0) fail(std::string("class ") + seg_class_name(c) + " has no pixels");
  }
  if (s.landmarks.rows > 0) {
    if (s.landmarks.cols != 2) fail("landmarks must be [L, 2]");
    for (std::size_t l = 0; l < s.landmarks.rows; ++l) {
      const double x = s.landmarks(l, 0), y = s.landmarks(l, 1);
      if (!(x >= 0.0 && x < static_cast<double>(w) && y >= 0.0 && y < static_cast<double>(h)))
        fail("landmark " + std::to_string(l) + " outside the image");
    }
  }
}

FaceSample generate_face(const SynthOptions& opt, Rng& rng) {
  const std::size_t n = opt.image_size;
  if (n < 8) throw std::invalid_argument("generate_face: image_size must be at least 8");
  const double side = static_cast<double>(n);

  // Draw order is part of the determinism contract.
  const double angle = rng.uniform(-opt.max_rotation_deg, opt.max_rotation_deg) * std::numbers::pi / 180.0;
  const double scale = rng.uniform(opt.scale_min, opt.scale_max);
  const double cx = 0.5 + rng.uniform(-opt.center_jitter, opt.center_jitter);
  const double cy = kFaceCenterY + rng.uniform(-opt.center_jitter, opt.center_jitter);
  const double tone = rng.uniform(0.55, 0.9);
  const Rgb skin{tone, tone * rng.uniform(0.7, 0.85), tone * rng.uniform(0.55, 0.75)};
  const double hair_v = rng.uniform(0.05, 0.35);
  const Rgb hair{hair_v * rng.uniform(0.8, 1.2), hair_v * rng.uniform(0.6, 0.9), hair_v * rng.uniform(0.4, 0.7)};
  const Rgb eye{rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.25), rng.uniform(0.1, 0.35)};
  const Rgb mouth{rng.uniform(0.6, 0.85), rng.uniform(0.15, 0.3), rng.uniform(0.2, 0.35)};
  const Rgb bg0{rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9)};
  const Rgb bg1{rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9)};
  const double nose_shade = rng.uniform(0.55, 0.68);

  const double ca = std::cos(angle), sa = std::sin(angle);
  // face frame (u, v) -> pixel coordinates
  const auto to_pixel = [&](double u, double v) -> std::array<double, 2> {
    return {(cx + scale * (ca * u - sa * v)) * side, (cy + scale * (sa * u + ca * v)) * side};
  };

  FaceSample s;
  s.image = ImageTensor(n, n, 3);
  s.seg.assign(n * n, kBackground);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double px = (static_cast<double>(x) + 0.5) / side - cx;
      const double py = (static_cast<double>(y) + 0.5) / side - cy;
      const double u = (ca * px + sa * py) / scale;
      const double v = (-sa * px + ca * py) / scale;

      const double t = (static_cast<double>(y) + 0.5) / side;
      Rgb col{bg0.r + (bg1.r - bg0.r) * t, bg0.g + (bg1.g - bg0.g) * t, bg0.b + (bg1.b - bg0.b) * t};
      std::uint8_t cls = kBackground;
      if (in_ellipse(u, v, 0.0, kHairCy, kHairRx, kHairRy) && v < 0.05) {
        cls = kHair;
        col = hair;
      }
      if (in_ellipse(u, v, 0.0, 0.0, kSkinRx, kSkinRy)) {
        cls = kSkin;
        const double r2 = (u / kSkinRx) * (u / kSkinRx) + (v / kSkinRy) * (v / kSkinRy);
        col = scaled(skin, 1.0 - 0.18 * r2);
        if (in_nose(u, v)) {
          cls = kNose;
          col = scaled(skin, nose_shade);
        } else if (in_ellipse(u, v, -kEyeX, kEyeY, kEyeRx, kEyeRy)) {
          cls = kLeftEye;
          col = eye;
        } else if (in_ellipse(u, v, kEyeX, kEyeY, kEyeRx, kEyeRy)) {
          cls = kRightEye;
          col = eye;
        } else if (in_ellipse(u, v, 0.0, kMouthY, kMouthRx, kMouthRy)) {
          cls = kMouth;
          col = mouth;
        }
      }
      s.seg[y * n + x] = cls;
      const double vals[3] = {col.r, col.g, col.b};
      for (std::size_t c = 0; c < 3; ++c) {
        double val = clamp01(vals[c] + opt.noise * rng.uniform(-1.0, 1.0));
        if (opt.quantize) val = std::round(val * 255.0) / 255.0;
        s.image.at(y, x, c) = val;
      }
    }
  }

  // Corner landmarks sit just inside the eye/mouth boundary so they label
  // their own region.
  const double inset = 0.9;
  const std::array<std::array<double, 2>, kNumLandmarks> local{{
      {-kEyeX - inset * kEyeRx, kEyeY},
      {-kEyeX + inset * kEyeRx, kEyeY},
      {kEyeX - inset * kEyeRx, kEyeY},
      {kEyeX + inset * kEyeRx, kEyeY},
      {-kEyeX, kEyeY},
      {kEyeX, kEyeY},
      {0.0, kNoseTipY},
      {-inset * kMouthRx, kMouthY},
      {inset * kMouthRx, kMouthY},
      {0.0, kChinY},
  }};
  s.landmarks = Matrix(kNumLandmarks, 2);
  for (std::size_t l = 0; l < kNumLandmarks; ++l) {
    const auto p = to_pixel(local[l][0], local[l][1]);
    s.landmarks(l, 0) = std::clamp(p[0], 0.0, std::nextafter(side, 0.0));
    s.landmarks(l, 1) = std::clamp(p[1], 0.0, std::nextafter(side, 0.0));
  }
  // Axis-aligned box of the rotated skin ellipse.
  const double hx = scale * side * std::hypot(kSkinRx * ca, kSkinRy * sa);
  const double hy = scale * side * std::hypot(kSkinRx * sa, kSkinRy * ca);
  s.face_box = std::array<double, 4>{cx * side - hx, cy * side - hy, cx * side + hx, cy * side + hy};
  return s;
}

std::vector<FaceSample> generate_synthetic(std::size_t count, std::uint64_t seed, const SynthOptions& opt) {
  if (count == 0) throw std::invalid_argument("generate_synthetic: count must be positive");
  std::vector<FaceSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng::derive(seed, 0x46414345ULL, i);
    FaceSample s = generate_face(opt, rng);
    char id[32];
    std::snprintf(id, sizeof id, "%06zu", i);
    s.id = id;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace paco
