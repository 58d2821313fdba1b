// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "paco/data.hpp"

namespace paco {

Similarity Similarity::inverse() const {
  const double d = a * a + b * b;
  if (d == 0.0) throw DataError("similarity transform is singular");
  Similarity inv;
  inv.a = a / d;
  inv.b = -b / d;
  inv.tx = -(inv.a * tx - inv.b * ty);
  inv.ty = -(inv.b * tx + inv.a * ty);
  return inv;
}

double Similarity::scale() const { return std::hypot(a, b); }

Similarity estimate_similarity(const Matrix& src, const Matrix& dst, double collinear_tol) {
  if (src.cols != 2 || dst.cols != 2 || src.rows != dst.rows)
    throw ShapeError("estimate_similarity: expects two [N, 2] point sets");
  const std::size_t n = src.rows;
  if (n < 2) throw DataError("estimate_similarity: need at least two points");
  double msx = 0, msy = 0, mdx = 0, mdy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    msx += src(i, 0), msy += src(i, 1), mdx += dst(i, 0), mdy += dst(i, 1);
  }
  msx /= n, msy /= n, mdx /= n, mdy /= n;
  double sxx = 0, syy = 0, sxy = 0, num_a = 0, num_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = src(i, 0) - msx, y = src(i, 1) - msy;
    const double u = dst(i, 0) - mdx, v = dst(i, 1) - mdy;
    sxx += x * x, syy += y * y, sxy += x * y;
    num_a += x * u + y * v;
    num_b += x * v - y * u;
  }
  const double var = sxx + syy;
  // Eigenvalues of the 2x2 scatter; a small ratio means the points lie on a line.
  const double tr = sxx + syy, det = sxx * syy - sxy * sxy;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  const double lmax = tr / 2.0 + disc, lmin = tr / 2.0 - disc;
  if (var <= 0.0 || lmax <= 0.0 || lmin / lmax < collinear_tol)
    throw DataError("landmarks are degenerate (collinear or coincident)");
  Similarity t;
  t.a = num_a / var;
  t.b = num_b / var;
  t.tx = mdx - (t.a * msx - t.b * msy);
  t.ty = mdy - (t.b * msx + t.a * msy);
  return t;
}

double sample_bilinear(const ImageTensor& img, double x, double y, std::size_t c, double fill) {
  const double fx = x - 0.5, fy = y - 0.5;
  const double x0f = std::floor(fx), y0f = std::floor(fy);
  const double wx = fx - x0f, wy = fy - y0f;
  const long x0 = static_cast<long>(x0f), y0 = static_cast<long>(y0f);
  const long w = static_cast<long>(img.width), h = static_cast<long>(img.height);
  if (x0 < -1 || y0 < -1 || x0 >= w || y0 >= h) return fill;
  const auto px = [&](long yy, long xx) {
    if (xx < 0 || yy < 0 || xx >= w || yy >= h) return fill;
    return img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), c);
  };
  // Exact pixel centres reproduce the pixel without touching neighbours.
  if (wx == 0.0 && wy == 0.0) return px(y0, x0);
  return (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x0 + 1)) +
         wy * ((1 - wx) * px(y0 + 1, x0) + wx * px(y0 + 1, x0 + 1));
}

ImageTensor resize_bilinear(const ImageTensor& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == img.height && out_w == img.width) return img;
  if (img.height == 0 || img.width == 0 || out_h == 0 || out_w == 0)
    throw ShapeError("resize_bilinear: empty image");
  ImageTensor out(out_h, out_w, img.channels);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  const double max_x = static_cast<double>(img.width) - 0.5, max_y = static_cast<double>(img.height) - 0.5;
  for (std::size_t y = 0; y < out_h; ++y) {
    const double iy = std::clamp((y + 0.5) * sy, 0.5, max_y);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double ix = std::clamp((x + 0.5) * sx, 0.5, max_x);
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = sample_bilinear(img, ix, iy, c, 0.0);
    }
  }
  return out;
}

ImageTensor warp(const ImageTensor& img, const Similarity& out_to_in, std::size_t out_h,
                 std::size_t out_w, double fill) {
  ImageTensor out(out_h, out_w, img.channels);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto p = out_to_in.apply(x + 0.5, y + 0.5);
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = sample_bilinear(img, p[0], p[1], c, fill);
    }
  return out;
}

AlignTemplate AlignTemplate::standard() {
  // Five-point reference for a 112 x 112 face crop, rescaled to 200 x 200.
  static constexpr double kRef[5][2] = {{38.2946, 51.6963},
                                        {73.5318, 51.5014},
                                        {56.0252, 71.7366},
                                        {41.5493, 92.3655},
                                        {70.7299, 92.2041}};
  AlignTemplate t;
  const double s = 200.0 / 112.0;
  for (std::size_t i = 0; i < 5; ++i) t.points[i] = {kRef[i][0] * s, kRef[i][1] * s};
  return t;
}

void AlignTemplate::validate() const {
  if (crop == 0 || canvas < crop) throw DataError("align template: canvas must be at least the crop size");
  for (const auto& p : points)
    if (!(p[0] >= 0.0 && p[0] <= crop && p[1] >= 0.0 && p[1] <= crop))
      throw DataError("align template: points must lie inside the crop frame");
}

AlignTemplate AlignTemplate::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open template " + path);
  AlignTemplate t = standard();
  try {
    const auto j = nlohmann::json::parse(f);
    if (j.contains("points")) {
      const auto& pts = j.at("points");
      if (pts.size() != 5) throw DataError("align template: exactly 5 points required");
      for (std::size_t i = 0; i < 5; ++i) t.points[i] = {pts[i].at(0).get<double>(), pts[i].at(1).get<double>()};
    }
    if (j.contains("crop")) t.crop = j.at("crop").get<std::size_t>();
    if (j.contains("canvas")) t.canvas = j.at("canvas").get<std::size_t>();
    if (j.contains("background")) t.background = j.at("background").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("template " + path + ": " + e.what());
  }
  t.validate();
  return t;
}

Matrix five_point_subset(const Matrix& landmarks) {
  if (landmarks.rows == 5 && landmarks.cols == 2) return landmarks;
  if (landmarks.rows != kNumLandmarks || landmarks.cols != 2)
    throw ShapeError("five_point_subset: expects [5, 2] or [10, 2] landmarks");
  static constexpr std::size_t kPick[5] = {kLeftEyeCenter, kRightEyeCenter, 6, 7, 8};
  Matrix out(5, 2);
  for (std::size_t i = 0; i < 5; ++i) out(i, 0) = landmarks(kPick[i], 0), out(i, 1) = landmarks(kPick[i], 1);
  return out;
}

Similarity alignment_transform(const Matrix& landmarks5, const AlignTemplate& tmpl) {
  tmpl.validate();
  const Matrix src = five_point_subset(landmarks5);
  Matrix dst(5, 2);
  const double off = static_cast<double>((tmpl.canvas - tmpl.crop) / 2);
  for (std::size_t i = 0; i < 5; ++i) dst(i, 0) = tmpl.points[i][0] + off, dst(i, 1) = tmpl.points[i][1] + off;
  return estimate_similarity(src, dst);
}

ImageTensor align_crop_pad(const ImageTensor& image, const Matrix& landmarks5, const AlignTemplate& tmpl,
                           std::size_t output_size) {
  tmpl.validate();
  const Similarity to_crop = estimate_similarity(five_point_subset(landmarks5), [&] {
    Matrix dst(5, 2);
    for (std::size_t i = 0; i < 5; ++i) dst(i, 0) = tmpl.points[i][0], dst(i, 1) = tmpl.points[i][1];
    return dst;
  }());
  const ImageTensor crop = warp(image, to_crop.inverse(), tmpl.crop, tmpl.crop, tmpl.background);
  ImageTensor canvas(tmpl.canvas, tmpl.canvas, image.channels, tmpl.background);
  const std::size_t off = (tmpl.canvas - tmpl.crop) / 2;
  for (std::size_t y = 0; y < tmpl.crop; ++y)
    for (std::size_t x = 0; x < tmpl.crop; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) canvas.at(y + off, x + off, c) = crop.at(y, x, c);
  if (output_size == 0 || output_size == tmpl.canvas) return canvas;
  return resize_bilinear(canvas, output_size, output_size);
}

}  // namespace paco
