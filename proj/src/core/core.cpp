// SPDX-License-Identifier: Apache-2.0

#include "paco/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace paco {

std::vector<std::size_t> patch_to_image_index(std::size_t grid_rows, std::size_t grid_cols,
                                              std::size_t p, std::size_t c) {
  const std::size_t width = grid_cols * p;
  const std::size_t pdim = p * p * c;
  std::vector<std::size_t> idx(grid_rows * grid_cols * pdim);
  for (std::size_t y = 0; y < grid_rows * p; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t patch = (y / p) * grid_cols + (x / p);
      const std::size_t within = ((y % p) * p + (x % p)) * c;
      for (std::size_t ch = 0; ch < c; ++ch)
        idx[(y * width + x) * c + ch] = patch * pdim + within + ch;
    }
  return idx;
}

PatchGrid patchify(const ImageTensor& image, std::size_t p) {
  if (p == 0 || image.height % p != 0 || image.width % p != 0)
    throw ShapeError("patchify: image " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + " not divisible by patch size " +
                     std::to_string(p));
  if (image.data.size() != image.height * image.width * image.channels)
    throw ShapeError("patchify: image buffer size does not match its dimensions");
  PatchGrid g;
  g.grid_rows = image.height / p;
  g.grid_cols = image.width / p;
  g.patch_size = p;
  g.channels = image.channels;
  g.patches = Matrix(g.grid_rows * g.grid_cols, p * p * image.channels);
  const auto idx = patch_to_image_index(g.grid_rows, g.grid_cols, p, image.channels);
  for (std::size_t k = 0; k < idx.size(); ++k) g.patches.data[idx[k]] = image.data[k];
  return g;
}

ImageTensor unpatchify(const PatchGrid& g) {
  if (g.patches.rows != g.grid_rows * g.grid_cols)
    throw ShapeError("unpatchify: K=" + std::to_string(g.patches.rows) + " but grid is " +
                     std::to_string(g.grid_rows) + "x" + std::to_string(g.grid_cols));
  if (g.patches.cols != g.patch_size * g.patch_size * g.channels)
    throw ShapeError("unpatchify: patch length does not match P*P*C");
  ImageTensor img(g.grid_rows * g.patch_size, g.grid_cols * g.patch_size, g.channels);
  const auto idx = patch_to_image_index(g.grid_rows, g.grid_cols, g.patch_size, g.channels);
  for (std::size_t k = 0; k < idx.size(); ++k) img.data[k] = g.patches.data[idx[k]];
  return img;
}

bool MaskSet::contains(std::size_t i) const {
  return std::binary_search(positions.begin(), positions.end(), i);
}

std::size_t mask_count(std::size_t total, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("mask ratio must lie in [0, 1]");
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total) + 0.5));
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Rng& rng) {
  if (count > n) throw std::invalid_argument("sample_without_replacement: count > n");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

MaskSet sample_mask(std::size_t k, double ratio, Rng& rng) {
  MaskSet m;
  m.ratio = ratio;
  m.total = k;
  m.positions = sample_without_replacement(k, mask_count(k, ratio), rng);
  return m;
}

}  // namespace paco
