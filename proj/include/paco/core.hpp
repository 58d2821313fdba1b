// SPDX-License-Identifier: Apache-2.0
//
// Images, patch grids and mask sampling.

#pragma once

#include <cstddef>
#include <vector>

#include "paco/rng.hpp"
#include "paco/tensor.hpp"

namespace paco {

/// H x W x C image stored channel-last, values nominally in [0, 1].
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }
  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  /// Pixels as rows: [H*W, C].
  Matrix as_matrix() const { return Matrix(height * width, channels, data); }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

/// K patches of P*P*C values each, row-major over the grid; inside a patch
/// values are ordered (dy, dx, c).
struct PatchGrid {
  Matrix patches;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::size_t patch_size = 0;
  std::size_t channels = 0;

  std::size_t count() const { return patches.rows; }
  std::size_t patch_dim() const { return patches.cols; }
};

PatchGrid patchify(const ImageTensor& image, std::size_t patch_size);
ImageTensor unpatchify(const PatchGrid& grid);

/// Flat-index map such that image.data[k] == patches.data[patch_to_image_index(...)[k]].
std::vector<std::size_t> patch_to_image_index(std::size_t grid_rows, std::size_t grid_cols,
                                              std::size_t patch_size, std::size_t channels);

/// Sorted, duplicate-free subset of patch positions.
struct MaskSet {
  std::vector<std::size_t> positions;
  double ratio = 0.0;
  std::size_t total = 0;

  std::size_t size() const { return positions.size(); }
  bool contains(std::size_t i) const;
};

/// round-half-up(ratio * total)
std::size_t mask_count(std::size_t total, double ratio);

/// Uniform sample of mask_count(k, ratio) distinct positions.
MaskSet sample_mask(std::size_t k, double ratio, Rng& rng);

/// Uniform random subset of `count` indices from [0, n), sorted.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Rng& rng);

}  // namespace paco
