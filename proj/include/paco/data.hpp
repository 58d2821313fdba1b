// SPDX-License-Identifier: Apache-2.0
//
// Synthetic face-like samples with dense labels, alignment preprocessing for
// external images, PNG storage and a JSON-lines dataset manifest.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "paco/core.hpp"
#include "paco/rng.hpp"
#include "paco/tensor.hpp"

namespace paco {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Segmentation vocabulary. "Left" and "right" refer to image sides.
enum SegClass : std::uint8_t {
  kBackground = 0,
  kSkin = 1,
  kLeftEye = 2,
  kRightEye = 3,
  kNose = 4,
  kMouth = 5,
  kHair = 6,
};
inline constexpr std::size_t kNumSegClasses = 7;
const char* seg_class_name(std::size_t c);

/// Landmark layout: 0-1 left eye outer/inner corner, 2-3 right eye
/// inner/outer corner, 4-5 left/right eye centre, 6 nose tip, 7-8 mouth
/// left/right corner, 9 chin.
inline constexpr std::size_t kNumLandmarks = 10;
inline constexpr std::size_t kLeftEyeCenter = 4;
inline constexpr std::size_t kRightEyeCenter = 5;

struct FaceSample {
  std::string id;
  ImageTensor image;
  std::vector<std::uint8_t> seg;  // [H*W] class ids, row-major
  Matrix landmarks;               // [L, 2] pixel coordinates (x, y)
  /// Face bounding box x0, y0, x1, y1 in pixels, when known.
  std::optional<std::array<double, 4>> face_box;
};

/// Throws DataError when a sample violates the synthetic-sample invariants:
/// shapes agree, ids in vocabulary, every non-background class present,
/// landmarks inside the image.
void validate_sample(const FaceSample& s, bool require_all_classes = true);

struct SynthOptions {
  std::size_t image_size = 64;
  double max_rotation_deg = 10.0;
  double center_jitter = 0.04;  // fraction of image size
  double scale_min = 0.9;
  double scale_max = 1.1;
  double noise = 0.02;
  /// Pixel values are snapped to multiples of 1/255 so PNG storage is lossless.
  bool quantize = true;
};

/// Renders one face. The stream is consumed in a fixed order, so equal seeds
/// give bitwise-equal samples.
FaceSample generate_face(const SynthOptions& opt, Rng& rng);

/// Sample i is drawn from Rng::derive(seed, i); samples are independent of count.
std::vector<FaceSample> generate_synthetic(std::size_t count, std::uint64_t seed,
                                           const SynthOptions& opt = {});

// ---------------------------------------------------------------------------
// Geometry and resampling

/// p' = [a -b; b a] p + t
struct Similarity {
  double a = 1.0;
  double b = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  std::array<double, 2> apply(double x, double y) const {
    return {a * x - b * y + tx, b * x + a * y + ty};
  }
  Similarity inverse() const;
  double scale() const;
};

/// Least-squares similarity taking src rows onto dst rows ([N, 2], N >= 2).
/// Rejects point sets whose spread is (near) one-dimensional.
Similarity estimate_similarity(const Matrix& src, const Matrix& dst, double collinear_tol = 1e-3);

/// Bilinear sample at continuous pixel coordinates (pixel centres at +0.5);
/// outside the image returns `fill`.
double sample_bilinear(const ImageTensor& img, double x, double y, std::size_t c, double fill);
/// Resize with half-pixel-centre bilinear interpolation (edge-clamped).
ImageTensor resize_bilinear(const ImageTensor& img, std::size_t out_h, std::size_t out_w);
/// Output pixel q samples the input at transform(q) (output-to-input map).
ImageTensor warp(const ImageTensor& img, const Similarity& out_to_in, std::size_t out_h,
                 std::size_t out_w, double fill);

struct AlignTemplate {
  /// Eye centres (left, right), nose tip, mouth corners (left, right) in the crop frame.
  std::array<std::array<double, 2>, 5> points;
  std::size_t crop = 200;
  std::size_t canvas = 256;
  double background = 0.5;

  /// Standard five-point face template scaled to the 200 x 200 crop.
  static AlignTemplate standard();
  /// JSON object {"points": [[x,y] x5], "crop": n, "canvas": n, "background": v};
  /// absent keys keep the standard values.
  static AlignTemplate load(const std::string& path);
  void validate() const;
};

/// Aligns onto the template with a least-squares similarity, crops, pads to
/// the canvas with the background value and resizes to output_size (0 keeps
/// the canvas size).
ImageTensor align_crop_pad(const ImageTensor& image, const Matrix& landmarks5,
                           const AlignTemplate& tmpl, std::size_t output_size = 0);
/// Transform from input pixels to the padded canvas used by align_crop_pad.
Similarity alignment_transform(const Matrix& landmarks5, const AlignTemplate& tmpl);
/// The five alignment points (eye centres, nose tip, mouth corners) of a 10-point set.
Matrix five_point_subset(const Matrix& landmarks);

// ---------------------------------------------------------------------------
// Storage

/// 8-bit PNG, grey for 1 channel, RGB for 3. Values are clamped to [0, 1].
void write_png(const std::string& path, const ImageTensor& image);
ImageTensor read_png(const std::string& path);
void write_label_png(const std::string& path, const std::vector<std::uint8_t>& labels,
                     std::size_t height, std::size_t width);
std::vector<std::uint8_t> read_label_png(const std::string& path, std::size_t& height,
                                         std::size_t& width);

struct ManifestRecord {
  std::string id;
  std::string image;      // relative to the manifest directory, or absolute
  std::string landmarks;  // optional JSON sidecar
  std::string seg;        // optional label PNG
  std::string split;
  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct DatasetManifest {
  std::string root;  // directory that relative paths resolve against
  std::vector<ManifestRecord> records;

  /// One JSON object per line with keys id, image, landmarks, seg, split.
  static DatasetManifest read(const std::string& path);
  void write(const std::string& path) const;
  /// Distinct ids and images; no image listed under two splits.
  void validate() const;
  std::vector<std::size_t> split_indices(const std::string& split) const;
  std::string resolve(const std::string& rel) const;
};

/// Landmark sidecar: {"landmarks": [[x, y], ...], "face_box": [x0, y0, x1, y1]}.
void write_landmarks_json(const std::string& path, const Matrix& landmarks,
                          const std::optional<std::array<double, 4>>& face_box);
Matrix read_landmarks_json(const std::string& path, std::optional<std::array<double, 4>>* face_box);

/// Lazy reader over one split. Iteration order is record order, or a
/// permutation drawn from the shuffle seed. Load failures carry the record index.
class DatasetReader {
 public:
  DatasetReader(DatasetManifest manifest, const std::string& split,
                std::optional<std::uint64_t> shuffle_seed = std::nullopt);
  std::size_t size() const { return order_.size(); }
  /// i-th sample in iteration order.
  FaceSample load(std::size_t i) const;
  std::optional<FaceSample> next();
  void reset() { cursor_ = 0; }
  /// Manifest record index of the i-th sample.
  std::size_t record_index(std::size_t i) const { return order_.at(i); }

 private:
  DatasetManifest manifest_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Loads a whole split, resizing images (and scaling landmarks/labels) to
/// image_size when needed. Labels are resized nearest-neighbour.
std::vector<FaceSample> load_split(const DatasetManifest& manifest, const std::string& split,
                                   std::size_t image_size);
FaceSample resize_sample(const FaceSample& s, std::size_t image_size);
std::vector<ImageTensor> images_of(const std::vector<FaceSample>& samples);

struct SynthWriteResult {
  std::string manifest_path;
  std::size_t train = 0;
  std::size_t test = 0;
};
/// Writes images/, masks/, landmarks/ and manifest.jsonl under out_dir. The
/// last round(test_fraction * count) samples form the test split.
SynthWriteResult write_synthetic_dataset(const std::string& out_dir, std::size_t count,
                                         std::uint64_t seed, const SynthOptions& opt = {},
                                         double test_fraction = 0.2);

/// Aligns every record of a manifest (which must carry landmarks) and writes
/// the results with a new manifest under out_dir. Landmarks are mapped
/// through the same transform; segmentation labels are dropped.
std::string prepare_dataset(const DatasetManifest& manifest, const AlignTemplate& tmpl,
                            const std::string& out_dir, std::size_t output_size);

}  // namespace paco
