// SPDX-License-Identifier: Apache-2.0

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"
#include "paco/data.hpp"

namespace paco {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// PNG

namespace {

std::vector<std::uint8_t> read_png_raw(const std::string& path, std::uint32_t format, std::size_t& h,
                                       std::size_t& w) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw DataError("cannot read PNG " + path + ": " + img.message);
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG " + path + ": " + msg);
  }
  h = img.height;
  w = img.width;
  return buf;
}

void write_png_raw(const std::string& path, const std::vector<std::uint8_t>& buf, std::uint32_t format,
                   std::size_t h, std::size_t w) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw DataError("cannot write PNG " + path + ": " + img.message);
}

}  // namespace

void write_png(const std::string& path, const ImageTensor& image) {
  if (image.channels != 1 && image.channels != 3)
    throw ShapeError("write_png: only 1 or 3 channels are supported");
  std::vector<std::uint8_t> buf(image.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
  write_png_raw(path, buf, image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB, image.height, image.width);
}

ImageTensor read_png(const std::string& path) {
  std::size_t h = 0, w = 0;
  const auto buf = read_png_raw(path, PNG_FORMAT_RGB, h, w);
  ImageTensor img(h, w, 3);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0;
  return img;
}

void write_label_png(const std::string& path, const std::vector<std::uint8_t>& labels, std::size_t height,
                     std::size_t width) {
  if (labels.size() != height * width) throw ShapeError("write_label_png: size mismatch");
  write_png_raw(path, labels, PNG_FORMAT_GRAY, height, width);
}

std::vector<std::uint8_t> read_label_png(const std::string& path, std::size_t& height, std::size_t& width) {
  return read_png_raw(path, PNG_FORMAT_GRAY, height, width);
}

// ---------------------------------------------------------------------------
// Manifest and sidecars

DatasetManifest DatasetManifest::read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest " + path);
  DatasetManifest m;
  m.root = fs::absolute(path).parent_path().string();
  std::string line;
  std::size_t index = 0;
  while (std::getline(f, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestRecord r;
    try {
      const json j = json::parse(line);
      r.image = j.at("image").get<std::string>();
      r.id = j.value("id", std::to_string(index));
      r.landmarks = j.value("landmarks", "");
      r.seg = j.value("seg", "");
      r.split = j.value("split", "train");
    } catch (const json::exception& e) {
      throw DataError("manifest " + path + " record " + std::to_string(index) + ": " + e.what());
    }
    m.records.push_back(std::move(r));
    ++index;
  }
  m.validate();
  return m;
}

void DatasetManifest::write(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write manifest " + path);
  for (const ManifestRecord& r : records) {
    json j;
    j["id"] = r.id;
    j["image"] = r.image;
    if (!r.landmarks.empty()) j["landmarks"] = r.landmarks;
    if (!r.seg.empty()) j["seg"] = r.seg;
    j["split"] = r.split;
    f << j.dump() << '\n';
  }
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  std::map<std::string, std::string> image_split;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ManifestRecord& r = records[i];
    const std::string where = "manifest record " + std::to_string(i) + ": ";
    if (r.image.empty()) throw DataError(where + "missing image path");
    if (r.split.empty()) throw DataError(where + "missing split tag");
    if (!ids.insert(r.id).second) throw DataError(where + "duplicate id " + r.id);
    auto [it, fresh] = image_split.emplace(r.image, r.split);
    if (!fresh)
      throw DataError(where + "image " + r.image + " listed twice" +
                      (it->second != r.split ? " under different splits" : ""));
  }
}

std::vector<std::size_t> DatasetManifest::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

std::string DatasetManifest::resolve(const std::string& rel) const {
  const fs::path p(rel);
  return p.is_absolute() || root.empty() ? p.string() : (fs::path(root) / p).string();
}

void write_landmarks_json(const std::string& path, const Matrix& landmarks,
                          const std::optional<std::array<double, 4>>& face_box) {
  json j;
  j["landmarks"] = json::array();
  for (std::size_t l = 0; l < landmarks.rows; ++l) j["landmarks"].push_back({landmarks(l, 0), landmarks(l, 1)});
  if (face_box) j["face_box"] = *face_box;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write landmarks " + path);
  f << j.dump(1) << '\n';
}

Matrix read_landmarks_json(const std::string& path, std::optional<std::array<double, 4>>* face_box) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open landmarks " + path);
  try {
    const json j = json::parse(f);
    const auto& pts = j.at("landmarks");
    Matrix m(pts.size(), 2);
    for (std::size_t l = 0; l < pts.size(); ++l) {
      if (pts[l].size() != 2) throw DataError("landmark " + std::to_string(l) + " is not an (x, y) pair");
      m(l, 0) = pts[l][0].get<double>();
      m(l, 1) = pts[l][1].get<double>();
    }
    if (face_box) {
      if (j.contains("face_box")) *face_box = j.at("face_box").get<std::array<double, 4>>();
      else face_box->reset();
    }
    return m;
  } catch (const json::exception& e) {
    throw DataError("landmarks " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reader

DatasetReader::DatasetReader(DatasetManifest manifest, const std::string& split,
                             std::optional<std::uint64_t> shuffle_seed)
    : manifest_(std::move(manifest)), order_(manifest_.split_indices(split)) {
  if (shuffle_seed) {
    Rng rng = Rng::derive(*shuffle_seed, 0x4d414e49ULL);
    for (std::size_t i = order_.size(); i > 1; --i)
      std::swap(order_[i - 1], order_[static_cast<std::size_t>(rng.below(i))]);
  }
}

FaceSample DatasetReader::load(std::size_t i) const {
  const std::size_t idx = order_.at(i);
  const ManifestRecord& r = manifest_.records[idx];
  try {
    FaceSample s;
    s.id = r.id;
    const std::string image_path = manifest_.resolve(r.image);
    if (!fs::exists(image_path)) throw DataError("missing file " + image_path);
    s.image = read_png(image_path);
    if (!r.seg.empty()) {
      const std::string seg_path = manifest_.resolve(r.seg);
      if (!fs::exists(seg_path)) throw DataError("missing file " + seg_path);
      std::size_t h = 0, w = 0;
      s.seg = read_label_png(seg_path, h, w);
      if (h != s.image.height || w != s.image.width) throw DataError("mask size differs from image size");
    }
    if (!r.landmarks.empty()) {
      const std::string lm_path = manifest_.resolve(r.landmarks);
      if (!fs::exists(lm_path)) throw DataError("missing file " + lm_path);
      s.landmarks = read_landmarks_json(lm_path, &s.face_box);
    }
    validate_sample(s, false);
    return s;
  } catch (const std::exception& e) {
    throw DataError("record " + std::to_string(idx) + " (" + r.id + "): " + e.what());
  }
}

std::optional<FaceSample> DatasetReader::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  return load(cursor_++);
}

FaceSample resize_sample(const FaceSample& s, std::size_t image_size) {
  if (s.image.height == image_size && s.image.width == image_size) return s;
  FaceSample out;
  out.id = s.id;
  out.image = resize_bilinear(s.image, image_size, image_size);
  const double sx = static_cast<double>(image_size) / s.image.width;
  const double sy = static_cast<double>(image_size) / s.image.height;
  if (!s.seg.empty()) {
    out.seg.resize(image_size * image_size);
    for (std::size_t y = 0; y < image_size; ++y)
      for (std::size_t x = 0; x < image_size; ++x) {
        const auto sxi = std::min(s.image.width - 1, static_cast<std::size_t>((x + 0.5) / sx));
        const auto syi = std::min(s.image.height - 1, static_cast<std::size_t>((y + 0.5) / sy));
        out.seg[y * image_size + x] = s.seg[syi * s.image.width + sxi];
      }
  }
  out.landmarks = s.landmarks;
  for (std::size_t l = 0; l < out.landmarks.rows; ++l) {
    out.landmarks(l, 0) *= sx;
    out.landmarks(l, 1) *= sy;
  }
  if (s.face_box) {
    const auto& b = *s.face_box;
    out.face_box = std::array<double, 4>{b[0] * sx, b[1] * sy, b[2] * sx, b[3] * sy};
  }
  return out;
}

std::vector<FaceSample> load_split(const DatasetManifest& manifest, const std::string& split,
                                   std::size_t image_size) {
  DatasetReader reader(manifest, split);
  std::vector<FaceSample> out;
  out.reserve(reader.size());
  while (auto s = reader.next()) out.push_back(image_size ? resize_sample(*s, image_size) : std::move(*s));
  return out;
}

std::vector<ImageTensor> images_of(const std::vector<FaceSample>& samples) {
  std::vector<ImageTensor> out;
  out.reserve(samples.size());
  for (const FaceSample& s : samples) out.push_back(s.image);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset writers

SynthWriteResult write_synthetic_dataset(const std::string& out_dir, std::size_t count, std::uint64_t seed,
                                         const SynthOptions& opt, double test_fraction) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must lie in [0, 1)");
  const fs::path root(out_dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  fs::create_directories(root / "landmarks");
  const auto samples = generate_synthetic(count, seed, opt);
  const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * count + 0.5));
  DatasetManifest m;
  m.root = root.string();
  SynthWriteResult res;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const FaceSample& s = samples[i];
    ManifestRecord r;
    r.id = s.id;
    r.image = "images/" + s.id + ".png";
    r.seg = "masks/" + s.id + ".png";
    r.landmarks = "landmarks/" + s.id + ".json";
    r.split = i + n_test >= count ? "test" : "train";
    (r.split == "test" ? res.test : res.train)++;
    write_png((root / r.image).string(), s.image);
    write_label_png((root / r.seg).string(), s.seg, s.image.height, s.image.width);
    write_landmarks_json((root / r.landmarks).string(), s.landmarks, s.face_box);
    m.records.push_back(std::move(r));
  }
  res.manifest_path = (root / "manifest.jsonl").string();
  m.write(res.manifest_path);
  return res;
}

std::string prepare_dataset(const DatasetManifest& manifest, const AlignTemplate& tmpl,
                            const std::string& out_dir, std::size_t output_size) {
  const fs::path root(out_dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "landmarks");
  const std::size_t out = output_size ? output_size : tmpl.canvas;
  const double resize = static_cast<double>(out) / static_cast<double>(tmpl.canvas);
  DatasetManifest m;
  m.root = root.string();
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const ManifestRecord& r = manifest.records[i];
    try {
      if (r.landmarks.empty()) throw DataError("alignment needs landmarks");
      const ImageTensor img = read_png(manifest.resolve(r.image));
      std::optional<std::array<double, 4>> box;
      const Matrix lm = read_landmarks_json(manifest.resolve(r.landmarks), &box);
      const ImageTensor aligned = align_crop_pad(img, lm, tmpl, out);
      const Similarity t = alignment_transform(lm, tmpl);
      Matrix mapped(lm.rows, 2);
      for (std::size_t l = 0; l < lm.rows; ++l) {
        const auto p = t.apply(lm(l, 0), lm(l, 1));
        mapped(l, 0) = p[0] * resize;
        mapped(l, 1) = p[1] * resize;
      }
      std::optional<std::array<double, 4>> mapped_box;
      if (box) {
        // Box of the transformed corners.
        const auto& b = *box;
        double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
        for (double cx : {b[0], b[2]})
          for (double cy : {b[1], b[3]}) {
            const auto p = t.apply(cx, cy);
            x0 = std::min(x0, p[0] * resize), x1 = std::max(x1, p[0] * resize);
            y0 = std::min(y0, p[1] * resize), y1 = std::max(y1, p[1] * resize);
          }
        mapped_box = std::array<double, 4>{x0, y0, x1, y1};
      }
      ManifestRecord o;
      o.id = r.id;
      o.split = r.split;
      o.image = "images/" + r.id + ".png";
      o.landmarks = "landmarks/" + r.id + ".json";
      write_png((root / o.image).string(), aligned);
      write_landmarks_json((root / o.landmarks).string(), mapped, mapped_box);
      m.records.push_back(std::move(o));
    } catch (const std::exception& e) {
      throw DataError("record " + std::to_string(i) + " (" + r.id + "): " + e.what());
    }
  }
  const std::string path = (root / "manifest.jsonl").string();
  m.write(path);
  return path;
}

}  // namespace paco
