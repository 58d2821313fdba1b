// SPDX-License-Identifier: Apache-2.0

#include "paco/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace paco {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian host");

constexpr char kMagic[8] = {'P', 'A', 'C', 'O', 'A', 'R', 'C', 'H'};

std::uint64_t fnv1a(const char* p, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(p[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  Reader(const std::string& b, std::size_t begin, std::size_t end) : b_(b), pos_(begin), end_(end) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void get_doubles(double* dst, std::size_t count) {
    need(count * sizeof(double));
    std::memcpy(dst, b_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw ArchiveError("archive truncated");
  }
  const std::string& b_;
  std::size_t pos_;
  std::size_t end_;
};

}  // namespace

const Matrix* TensorArchive::find(const std::string& name) const {
  auto it = tensors.find(name);
  return it == tensors.end() ? nullptr : &it->second;
}

const std::string& TensorArchive::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw ArchiveError("archive is missing metadata '" + key + "'");
  return it->second;
}

std::string TensorArchive::serialize() const {
  std::string payload;
  put<std::uint32_t>(payload, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_str(payload, k);
    put_str(payload, v);
  }
  put<std::uint32_t>(payload, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_str(payload, name);
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(m.rows));
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(m.cols));
    payload.append(reinterpret_cast<const char*>(m.data.data()), m.data.size() * sizeof(double));
  }
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, payload.size());
  out += payload;
  put<std::uint64_t>(out, fnv1a(payload.data(), payload.size()));
  return out;
}

TensorArchive TensorArchive::deserialize(const std::string& bytes) {
  constexpr std::size_t header = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < header + sizeof(std::uint64_t)) throw ArchiveError("archive truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw ArchiveError("not a paco archive (bad magic)");
  Reader head(bytes, sizeof kMagic, header);
  const auto version = head.get<std::uint32_t>();
  if (version != kVersion)
    throw ArchiveError("unsupported archive version " + std::to_string(version));
  const auto len = head.get<std::uint64_t>();
  if (bytes.size() != header + len + sizeof(std::uint64_t))
    throw ArchiveError("archive length mismatch (truncated or trailing bytes)");
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + header + len, sizeof stored);
  if (stored != fnv1a(bytes.data() + header, len)) throw ArchiveError("archive checksum mismatch");

  TensorArchive a;
  Reader r(bytes, header, header + len);
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_str();
    a.meta[k] = r.get_str();
  }
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.get_str();
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    Matrix m(rows, cols);
    r.get_doubles(m.data.data(), m.data.size());
    a.tensors[name] = std::move(m);
  }
  if (!r.done()) throw ArchiveError("archive payload has trailing bytes");
  return a;
}

void TensorArchive::write(const std::string& path) const {
  const std::string bytes = serialize();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ArchiveError("cannot write " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ArchiveError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArchiveError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return deserialize(ss.str());
  } catch (const ArchiveError& e) {
    throw ArchiveError(path + ": " + e.what());
  }
}

}  // namespace paco
