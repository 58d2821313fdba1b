// SPDX-License-Identifier: Apache-2.0
//
// Tensor archive container, version 1. All integers little-endian.
//
//   offset 0   char[8]  magic "PACOARCH"
//          8   u32      format version (1)
//         12   u64      payload length in bytes
//         20   payload:
//                u32 meta count, then per entry: str key, str value
//                u32 tensor count, then per tensor: str name, u32 rows,
//                    u32 cols, f64[rows*cols] row-major
//       end-8  u64      FNV-1a 64 of the payload bytes
//
// where str = u32 byte length followed by UTF-8 bytes. Entries are written
// in sorted key order so identical content yields identical bytes.

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "paco/tensor.hpp"

namespace paco {

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorArchive {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> meta;
  std::map<std::string, Matrix> tensors;

  const Matrix* find(const std::string& name) const;
  const std::string& meta_at(const std::string& key) const;

  std::string serialize() const;
  static TensorArchive deserialize(const std::string& bytes);

  void write(const std::string& path) const;
  /// Throws ArchiveError on bad magic, unsupported version, truncation or checksum mismatch.
  static TensorArchive read(const std::string& path);
};

}  // namespace paco
