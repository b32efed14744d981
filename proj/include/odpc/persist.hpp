/* Copyright 2026 The ODPC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "odpc/error.hpp"
#include "odpc/tensor.hpp"

namespace odpc::persist {

namespace fs = std::filesystem;

inline constexpr std::string_view kBankMagic = "ODPCFB01";
inline constexpr std::uint32_t kBankVersion = 1;
inline constexpr std::size_t kBankHeaderBytes = 8 + 4 + 4 + 4 + 1;

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for large payloads.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

// Little-endian byte writer/reader. No padding, fixed widths.
class ByteWriter {
 public:
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_u8(std::uint8_t v) { bytes_.push_back(v); }
  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

  std::size_t size() const { return bytes_.size(); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  std::string_view take_bytes(std::size_t n) {
    need(n);
    std::string_view out(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return out;
  }
  std::uint8_t take_u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t take_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float take_f32() { return std::bit_cast<float>(take_u32()); }

 private:
  void need(std::size_t n) const {
    require(remaining() >= n, ErrorKind::kFormat, "unexpected end of file");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kNotFound, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

/// Writes to a sibling temporary file and renames it over `path`, so a reader
/// never observes a partially written output.
inline void atomic_write(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorKind::kIo, "cannot rename onto " + path.string() + ": " + ec.message());
}

inline void atomic_write_text(const fs::path& path, std::string_view text) {
  atomic_write(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// nlohmann::json objects are std::map backed, so keys come out sorted.
inline void write_json(const fs::path& path, const nlohmann::json& doc) {
  atomic_write_text(path, doc.dump(2) + "\n");
}

inline nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

/// Serializes a float32 matrix in the feature-bank layout:
/// magic, version, n_rows, dim, normalized flag, row-major payload, CRC32 of payload.
inline std::vector<std::uint8_t> encode_bank(const MatrixF& values, bool normalized) {
  require(values.allFinite(), ErrorKind::kInvalidArgument, "bank contains non-finite values");
  ByteWriter w;
  w.put_bytes(kBankMagic);
  w.put_u32(kBankVersion);
  w.put_u32(static_cast<std::uint32_t>(values.rows()));
  w.put_u32(static_cast<std::uint32_t>(values.cols()));
  w.put_u8(normalized ? 1 : 0);
  const std::size_t payload_start = w.size();
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c) w.put_f32(values(r, c));
  const auto& bytes = w.bytes();
  w.put_u32(crc32(std::span(bytes).subspan(payload_start)));
  return std::move(w.bytes());
}

struct DecodedBank {
  MatrixF values;
  bool normalized = false;
};

inline DecodedBank decode_bank(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= kBankHeaderBytes + 4, ErrorKind::kFormat, "bank file truncated");
  ByteReader r(bytes);
  require(r.take_bytes(8) == kBankMagic, ErrorKind::kFormat, "bad bank magic");
  const std::uint32_t version = r.take_u32();
  require(version == kBankVersion, ErrorKind::kFormat,
          "unsupported bank version " + std::to_string(version));
  const std::uint64_t rows = r.take_u32();
  const std::uint64_t dim = r.take_u32();
  const std::uint8_t normalized = r.take_u8();
  require(normalized <= 1, ErrorKind::kFormat, "bad normalized flag");
  const std::uint64_t payload_bytes = rows * dim * 4;
  require(r.remaining() == payload_bytes + 4, ErrorKind::kFormat,
          "bank size mismatch: header declares " + std::to_string(rows) + "x" +
              std::to_string(dim));
  const auto payload = bytes.subspan(r.position(), payload_bytes);
  const std::uint32_t expected = crc32(payload);
  DecodedBank out;
  out.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < out.values.rows(); ++i)
    for (Eigen::Index j = 0; j < out.values.cols(); ++j) out.values(i, j) = r.take_f32();
  require(r.take_u32() == expected, ErrorKind::kCorruption, "bank CRC mismatch");
  require(out.values.allFinite(), ErrorKind::kFormat, "bank contains non-finite values");
  out.normalized = normalized == 1;
  return out;
}

inline void write_bank(const EmbeddingMatrix& m, const fs::path& path) {
  atomic_write(path, encode_bank(m.values, m.normalized));
}

inline EmbeddingMatrix read_bank(const fs::path& path) {
  require(fs::exists(path), ErrorKind::kNotFound, "no such file: " + path.string());
  auto decoded = decode_bank(read_file(path));
  return {std::move(decoded.values), decoded.normalized, EmbeddingSource::kImported};
}

}  // namespace odpc::persist
