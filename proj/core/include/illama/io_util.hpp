#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace illama {

/// Reads a whole file; FormatError when it cannot be opened.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames it over `path`.
void atomic_write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void atomic_write_file(const std::filesystem::path& path, std::string_view text);

/// Append-only little-endian encoder.
class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void text(std::string_view s);
  void u32(std::uint32_t v);
  void f32(float v);
  /// u32 byte length followed by the UTF-8 bytes.
  void prefixed(std::string_view s);

  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian decoder; every overrun is a FormatError that
/// names `what`.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string what)
      : data_(data), what_(std::move(what)) {}

  std::uint32_t u32();
  /// Big-endian u32 (IDX headers).
  std::uint32_t u32_be();
  float f32();
  std::string text(std::size_t n);
  std::string prefixed(std::size_t max_len = 1u << 24);
  std::span<const std::uint8_t> take(std::size_t n);

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace illama
