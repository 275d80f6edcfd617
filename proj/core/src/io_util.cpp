#include "illama/io_util.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <system_error>

#include "illama/errors.hpp"

namespace illama {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::streamoff size = in.tellg();
  if (size < 0) throw FormatError("cannot size " + path.string());
  std::vector<std::uint8_t> out(static_cast<std::size_t>(size));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(out.data()), size);
  if (!in) throw FormatError("short read from " + path.string());
  return out;
}

void atomic_write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError("cannot rename " + tmp.string() + ": " + ec.message());
}

void atomic_write_file(const std::filesystem::path& path, std::string_view text) {
  atomic_write_file(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ByteWriter::text(std::string_view s) {
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::prefixed(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  text(s);
}

void ByteReader::need(std::size_t n) const {
  if (n > data_.size() - pos_) {
    throw FormatError(what_ + ": truncated (need " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", " + std::to_string(data_.size() - pos_) +
                      " left)");
  }
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint32_t ByteReader::u32_be() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_ + i];
  pos_ += 4;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::string ByteReader::text(std::size_t n) {
  auto b = take(n);
  return std::string(b.begin(), b.end());
}

std::string ByteReader::prefixed(std::size_t max_len) {
  const std::uint32_t n = u32();
  if (n > max_len) throw FormatError(what_ + ": string length " + std::to_string(n) + " too large");
  return text(n);
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
  need(n);
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

}  // namespace illama
