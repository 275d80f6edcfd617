#include "illama/attention.hpp"
#include "illama/errors.hpp"
#include "illama/io_util.hpp"

namespace illama {

namespace {
constexpr std::string_view kMagic = "ATNR";
}

void write_attention_dump(const std::filesystem::path& path, const AttentionRecord& record) {
  const auto& m = record.matrix;
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) {
    throw ShapeError("attention dump needs a square matrix, got " + shape_to_string(m.shape()));
  }
  ByteWriter w;
  w.text(kMagic);
  w.u32(kAttentionDumpVersion);
  w.u32(static_cast<std::uint32_t>(record.layer));
  w.u32(static_cast<std::uint32_t>(record.head));
  w.u32(static_cast<std::uint32_t>(m.dim(0)));
  for (float v : m.data()) w.f32(v);
  atomic_write_file(path, w.buffer());
}

AttentionRecord read_attention_dump(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes, path.string());
  if (r.text(4) != kMagic) throw FormatError(path.string() + ": bad magic, expected ATNR");
  const std::uint32_t version = r.u32();
  if (version != kAttentionDumpVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  AttentionRecord rec;
  rec.layer = r.u32();
  rec.head = r.u32();
  const std::uint64_t n = r.u32();
  if (n == 0) throw FormatError(path.string() + ": zero-sized matrix");
  if (r.remaining() != n * n * 4) {
    throw FormatError(path.string() + ": expected " + std::to_string(n * n * 4) +
                      " payload bytes, found " + std::to_string(r.remaining()));
  }
  rec.matrix = Tensor<float>({n, n});
  for (std::size_t i = 0; i < n * n; ++i) rec.matrix[i] = r.f32();
  return rec;
}

}  // namespace illama
