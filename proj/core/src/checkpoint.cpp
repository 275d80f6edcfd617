#include "illama/checkpoint.hpp"

#include <map>
#include <set>

#include "illama/config.hpp"
#include "illama/errors.hpp"
#include "illama/io_util.hpp"

namespace illama {

namespace {
constexpr std::string_view kMagic = "ILMA";
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     std::size_t epoch) {
  KeyValues kv = model_config_keys(model.config);
  kv.emplace_back("epoch", std::to_string(epoch));
  ByteWriter w;
  w.text(kMagic);
  w.u32(kCheckpointVersion);
  w.prefixed(format_key_values(kv));
  std::uint32_t count = 0;
  for_each_parameter(model, [&](const std::string&, const Tensor<float>&) { ++count; });
  w.u32(count);
  for_each_parameter(model, [&](const std::string& name, const Tensor<float>& t) {
    w.prefixed(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.f32(v);
  });
  atomic_write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string what = path.string();
  ByteReader r(bytes, what);
  if (r.text(4) != kMagic) throw FormatError(what + ": bad magic, expected ILMA");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  }
  KeyValues kv = parse_key_values(r.prefixed(), what + " header");
  std::size_t epoch = 0;
  KeyValues model_kv;
  for (auto& [k, v] : kv) {
    if (k == "epoch") {
      try {
        epoch = std::stoull(v);
      } catch (const std::exception&) {
        throw FormatError(what + ": bad epoch '" + v + "'");
      }
    } else {
      model_kv.emplace_back(k, v);
    }
  }
  ModelConfig config;
  try {
    config = model_config_from(model_kv);
  } catch (const ConfigError& e) {
    throw FormatError(what + ": bad config header: " + e.what());
  }
  Checkpoint ck{Model<float>::allocate(config), epoch};

  std::map<std::string, Tensor<float>*> slots;
  for_each_parameter(ck.model, [&](const std::string& name, Tensor<float>& t) { slots[name] = &t; });
  const std::uint32_t count = r.u32();
  if (count != slots.size()) {
    throw FormatError(what + ": " + std::to_string(count) + " parameters stored, model has " +
                      std::to_string(slots.size()));
  }
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.prefixed(4096);
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError(what + ": unknown parameter '" + name + "'");
    if (!seen.insert(name).second) throw FormatError(what + ": duplicate parameter '" + name + "'");
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    Tensor<float>& t = *it->second;
    if (shape != t.shape()) {
      throw FormatError(what + ": parameter '" + name + "' has shape " + shape_to_string(shape) +
                        ", config implies " + shape_to_string(t.shape()));
    }
    for (auto& v : t.data()) v = r.f32();
  }
  if (r.remaining() != 0) {
    throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return ck;
}

}  // namespace illama
