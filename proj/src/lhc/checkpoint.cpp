#include "lhc/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lhc/io.hpp"

namespace lhc {

using nlohmann::json;

std::string encode_checkpoint(const Checkpoint& ckpt) {
  json manifest;
  manifest["format"] = "LHC1";
  manifest["format_version"] = kCheckpointVersion;
  manifest["hyperparameters"] = ckpt.hyperparameters;
  manifest["model"] = ckpt.model;
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.params.entries()) {
    entries.push_back({{"name", name},
                       {"shape", t.shape},
                       {"frozen", ckpt.params.is_frozen(name)},
                       {"offset", offset},
                       {"count", t.numel()}});
    offset += t.numel() * sizeof(double);
  }
  manifest["parameters"] = entries;

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  out += manifest.dump();
  out += '\n';
  for (const auto& [_, t] : ckpt.params.entries()) {
    for (double x : t.data) append_le(out, std::bit_cast<std::uint64_t>(x), 8);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("checkpoint: missing LHC1 magic");
  }
  const std::size_t eol = bytes.find('\n', 4);
  if (eol == std::string::npos) throw FormatError("checkpoint: unterminated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 4, bytes.begin() + static_cast<std::ptrdiff_t>(eol));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  if (manifest.value("format_version", 0) != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported format version");
  }
  const std::size_t payload = eol + 1;
  Checkpoint ckpt;
  ckpt.hyperparameters = manifest.value("hyperparameters", json::object());
  ckpt.model = manifest.value("model", json::object());
  std::size_t payload_end = 0;
  try {
    for (const json& e : manifest.at("parameters")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto count = e.at("count").get<std::uint64_t>();
      if (shape_numel(shape) != count) {
        throw FormatError("checkpoint: count does not match shape for " + name);
      }
      if (payload + offset + count * 8 > bytes.size()) {
        throw FormatError("checkpoint: truncated payload for " + name);
      }
      payload_end = std::max<std::size_t>(payload_end, offset + count * 8);
      std::vector<double> data(count);
      const char* p = bytes.data() + payload + offset;
      for (std::size_t i = 0; i < count; ++i) {
        data[i] = std::bit_cast<double>(read_le<std::uint64_t>(p + 8 * i));
      }
      ckpt.params.add(name, Tensor(shape, std::move(data)));
      if (e.at("frozen").get<bool>()) ckpt.params.freeze(name);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad parameter entry: ") + e.what());
  }
  if (payload + payload_end != bytes.size()) throw FormatError("checkpoint: trailing bytes after payload");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace lhc
