#include "dpx/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

namespace dpx::ckpt {

using nlohmann::json;

void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  json tensors = json::array();
  for (const auto& e : m.tensors) tensors.push_back({{"name", e.name}, {"file", e.file}, {"shape", e.shape}});
  json meta;
  try {
    meta = json::parse(m.metadata.empty() ? "{}" : m.metadata);
  } catch (const json::parse_error&) {
    meta = m.metadata;
  }
  const json j = {{"schema", kSchema}, {"precision", m.precision}, {"metadata", meta}, {"tensors", tensors}};
  std::ofstream out(dir / kManifestName);
  if (!out) throw StateError("checkpoint: cannot write " + (dir / kManifestName).string());
  out << j.dump(2) << "\n";
}

Manifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw StateError("checkpoint: cannot read " + (dir / kManifestName).string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw StateError(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  if (j.value("schema", "") != kSchema) throw StateError("checkpoint: unsupported manifest schema");
  Manifest m;
  m.precision = j.at("precision").get<std::string>();
  m.metadata = j.contains("metadata") ? j["metadata"].dump() : "{}";
  for (const auto& t : j.at("tensors")) {
    m.tensors.push_back({t.at("name").get<std::string>(), t.at("file").get<std::string>(),
                         t.at("shape").get<Shape>()});
  }
  return m;
}

}  // namespace dpx::ckpt
