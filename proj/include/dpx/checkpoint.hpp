#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dpx/error.hpp"
#include "dpx/io.hpp"
#include "dpx/params.hpp"

namespace dpx::ckpt {

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kSchema = "dpx.checkpoint.v1";

struct ManifestEntry {
  std::string name;  // dotted parameter path
  std::string file;  // relative to the checkpoint directory
  Shape shape;
};

struct Manifest {
  std::string precision;  // "float32" or "float64"
  std::string metadata;   // free-form JSON text, e.g. the run config
  std::vector<ManifestEntry> tensors;
};

/// One DPTF file per tensor plus manifest.json. Existing files are overwritten.
void write_manifest(const std::filesystem::path& dir, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& dir);

template <class T, class P>
Manifest save(const std::filesystem::path& dir, P& params, std::string metadata = "{}") {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.precision = io::precision_of<T>() == io::Precision::kSingle ? "float32" : "float64";
  m.metadata = std::move(metadata);
  std::size_t i = 0;
  params.visit([&](std::string_view name, Tensor<T>& t) {
    ManifestEntry e{std::string(name), "t" + std::to_string(i++) + ".dptf", t.shape()};
    io::write_file(dir / e.file, t);
    m.tensors.push_back(std::move(e));
  });
  write_manifest(dir, m);
  return m;
}

/// Loads into a model of identical structure; names and shapes must match.
template <class T, class P>
void load(const std::filesystem::path& dir, P& params) {
  const Manifest m = read_manifest(dir);
  std::size_t i = 0;
  params.visit([&](std::string_view name, Tensor<T>& t) {
    if (i >= m.tensors.size()) throw StateError("checkpoint: missing tensor '" + std::string(name) + "'");
    const auto& e = m.tensors[i++];
    if (e.name != name) throw StateError("checkpoint: expected '" + std::string(name) + "', found '" + e.name + "'");
    Tensor<T> loaded = io::read_file<T>(dir / e.file);
    if (loaded.shape() != t.shape()) {
      throw DimensionError("checkpoint: '" + e.name + "' has shape " + shape_str(loaded.shape()) + ", model expects " +
                           shape_str(t.shape()));
    }
    t = std::move(loaded);
  });
  if (i != m.tensors.size()) throw StateError("checkpoint: manifest lists extra tensors");
}

}  // namespace dpx::ckpt
