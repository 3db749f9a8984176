#pragma once

#include <string>
#include <vector>

#include "asrlab/tensor.hpp"

namespace asrlab {

// Feature file, binary little-endian:
//   magic "FBK1" | u32 frame count | u32 feature dim | frames*dim float32 row-major
void write_features(const std::string& path, const Tensor& features);
Tensor read_features(const std::string& path);

struct ManifestRecord {
  std::string id;
  std::string feats;   // path to the feature file
  std::string text;    // space-free token string
  std::string domain;
};

struct Manifest {
  std::vector<ManifestRecord> records;
};

// JSON-lines, one record per line. `check_paths` verifies every feature file
// resolves (relative paths resolve against the manifest's directory).
Manifest read_manifest(const std::string& path, bool check_paths = true);
void write_manifest(const std::string& path, const Manifest& m);

// Resolves a manifest-relative feature path.
std::string resolve_path(const std::string& manifest_path, const std::string& feats);

}  // namespace asrlab
