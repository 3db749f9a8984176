#include "asrlab/dataio.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "asrlab/errors.hpp"

namespace asrlab {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'F', 'B', 'K', '1'};

void put_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void write_features(const std::string& path, const Tensor& features) {
  if (features.rank() != 2) throw ArgError("write_features: expected a 2-D matrix");
  if (!features.all_finite()) throw ArgError("write_features: non-finite values");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file: " + path);
  out.write(kMagic, 4);
  put_u32(out, static_cast<uint32_t>(features.shape[0]));
  put_u32(out, static_cast<uint32_t>(features.shape[1]));
  std::vector<float> payload(features.v.size());
  for (size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(features.v[i]);
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * 4));
  if (!out) throw IoError("write failed: " + path);
}

Tensor read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() < 12) {
    throw FormatError(path + ": truncated header at offset " + std::to_string(raw.size()));
  }
  if (std::memcmp(raw.data(), kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic at offset 0");
  }
  uint32_t frames = get_u32(raw.data() + 4);
  uint32_t dim = get_u32(raw.data() + 8);
  size_t expect = 12 + static_cast<size_t>(frames) * dim * 4;
  if (raw.size() != expect) {
    throw FormatError(path + ": payload size mismatch at offset 12 (have " +
                      std::to_string(raw.size() - 12) + " bytes, expected " +
                      std::to_string(expect - 12) + " for " + std::to_string(frames) + "x" +
                      std::to_string(dim) + ")");
  }
  Tensor t({static_cast<int>(frames), static_cast<int>(dim)});
  const unsigned char* p = raw.data() + 12;
  for (size_t i = 0; i < t.v.size(); ++i) {
    float f;
    std::memcpy(&f, p + i * 4, 4);
    t.v[i] = static_cast<double>(f);
  }
  return t;
}

std::string resolve_path(const std::string& manifest_path, const std::string& feats) {
  fs::path p(feats);
  if (p.is_absolute()) return feats;
  return (fs::path(manifest_path).parent_path() / p).string();
}

Manifest read_manifest(const std::string& path, bool check_paths) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  Manifest m;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    ManifestRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.feats = j.at("feats").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.domain = j.at("domain").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(r.id).second) {
      throw FormatError(path + " line " + std::to_string(line_no) + ": duplicate id '" + r.id + "'");
    }
    if (check_paths && !fs::exists(resolve_path(path, r.feats))) {
      throw IoError(path + " line " + std::to_string(line_no) + ": feature file not found: " + r.feats);
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const auto& r : m.records) {
    nlohmann::json j{{"id", r.id}, {"feats", r.feats}, {"text", r.text}, {"domain", r.domain}};
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace asrlab
