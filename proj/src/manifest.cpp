#include "rockgpt/manifest.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace rockgpt {

namespace {
constexpr const char* kFormat = "rockgpt-manifest/v1";
}

void DatasetManifest::validate(bool check_paths) const {
  if (l < 2) throw ConfigError("manifest: extraction length l must be >= 2");
  if (stride < 1) throw ConfigError("manifest: extraction stride must be >= 1");
  for (const auto& e : volumes) {
    if (e.path.empty()) throw ConfigError("manifest: empty volume path");
    if (e.label < 0 || e.label >= static_cast<int64_t>(classes.size()))
      throw ConfigError("manifest: label " + std::to_string(e.label) +
                        " does not index the class list");
    if (!(e.porosity >= 0 && e.porosity <= 1))
      throw ConfigError("manifest: porosity out of [0,1] for " + e.path);
    if (check_paths && !std::filesystem::exists(resolve(e)))
      throw IoError("manifest: missing volume file " + resolve(e));
  }
}

std::string DatasetManifest::resolve(const ManifestEntry& e) const {
  if (base_dir.empty()) return e.path;
  return (std::filesystem::path(base_dir) / e.path).string();
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
  m.validate(false);
  nlohmann::json j;
  j["format"] = kFormat;
  j["classes"] = m.classes;
  j["seed"] = m.seed;
  j["split_seed"] = m.split_seed;
  j["extraction"] = {{"l", m.l}, {"stride", m.stride}};
  j["rng"] = m.rng_algo;
  j["volumes"] = nlohmann::json::array();
  for (const auto& e : m.volumes)
    j["volumes"].push_back({{"path", e.path}, {"label", e.label}, {"porosity", e.porosity}});
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("manifest: cannot open " + path + " for writing");
  f << j.dump(2) << "\n";
  if (!f.good()) throw IoError("manifest: short write on " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("manifest: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
    if (j.at("format").get<std::string>() != kFormat)
      throw IoError("manifest: unknown format tag in " + path);
    DatasetManifest m;
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<uint64_t>();
    m.split_seed = j.at("split_seed").get<uint64_t>();
    m.l = j.at("extraction").at("l").get<int64_t>();
    m.stride = j.at("extraction").at("stride").get<int64_t>();
    m.rng_algo = j.value("rng", "");
    for (const auto& e : j.at("volumes")) {
      ManifestEntry me;
      me.path = e.at("path").get<std::string>();
      me.label = e.at("label").get<int64_t>();
      me.porosity = e.at("porosity").get<double>();
      m.volumes.push_back(me);
    }
    m.base_dir = std::filesystem::path(path).parent_path().string();
    m.validate(true);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest: malformed JSON in " + path + ": " + e.what());
  }
}

}  // namespace rockgpt
