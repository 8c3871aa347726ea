// manifest.hpp: the dataset manifest JSON that ties volumes to class labels,
// measured porosities, and the slice-extraction parameters.
#pragma once

#include <string>
#include <vector>

#include "rockgpt/common.hpp"

namespace rockgpt {

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  int64_t label = 0;
  double porosity = 0;
};

struct DatasetManifest {
  std::vector<std::string> classes;
  uint64_t seed = 0;
  uint64_t split_seed = 0;
  int64_t l = 8;
  int64_t stride = 4;
  std::string rng_algo;  // names the generator so datasets are reproducible
  std::vector<ManifestEntry> volumes;
  std::string base_dir;  // set on load, not serialized

  // labels in range, l >= 2, stride >= 1; with check_paths also that every
  // volume file exists relative to base_dir
  void validate(bool check_paths) const;
  std::string resolve(const ManifestEntry& e) const;
};

void save_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& path);

}  // namespace rockgpt
