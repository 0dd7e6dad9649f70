#pragma once

#include <string>
#include <vector>

#include "tensor.hpp"

namespace clusdiff {

struct ManifestRecord {
  int id = 0;
  std::string rel_path;    // relative to the manifest's directory
  std::string class_name;
  int mode_id = -1;        // planted ground truth; -1 when unknown
  bool synthetic = false;
};

/// Index of an on-disk image dataset. Image files are PNGs next to the
/// manifest; extents are uniform across the set.
struct Manifest {
  std::string root;  // set when loaded; derived from the manifest path
  int channels = 1;
  int height = 0;
  int width = 0;
  std::vector<ManifestRecord> records;

  /// Class names in first-appearance order; every stage derives ids from
  /// this same table, so the mapping is stable across the pipeline.
  std::vector<std::string> class_table() const;
  std::vector<int> class_ids(const std::vector<std::string>& table) const;
};

void save_manifest(const std::string& path, const Manifest& m);

/// Parses, checks id uniqueness, and verifies every referenced image file
/// exists. Missing files are missing-input errors, not parse errors.
Manifest load_manifest(const std::string& path);

/// Decode every record's PNG in record order (parallel inside).
std::vector<Tensor> load_manifest_images(const Manifest& m);

}  // namespace clusdiff
