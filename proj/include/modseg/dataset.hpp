#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "modseg/volume.hpp"

namespace modseg {

// Ordered (file suffix, modality name) pairs plus the label suffix; files
// follow the layout <root>/<subject>/<subject>_<suffix>.nii[.gz].
struct BratsLayout {
  std::vector<std::pair<std::string, std::string>> modalities = {
      {"t1", "T1W"}, {"t1ce", "T1WC"}, {"t2", "T2W"}, {"flair", "FLAIR"}};
  std::string seg_suffix = "seg";
};

// Loads every subject under a BraTS-style directory, modalities stacked in
// the layout order, labels remapped into {0,1,2,4}. An empty directory
// yields an empty list with a warning on stderr.
std::vector<Subject> ingest_brats(const std::filesystem::path& root,
                                  const BratsLayout& layout = BratsLayout());

// Internal dataset layout: <root>/<subject>/{volume.bin, labels.bin, meta.json}.
void save_subject(const std::filesystem::path& subject_dir, const Subject& subject);
Subject load_subject(const std::filesystem::path& subject_dir);
bool is_internal_subject_dir(const std::filesystem::path& dir);

// Loads a dataset in either layout (auto-detected per subject directory).
std::vector<Subject> load_dataset(const std::filesystem::path& root,
                                  const BratsLayout& layout = BratsLayout());

std::vector<std::string> dataset_subject_ids(const std::vector<Subject>& subjects);

// FNV-1a over all files under root (sorted relative paths), for manifests.
uint64_t dataset_checksum(const std::filesystem::path& root);

}  // namespace modseg
