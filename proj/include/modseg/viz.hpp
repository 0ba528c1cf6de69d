#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "modseg/nets.hpp"
#include "modseg/rng.hpp"
#include "modseg/tsne.hpp"
#include "modseg/volume.hpp"

namespace modseg {

struct FeatureSample {
  std::vector<float> feature;  // final hidden layer activations at one voxel
  int predicted_label = 0;     // raw label {0,1,2,4}
  int true_label = 0;
  std::string mask_name;
  std::string subject_id;
  int64_t patch_index = 0;
  std::array<int64_t, 3> voxel{};  // absolute volume coordinate
};

// Samples n_patches patches, runs the model under every mask, and collects
// the final hidden-layer activations at n_voxels target voxels. The same
// voxel set is used for every mask; the result is mask-major with
// n_voxels * |masks| entries.
std::vector<FeatureSample> extract_features(Model& model,
                                            const std::vector<const Subject*>& subjects,
                                            Rng& rng, int n_patches, int n_voxels,
                                            const std::vector<ModalityMask>& masks,
                                            int64_t input_side);

enum class Highlight { PredictedLabel, TrueLabel, MaskName };

Highlight highlight_from_name(const std::string& name);

// One scatter panel per distinct highlight value: highlighted samples red,
// the rest gray. Returns the written files.
std::vector<std::filesystem::path> render_scatter(
    const std::vector<std::array<double, 2>>& points,
    const std::vector<FeatureSample>& samples, Highlight highlight,
    const std::filesystem::path& out_dir);

void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<uint8_t>& rgb);

void write_embedding_csv(const std::filesystem::path& path,
                         const std::vector<std::array<double, 2>>& points,
                         const std::vector<FeatureSample>& samples);

}  // namespace modseg
