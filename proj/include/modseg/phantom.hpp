#pragma once

#include <cstdint>
#include <vector>

#include "modseg/volume.hpp"

namespace modseg {

// Synthetic desk-scale dataset: each subject is an ellipsoidal brain on zero
// background with nested tumor ellipsoids (edema > core > enhancing core).
// Modality contrasts are fixed so that no single modality separates all
// three evaluation regions:
//   modality 1 (T1W):   core+enhancing dark, edema invisible
//   modality 2 (T1WC):  core dark, enhancing bright, edema invisible
//   modality 3 (T2W):   edema bright, core mildly bright, no enhancing contrast
//   modality 4 (FLAIR): whole tumor uniformly bright, no internal contrast
// Intensities carry additive Gaussian noise. Deterministic given the seed.
std::vector<Subject> generate_phantoms(uint64_t seed, int n_subjects, int side, int m);

}  // namespace modseg
