#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "modseg/missingness.hpp"
#include "modseg/nets.hpp"
#include "modseg/volume.hpp"

namespace modseg {

// 2|P∩T| / (|P| + |T|); two empty masks agree perfectly (1.0).
double dice(const RegionMask& pred, const RegionMask& truth);

// Whole-volume prediction with non-overlapping output tiles of the side
// implied by input_side; borders are padded with background_value. The mask
// is applied at the model's masking point. Every voxel is predicted exactly
// once.
LabelVolume sliding_window_predict(Model& model, const MultiModalVolume& volume,
                                   const ModalityMask& mask, int64_t input_side);

// Tile start offsets covering [0, extent) with stride `tile`; the last tile
// may overhang and is clipped by the caller.
std::vector<int64_t> tile_origins(int64_t extent, int64_t tile);

struct DiceRow {
  std::string model;
  std::string region;
  std::string subset;
  double mean_dice = 0.0;
  int n_subjects = 0;
};

struct DiceReport {
  std::vector<DiceRow> rows;
  int fold_id = -1;
  uint64_t seed = 0;
};

struct EvalOptions {
  int64_t input_side = 0;  // 0: pick automatically for the volume / depth
  std::vector<int> channel_subset;  // dedicated models: volume channels to feed
  std::string subset_name_override;  // dedicated models: reported subset name
};

// Dice per region per subset, averaged over the test subjects. Refuses any
// test subject that appears in train_subject_ids (leakage guard).
DiceReport evaluate_subsets(Model& model, const std::string& model_name,
                            const std::vector<const Subject*>& test_subjects,
                            const std::vector<ModalityMask>& subsets,
                            const std::vector<std::string>& train_subject_ids,
                            const EvalOptions& options, int fold_id, uint64_t seed);

enum class ReportFormat { Csv, Markdown };

void emit_report(const std::vector<DiceReport>& reports, const std::filesystem::path& path,
                 ReportFormat format,
                 const std::vector<std::string>& modality_names = kDefaultModalities);
std::vector<DiceReport> parse_report_csv(const std::filesystem::path& path);

// Merges rows (same fold/seed expected); used to assemble the dedicated
// per-subset models into one report.
DiceReport merge_reports(const std::vector<DiceReport>& reports);

}  // namespace modseg
