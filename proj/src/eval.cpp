#include "modseg/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "modseg/error.hpp"
#include "modseg/geometry.hpp"
#include "modseg/io.hpp"
#include "modseg/sampling.hpp"

namespace modseg {

double dice(const RegionMask& pred, const RegionMask& truth) {
  require(pred.dz == truth.dz && pred.dy == truth.dy && pred.dx == truth.dx &&
              pred.mask.size() == truth.mask.size(),
          "dice: mask shapes differ");
  int64_t p = 0, t = 0, both = 0;
  for (size_t i = 0; i < pred.mask.size(); ++i) {
    const bool a = pred.mask[i] != 0, b = truth.mask[i] != 0;
    p += a;
    t += b;
    both += a && b;
  }
  if (p + t == 0) return 1.0;  // agreement on absence
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

std::vector<int64_t> tile_origins(int64_t extent, int64_t tile) {
  std::vector<int64_t> origins;
  for (int64_t o = 0; o < extent; o += tile) origins.push_back(o);
  return origins;
}

LabelVolume sliding_window_predict(Model& model, const MultiModalVolume& volume,
                                   const ModalityMask& mask, int64_t input_side) {
  require(!mask.empty(), "prediction with empty modality mask");
  require(mask.m_total() == model.input_arity(), "mask arity ", mask.m_total(),
          " does not match model arity ", model.input_arity());
  require(volume.num_modalities() == model.input_arity(), "volume has ",
          volume.num_modalities(), " modalities, model expects ", model.input_arity());
  const int64_t t = output_size(input_side, model.config().depth);
  const int64_t D = volume.dim_z(), H = volume.dim_y(), W = volume.dim_x();

  LabelVolume out;
  out.dz = D;
  out.dy = H;
  out.dx = W;
  out.labels.assign(static_cast<size_t>(D * H * W), 0);

  Tensor x({1, model.input_arity(), input_side, input_side, input_side});
  const int64_t L = model.config().num_labels;
  for (const int64_t z0 : tile_origins(D, t))
    for (const int64_t y0 : tile_origins(H, t))
      for (const int64_t x0 : tile_origins(W, t)) {
        Tensor patch = extract_input_patch(volume, z0, y0, x0, input_side, t);
        std::copy(patch.data(), patch.data() + patch.numel(), x.data());
        const Tensor logits = model.forward(x, mask, Mode::Eval);
        const int64_t v3 = t * t * t;
        for (int64_t z = z0; z < std::min(D, z0 + t); ++z)
          for (int64_t y = y0; y < std::min(H, y0 + t); ++y)
            for (int64_t xx = x0; xx < std::min(W, x0 + t); ++xx) {
              const int64_t local = ((z - z0) * t + (y - y0)) * t + (xx - x0);
              int best = 0;
              float best_v = logits[local];
              for (int64_t c = 1; c < L; ++c) {
                const float v = logits[c * v3 + local];
                if (v > best_v) {
                  best_v = v;
                  best = static_cast<int>(c);
                }
              }
              out.labels[static_cast<size_t>((z * H + y) * W + xx)] =
                  static_cast<uint8_t>(label_of_class(best));
            }
      }
  return out;
}

DiceReport evaluate_subsets(Model& model, const std::string& model_name,
                            const std::vector<const Subject*>& test_subjects,
                            const std::vector<ModalityMask>& subsets,
                            const std::vector<std::string>& train_subject_ids,
                            const EvalOptions& options, int fold_id, uint64_t seed) {
  require(!test_subjects.empty(), "evaluate_subsets: empty test fold");
  require(!subsets.empty(), "evaluate_subsets: no subsets requested");
  for (const Subject* s : test_subjects)
    require(std::find(train_subject_ids.begin(), train_subject_ids.end(), s->id()) ==
                train_subject_ids.end(),
            "evaluation fold leaks training subject '", s->id(), "'");

  DiceReport report;
  report.fold_id = fold_id;
  report.seed = seed;

  struct Acc {
    double sum[3] = {0, 0, 0};
    int n = 0;
  };
  std::vector<Acc> acc(subsets.size());
  std::vector<std::string> subset_names(subsets.size());

  for (const Subject* subject : test_subjects) {
    MultiModalVolume reduced;
    const MultiModalVolume* vol = &subject->volume;
    if (!options.channel_subset.empty()) {
      reduced = subject->volume.select_channels(options.channel_subset);
      vol = &reduced;
    }
    int64_t input_side = options.input_side;
    if (input_side == 0) {
      const int64_t max_side = std::max({vol->dim_z(), vol->dim_y(), vol->dim_x()});
      input_side = smallest_valid_input(model.config().depth, std::min<int64_t>(32, max_side));
    }
    const auto truth_regions = derive_regions(subject->labels);
    for (size_t si = 0; si < subsets.size(); ++si) {
      subset_names[si] = subsets[si].name(vol->modality_names);
      const LabelVolume pred = sliding_window_predict(model, *vol, subsets[si], input_side);
      const auto pred_regions = derive_regions(pred);
      for (size_t r = 0; r < 3; ++r)
        acc[si].sum[r] += dice(pred_regions[r], truth_regions[r]);
      acc[si].n += 1;
    }
  }

  for (size_t r = 0; r < 3; ++r)
    for (size_t si = 0; si < subsets.size(); ++si)
      report.rows.push_back({model_name, region_name(kAllRegions[r]), subset_names[si],
                             acc[si].sum[r] / acc[si].n, acc[si].n});
  return report;
}

namespace {

std::string csv_of_reports(const std::vector<DiceReport>& reports) {
  std::string csv = "model,region,subset,mean_dice,n_subjects,fold,seed\n";
  char line[256];
  for (const auto& report : reports)
    for (const auto& row : report.rows) {
      std::snprintf(line, sizeof(line), "%s,%s,%s,%.17g,%d,%d,%llu\n", row.model.c_str(),
                    row.region.c_str(), row.subset.c_str(), row.mean_dice, row.n_subjects,
                    report.fold_id, static_cast<unsigned long long>(report.seed));
      csv += line;
    }
  return csv;
}

std::string markdown_of_reports(const std::vector<DiceReport>& reports,
                                const std::vector<std::string>& modality_names) {
  const auto subsets = enumerate_subsets(static_cast<int>(modality_names.size()));
  std::vector<std::string> subset_names;
  for (const auto& s : subsets) subset_names.push_back(s.name(modality_names));

  std::vector<std::string> models;
  for (const auto& report : reports)
    for (const auto& row : report.rows)
      if (std::find(models.begin(), models.end(), row.model) == models.end())
        models.push_back(row.model);

  std::ostringstream md;
  for (const Region region : kAllRegions) {
    const std::string rname = region_name(region);
    md << "## " << rname << "\n\n";
    md << "Mean Dice (%) per modality subset.\n\n";
    md << "| model |";
    for (const auto& s : subset_names) md << " " << s << " |";
    md << "\n|---|";
    for (size_t i = 0; i < subset_names.size(); ++i) md << "---|";
    md << "\n";
    for (const auto& model : models) {
      md << "| " << model << " |";
      for (const auto& subset : subset_names) {
        double value = -1.0;
        int count = 0;
        for (const auto& report : reports)
          for (const auto& row : report.rows)
            if (row.model == model && row.region == rname && row.subset == subset) {
              value = (value < 0 ? 0.0 : value) + row.mean_dice;
              ++count;
            }
        if (count == 0) {
          md << " - |";
        } else {
          char cell[32];
          std::snprintf(cell, sizeof(cell), " %.1f |", 100.0 * value / count);
          md << cell;
        }
      }
      md << "\n";
    }
    md << "\n";
  }
  return md.str();
}

}  // namespace

void emit_report(const std::vector<DiceReport>& reports, const std::filesystem::path& path,
                 ReportFormat format, const std::vector<std::string>& modality_names) {
  require(!reports.empty(), "emit_report: no reports");
  if (format == ReportFormat::Csv)
    write_text_file(path, csv_of_reports(reports));
  else
    write_text_file(path, markdown_of_reports(reports, modality_names));
}

std::vector<DiceReport> parse_report_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "empty report csv ", path.string());
  require(line == "model,region,subset,mean_dice,n_subjects,fold,seed",
          "unexpected report csv header in ", path.string());
  std::map<std::pair<int, uint64_t>, DiceReport> grouped;
  std::vector<std::pair<int, uint64_t>> order;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row_in(line);
    std::string model, region, subset, dice_s, n_s, fold_s, seed_s;
    std::getline(row_in, model, ',');
    std::getline(row_in, region, ',');
    std::getline(row_in, subset, ',');
    std::getline(row_in, dice_s, ',');
    std::getline(row_in, n_s, ',');
    std::getline(row_in, fold_s, ',');
    std::getline(row_in, seed_s, ',');
    require(!seed_s.empty(), "malformed report row: ", line);
    const std::pair<int, uint64_t> key{std::stoi(fold_s), std::stoull(seed_s)};
    if (grouped.find(key) == grouped.end()) {
      order.push_back(key);
      grouped[key].fold_id = key.first;
      grouped[key].seed = key.second;
    }
    grouped[key].rows.push_back(
        {model, region, subset, std::stod(dice_s), std::stoi(n_s)});
  }
  std::vector<DiceReport> out;
  for (const auto& key : order) out.push_back(grouped[key]);
  return out;
}

DiceReport merge_reports(const std::vector<DiceReport>& reports) {
  require(!reports.empty(), "merge_reports: nothing to merge");
  DiceReport merged;
  merged.fold_id = reports.front().fold_id;
  merged.seed = reports.front().seed;
  for (const auto& report : reports)
    merged.rows.insert(merged.rows.end(), report.rows.begin(), report.rows.end());
  return merged;
}

}  // namespace modseg
