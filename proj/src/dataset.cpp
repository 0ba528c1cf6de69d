#include "modseg/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>

#include "modseg/error.hpp"
#include "modseg/io.hpp"
#include "modseg/nifti.hpp"

namespace modseg {

using nlohmann::json;

namespace {

std::vector<std::filesystem::path> sorted_subdirs(const std::filesystem::path& root) {
  require(std::filesystem::is_directory(root), "dataset root ", root.string(),
          " is not a directory");
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::filesystem::path find_nifti(const std::filesystem::path& dir, const std::string& subject,
                                 const std::string& suffix) {
  const auto gz = dir / (subject + "_" + suffix + ".nii.gz");
  if (std::filesystem::exists(gz)) return gz;
  const auto plain = dir / (subject + "_" + suffix + ".nii");
  if (std::filesystem::exists(plain)) return plain;
  return {};
}

Subject load_brats_subject(const std::filesystem::path& dir, const BratsLayout& layout) {
  const std::string subject_id = dir.filename().string();
  Subject subject;
  subject.volume.subject_id = subject_id;
  subject.volume.modality_names.clear();
  subject.volume.background_value = 0.0f;

  std::vector<NiftiVolume> volumes;
  for (const auto& [suffix, name] : layout.modalities) {
    const auto path = find_nifti(dir, subject_id, suffix);
    require(!path.empty(), "subject ", subject_id, " is missing modality ", name, " (no ",
            subject_id, "_", suffix, ".nii[.gz] in ", dir.string(), ")");
    volumes.push_back(load_nifti(path));
    subject.volume.modality_names.push_back(name);
    if (volumes.size() > 1) {
      const auto& a = volumes.front();
      const auto& b = volumes.back();
      require(a.nz == b.nz && a.ny == b.ny && a.nx == b.nx, "subject ", subject_id,
              ": modality ", name, " has shape [", b.nz, ",", b.ny, ",", b.nx,
              "], expected [", a.nz, ",", a.ny, ",", a.nx, "]");
    }
  }

  const auto seg_path = find_nifti(dir, subject_id, layout.seg_suffix);
  require(!seg_path.empty(), "subject ", subject_id, " is missing the label file (no ",
          subject_id, "_", layout.seg_suffix, ".nii[.gz])");
  const NiftiVolume seg = load_nifti(seg_path);
  require(seg.nz == volumes.front().nz && seg.ny == volumes.front().ny &&
              seg.nx == volumes.front().nx,
          "subject ", subject_id, ": label shape does not match the modality volumes");

  const auto m = static_cast<int64_t>(volumes.size());
  const int64_t D = volumes.front().nz, H = volumes.front().ny, W = volumes.front().nx;
  subject.volume.voxels = Tensor({m, D, H, W});
  for (int64_t i = 0; i < m; ++i)
    std::copy(volumes[static_cast<size_t>(i)].data.begin(),
              volumes[static_cast<size_t>(i)].data.end(),
              subject.volume.voxels.data() + i * D * H * W);

  subject.labels.dz = D;
  subject.labels.dy = H;
  subject.labels.dx = W;
  subject.labels.labels.resize(seg.data.size());
  for (size_t v = 0; v < seg.data.size(); ++v) {
    const float raw = seg.data[v];
    const int label = static_cast<int>(std::lround(raw));
    require(std::fabs(raw - label) < 1e-3, "subject ", subject_id,
            ": non-integer label value ", raw);
    int mapped = label;
    if (label == 3) mapped = 4;  // older BraTS releases code the enhancing core as 3
    require(mapped == 0 || mapped == 1 || mapped == 2 || mapped == 4, "subject ", subject_id,
            ": unexpected label ", label);
    subject.labels.labels[v] = static_cast<uint8_t>(mapped);
  }
  return subject;
}

}  // namespace

std::vector<Subject> ingest_brats(const std::filesystem::path& root,
                                  const BratsLayout& layout) {
  const auto dirs = sorted_subdirs(root);
  if (dirs.empty())
    std::cerr << "warning: no subject directories under " << root.string() << "\n";
  std::vector<Subject> subjects;
  subjects.reserve(dirs.size());
  for (const auto& dir : dirs) subjects.push_back(load_brats_subject(dir, layout));
  return subjects;
}

void save_subject(const std::filesystem::path& subject_dir, const Subject& subject) {
  std::filesystem::create_directories(subject_dir);
  write_tensor_f32(subject_dir / "volume.bin", subject.volume.voxels);
  write_tensor_u8(subject_dir / "labels.bin", subject.labels.labels,
                  {subject.labels.dz, subject.labels.dy, subject.labels.dx});
  json meta;
  meta["subject_id"] = subject.volume.subject_id;
  meta["shape"] = subject.volume.voxels.shape();
  meta["dtype"] = "float32";
  meta["modality_names"] = subject.volume.modality_names;
  meta["background_value"] = subject.volume.background_value;
  write_text_file(subject_dir / "meta.json", meta.dump(2));
}

bool is_internal_subject_dir(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir / "meta.json");
}

Subject load_subject(const std::filesystem::path& subject_dir) {
  const json meta = json::parse(read_text_file(subject_dir / "meta.json"));
  Subject subject;
  subject.volume.subject_id = meta.at("subject_id").get<std::string>();
  subject.volume.modality_names = meta.at("modality_names").get<std::vector<std::string>>();
  subject.volume.background_value = meta.value("background_value", 0.0f);
  require(meta.value("dtype", "float32") == std::string("float32"), subject_dir.string(),
          ": unsupported dtype in meta.json");
  subject.volume.voxels = read_tensor_f32(subject_dir / "volume.bin");
  require(subject.volume.voxels.rank() == 4, subject_dir.string(),
          ": volume.bin must be rank-4 [M,D,H,W]");
  const auto meta_shape = meta.at("shape").get<std::vector<int64_t>>();
  require(meta_shape == subject.volume.voxels.shape(), subject_dir.string(),
          ": meta.json shape disagrees with volume.bin");
  require(static_cast<size_t>(subject.volume.num_modalities()) ==
              subject.volume.modality_names.size(),
          subject_dir.string(), ": modality_names count disagrees with volume.bin");

  std::vector<int64_t> label_shape;
  subject.labels.labels = read_tensor_u8(subject_dir / "labels.bin", label_shape);
  require(label_shape.size() == 3, subject_dir.string(), ": labels.bin must be rank-3");
  subject.labels.dz = label_shape[0];
  subject.labels.dy = label_shape[1];
  subject.labels.dx = label_shape[2];
  check_subject_consistency(subject);
  return subject;
}

std::vector<Subject> load_dataset(const std::filesystem::path& root,
                                  const BratsLayout& layout) {
  const auto dirs = sorted_subdirs(root);
  if (dirs.empty()) std::cerr << "warning: empty dataset at " << root.string() << "\n";
  std::vector<Subject> subjects;
  subjects.reserve(dirs.size());
  for (const auto& dir : dirs)
    subjects.push_back(is_internal_subject_dir(dir) ? load_subject(dir)
                                                    : load_brats_subject(dir, layout));
  return subjects;
}

std::vector<std::string> dataset_subject_ids(const std::vector<Subject>& subjects) {
  std::vector<std::string> ids;
  ids.reserve(subjects.size());
  for (const auto& s : subjects) ids.push_back(s.id());
  return ids;
}

uint64_t dataset_checksum(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& file : files) {
    const auto rel = std::filesystem::relative(file, root).string();
    h = fnv1a(rel.data(), rel.size(), h);
    const auto bytes = read_file(file);
    h = fnv1a(bytes.data(), bytes.size(), h);
  }
  return h;
}

}  // namespace modseg
