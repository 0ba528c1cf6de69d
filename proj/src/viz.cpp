#include "modseg/viz.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <map>

#include "modseg/error.hpp"
#include "modseg/io.hpp"
#include "modseg/sampling.hpp"

namespace modseg {

std::vector<FeatureSample> extract_features(Model& model,
                                            const std::vector<const Subject*>& subjects,
                                            Rng& rng, int n_patches, int n_voxels,
                                            const std::vector<ModalityMask>& masks,
                                            int64_t input_side) {
  require(!subjects.empty(), "extract_features: no subjects");
  require(!masks.empty(), "extract_features: no masks");
  require(n_patches >= 1, "extract_features: need at least one patch");

  std::vector<PatchSampler> samplers;
  for (const Subject* s : subjects)
    samplers.emplace_back(*s, input_side, model.config().depth);
  const int64_t t = samplers.front().target_side();
  const int64_t v3 = t * t * t;
  const int64_t available = static_cast<int64_t>(n_patches) * v3;
  require(n_voxels >= 1 && n_voxels <= available, "requested ", n_voxels,
          " voxels but only ", available, " are available (", n_patches, " patches of ", t,
          "^3)");

  // draw the patches first, then one voxel set shared across masks
  struct PatchRef {
    size_t subject;
    PatchSample sample;
  };
  std::vector<PatchRef> patches;
  patches.reserve(static_cast<size_t>(n_patches));
  for (int i = 0; i < n_patches; ++i) {
    const size_t subject = rng.uniform_int(samplers.size());
    patches.push_back({subject, samplers[subject].sample(rng)});
  }

  std::vector<int64_t> chosen(static_cast<size_t>(available));
  for (int64_t i = 0; i < available; ++i) chosen[static_cast<size_t>(i)] = i;
  for (int64_t i = 0; i < n_voxels; ++i) {  // partial Fisher-Yates
    const int64_t j = i + static_cast<int64_t>(rng.uniform_int(
                              static_cast<uint64_t>(available - i)));
    std::swap(chosen[static_cast<size_t>(i)], chosen[static_cast<size_t>(j)]);
  }
  chosen.resize(static_cast<size_t>(n_voxels));

  // voxels grouped per patch so every patch is forwarded once per mask
  std::vector<std::vector<std::pair<int64_t, int64_t>>> per_patch(
      static_cast<size_t>(n_patches));  // (voxel in patch, output slot)
  for (int64_t k = 0; k < n_voxels; ++k) {
    const int64_t global = chosen[static_cast<size_t>(k)];
    per_patch[static_cast<size_t>(global / v3)].push_back({global % v3, k});
  }

  const int hidden = model.hidden_width();
  std::vector<FeatureSample> out(static_cast<size_t>(n_voxels) * masks.size());
  const int64_t L = model.config().num_labels;

  for (int pi = 0; pi < n_patches; ++pi) {
    const auto& entries = per_patch[static_cast<size_t>(pi)];
    if (entries.empty()) continue;
    const PatchRef& patch = patches[static_cast<size_t>(pi)];
    Tensor x({1, patch.sample.input.size(0), input_side, input_side, input_side});
    std::copy(patch.sample.input.data(), patch.sample.input.data() + patch.sample.input.numel(),
              x.data());
    for (size_t mi = 0; mi < masks.size(); ++mi) {
      const Tensor logits = model.forward(x, masks[mi], Mode::Eval);
      const Tensor& hid = model.hidden_activations();
      require(hid.size(1) == hidden, "hidden width mismatch");
      const std::string mask_name =
          masks[mi].name(subjects[patch.subject]->volume.modality_names);
      for (const auto& [voxel, slot] : entries) {
        FeatureSample& s = out[mi * static_cast<size_t>(n_voxels) + static_cast<size_t>(slot)];
        s.feature.resize(static_cast<size_t>(hidden));
        for (int c = 0; c < hidden; ++c) s.feature[static_cast<size_t>(c)] =
            hid[c * v3 + voxel];
        int best = 0;
        float best_v = logits[voxel];
        for (int64_t c = 1; c < L; ++c)
          if (logits[c * v3 + voxel] > best_v) {
            best_v = logits[c * v3 + voxel];
            best = static_cast<int>(c);
          }
        s.predicted_label = label_of_class(best);
        s.true_label = patch.sample.target[static_cast<size_t>(voxel)];
        s.mask_name = mask_name;
        s.subject_id = subjects[patch.subject]->id();
        s.patch_index = pi;
        s.voxel = {patch.sample.z0 + voxel / (t * t), patch.sample.y0 + (voxel / t) % t,
                   patch.sample.x0 + voxel % t};
      }
    }
  }
  return out;
}

Highlight highlight_from_name(const std::string& name) {
  if (name == "predicted_label") return Highlight::PredictedLabel;
  if (name == "true_label") return Highlight::TrueLabel;
  if (name == "mask_name") return Highlight::MaskName;
  fail("unknown highlight key '", name, "' (use predicted_label, true_label or mask_name)");
}

namespace {

std::string highlight_value(const FeatureSample& s, Highlight h) {
  switch (h) {
    case Highlight::PredictedLabel: return std::to_string(s.predicted_label);
    case Highlight::TrueLabel: return std::to_string(s.true_label);
    case Highlight::MaskName: return s.mask_name;
  }
  return "?";
}

const char* highlight_key(Highlight h) {
  switch (h) {
    case Highlight::PredictedLabel: return "predicted_label";
    case Highlight::TrueLabel: return "true_label";
    case Highlight::MaskName: return "mask_name";
  }
  return "?";
}

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  return out;
}

void put_px(std::vector<uint8_t>& rgb, int width, int height, int x, int y, uint8_t r,
            uint8_t g, uint8_t b) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const size_t k = 3 * (static_cast<size_t>(y) * width + x);
  rgb[k] = r;
  rgb[k + 1] = g;
  rgb[k + 2] = b;
}

void splat(std::vector<uint8_t>& rgb, int width, int height, int x, int y, uint8_t r,
           uint8_t g, uint8_t b) {
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) put_px(rgb, width, height, x + dx, y + dy, r, g, b);
}

}  // namespace

std::vector<std::filesystem::path> render_scatter(
    const std::vector<std::array<double, 2>>& points,
    const std::vector<FeatureSample>& samples, Highlight highlight,
    const std::filesystem::path& out_dir) {
  require(points.size() == samples.size(), "render_scatter: ", points.size(), " points vs ",
          samples.size(), " samples");
  require(!points.empty(), "render_scatter: nothing to draw");
  std::filesystem::create_directories(out_dir);

  double min_x = points[0][0], max_x = points[0][0], min_y = points[0][1], max_y = points[0][1];
  for (const auto& p : points) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  const double span_x = std::max(max_x - min_x, 1e-12);
  const double span_y = std::max(max_y - min_y, 1e-12);

  std::vector<std::string> values;
  for (const auto& s : samples) {
    const std::string v = highlight_value(s, highlight);
    if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
  }
  std::sort(values.begin(), values.end());

  const int width = 640, height = 640, margin = 24;
  std::vector<std::filesystem::path> written;
  for (const std::string& value : values) {
    std::vector<uint8_t> rgb(static_cast<size_t>(width) * height * 3, 255);
    size_t highlighted = 0;
    for (int pass = 0; pass < 2; ++pass)  // gray first, red on top
      for (size_t i = 0; i < points.size(); ++i) {
        const bool hit = highlight_value(samples[i], highlight) == value;
        if ((pass == 1) != hit) continue;
        const int x = margin + static_cast<int>((points[i][0] - min_x) / span_x *
                                                (width - 2 * margin));
        const int y = margin + static_cast<int>((max_y - points[i][1]) / span_y *
                                                (height - 2 * margin));
        if (hit) {
          splat(rgb, width, height, x, y, 210, 30, 30);
          ++highlighted;
        } else {
          splat(rgb, width, height, x, y, 185, 185, 185);
        }
      }
    if (highlighted == 0)
      std::fprintf(stderr, "warning: highlight class '%s' is empty, panel is all gray\n",
                   value.c_str());
    const auto path =
        out_dir / (std::string(highlight_key(highlight)) + "_" + sanitize(value) + ".png");
    write_png_rgb(path, width, height, rgb);
    written.push_back(path);
  }
  return written;
}

namespace {

void push_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void push_chunk(std::vector<uint8_t>& out, const char type[4],
                const std::vector<uint8_t>& payload) {
  push_u32(out, static_cast<uint32_t>(payload.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
  push_u32(out, crc);
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<uint8_t>& rgb) {
  require(rgb.size() == static_cast<size_t>(width) * height * 3, "write_png_rgb: bad buffer");
  // filter byte 0 per scanline
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (1 + 3 * static_cast<size_t>(width)));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const uint8_t* row = rgb.data() + 3 * static_cast<size_t>(y) * width;
    raw.insert(raw.end(), row, row + 3 * static_cast<size_t>(width));
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(bound);
  require(compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) ==
              Z_OK,
          "png: deflate failed");
  compressed.resize(bound);

  std::vector<uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<uint8_t> ihdr;
  push_u32(ihdr, static_cast<uint32_t>(width));
  push_u32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // no interlace
  push_chunk(png, "IHDR", ihdr);
  push_chunk(png, "IDAT", compressed);
  push_chunk(png, "IEND", {});
  write_file(path, png.data(), png.size());
}

void write_embedding_csv(const std::filesystem::path& path,
                         const std::vector<std::array<double, 2>>& points,
                         const std::vector<FeatureSample>& samples) {
  require(points.size() == samples.size(), "embedding csv: size mismatch");
  std::string csv = "subject,patch,z,y,x,mask,x_embed,y_embed,pred,true\n";
  char line[256];
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    std::snprintf(line, sizeof(line), "%s,%lld,%lld,%lld,%lld,%s,%.17g,%.17g,%d,%d\n",
                  s.subject_id.c_str(), static_cast<long long>(s.patch_index),
                  static_cast<long long>(s.voxel[0]), static_cast<long long>(s.voxel[1]),
                  static_cast<long long>(s.voxel[2]), s.mask_name.c_str(), points[i][0],
                  points[i][1], s.predicted_label, s.true_label);
    csv += line;
  }
  write_text_file(path, csv);
}

}  // namespace modseg
