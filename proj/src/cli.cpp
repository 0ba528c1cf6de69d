#include "modseg/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>

#include "modseg/dataset.hpp"
#include "modseg/error.hpp"
#include "modseg/eval.hpp"
#include "modseg/geometry.hpp"
#include "modseg/io.hpp"
#include "modseg/manifest.hpp"
#include "modseg/phantom.hpp"
#include "modseg/train.hpp"
#include "modseg/viz.hpp"

namespace modseg {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string join_args(int argc, const char* const* argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

// ---------------------------------------------------------------- configs

struct FullConfig {
  NetworkConfig network;
  TrainConfig train;
  PretrainPlan pretrain;
  int folds_k = 5;
  uint64_t folds_seed = 17;

  std::string to_json_string() const {
    json j;
    j["network"] = json::parse(network.to_json_string());
    j["train"] = json::parse(train.to_json_string());
    j["pretrain"] = json::parse(pretrain.to_json_string());
    j["folds"] = {{"k", folds_k}, {"seed", folds_seed}};
    return j.dump(2);
  }

  static FullConfig from_file(const fs::path& path) {
    FullConfig cfg;
    const json j = json::parse(read_text_file(path));
    if (j.contains("network"))
      cfg.network = NetworkConfig::from_json_string(j.at("network").dump());
    if (j.contains("train")) cfg.train = TrainConfig::from_json_string(j.at("train").dump());
    if (j.contains("pretrain"))
      cfg.pretrain = PretrainPlan::from_json_string(j.at("pretrain").dump());
    if (j.contains("folds")) {
      cfg.folds_k = j.at("folds").value("k", cfg.folds_k);
      cfg.folds_seed = j.at("folds").value("seed", cfg.folds_seed);
    }
    return cfg;
  }
};

std::vector<Subject> load_normalized(const fs::path& data_dir) {
  std::vector<Subject> subjects = load_dataset(data_dir);
  require(!subjects.empty(), "no subjects found under ", data_dir.string());
  for (Subject& s : subjects) {
    check_subject_consistency(s);
    s.volume = normalize(std::move(s.volume));
  }
  return subjects;
}

struct FoldSelection {
  std::vector<const Subject*> train;
  std::vector<const Subject*> test;
  std::vector<std::string> train_ids;
};

FoldSelection split_by_fold(const std::vector<Subject>& subjects, int fold, int k,
                            uint64_t seed) {
  const FoldSplit split = make_folds(dataset_subject_ids(subjects), k, seed);
  require(fold >= 0 && fold < k, "fold index ", fold, " out of range for k=", k);
  FoldSelection sel;
  for (int f = 0; f < k; ++f) {
    const auto ptrs = select_subjects(subjects, split.folds[static_cast<size_t>(f)]);
    if (f == fold) {
      sel.test = ptrs;
    } else {
      sel.train.insert(sel.train.end(), ptrs.begin(), ptrs.end());
      sel.train_ids.insert(sel.train_ids.end(), split.folds[static_cast<size_t>(f)].begin(),
                           split.folds[static_cast<size_t>(f)].end());
    }
  }
  return sel;
}

// ------------------------------------------------------------ subcommands

struct SynthOptions {
  uint64_t seed = 1;
  int subjects = 20;
  int side = 64;
  int modalities = 4;
  std::string out;
};

int cmd_synth(const SynthOptions& opt, const std::string& command_line) {
  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.started = iso_timestamp_now();
  manifest.seeds = {opt.seed};

  const auto subjects = generate_phantoms(opt.seed, opt.subjects, opt.side, opt.modalities);
  for (const Subject& s : subjects) save_subject(fs::path(opt.out) / s.id(), s);
  std::cout << "wrote " << subjects.size() << " phantom subjects to " << opt.out << "\n";

  manifest.data_checksum = dataset_checksum(opt.out);
  manifest.finished = iso_timestamp_now();
  manifest.write(fs::path(opt.out) / "manifest.json");
  return 0;
}

struct IngestOptions {
  std::string root;
  std::string out;
};

int cmd_ingest(const IngestOptions& opt, const std::string& command_line) {
  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.started = iso_timestamp_now();

  const auto subjects = ingest_brats(opt.root);
  for (const Subject& s : subjects) {
    check_subject_consistency(s);
    save_subject(fs::path(opt.out) / s.id(), s);
  }
  std::cout << "ingested " << subjects.size() << " subjects from " << opt.root << " into "
            << opt.out << "\n";

  if (!subjects.empty()) manifest.data_checksum = dataset_checksum(opt.out);
  manifest.finished = iso_timestamp_now();
  manifest.write(fs::path(opt.out) / "manifest.json");
  return 0;
}

struct TrainOptions {
  std::string arch = "unet";
  bool pretrain = false;
  std::string dedicated;
  std::string data;
  int fold = 0;
  std::string config;
  std::string out;
  std::string model_name;
  int64_t seed_override = -1;
};

int cmd_train(const TrainOptions& opt, const std::string& command_line) {
  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.started = iso_timestamp_now();
  manifest.data_checksum = dataset_checksum(opt.data);

  FullConfig cfg = opt.config.empty() ? FullConfig() : FullConfig::from_file(opt.config);
  if (opt.seed_override >= 0) cfg.train.seed = static_cast<uint64_t>(opt.seed_override);
  manifest.seeds = {cfg.train.seed};

  const std::vector<Subject> subjects = load_normalized(opt.data);
  const int m = subjects.front().volume.num_modalities();
  cfg.network.num_modalities = m;
  const FoldSelection sel = split_by_fold(subjects, opt.fold, cfg.folds_k, cfg.folds_seed);

  CheckpointMeta meta;
  meta.modality_names = subjects.front().volume.modality_names;
  meta.train_subject_ids = sel.train_ids;
  meta.fold_id = opt.fold;
  meta.seed = cfg.train.seed;

  const fs::path out_dir(opt.out);
  TrainResult result;

  if (!opt.dedicated.empty()) {
    require(opt.arch == "unet" && !opt.pretrain,
            "--dedicated trains a plain UNet; drop --arch/--pretrain");
    const ModalityMask subset =
        parse_subset(opt.dedicated, subjects.front().volume.modality_names);
    meta.model_name = opt.model_name.empty() ? "dedicated_" + opt.dedicated : opt.model_name;
    auto dedicated = train_dedicated(sel.train, subset, cfg.network, cfg.train, out_dir, meta);
    result = dedicated.result;
  } else if (opt.arch == "unet" || opt.arch == "dropout") {
    cfg.network.kind = NetKind::Single;
    TrainConfig train_cfg = cfg.train;
    if (opt.arch == "unet")
      train_cfg.dropout.reset();
    else if (!train_cfg.dropout)
      train_cfg.dropout = DropoutSchedule{};
    meta.model_name = opt.model_name.empty() ? opt.arch : opt.model_name;
    meta.network = cfg.network;
    auto model = build_model(cfg.network, train_cfg.seed);
    result = train(*model, sel.train, train_cfg, out_dir, meta);
  } else if (opt.arch == "multipath" || opt.arch == "sharedrep") {
    cfg.network.kind =
        opt.arch == "multipath" ? NetKind::MultipathConcat : NetKind::MultipathSharedRep;
    meta.model_name =
        opt.model_name.empty() ? opt.arch + (opt.pretrain ? "_pretrained" : "") : opt.model_name;
    meta.network = cfg.network;
    if (opt.pretrain) {
      auto paths = pretrain_paths(sel.train, cfg.network, cfg.train, cfg.pretrain,
                                  out_dir / "paths", meta);
      std::vector<Model*> path_ptrs;
      for (auto& p : paths) path_ptrs.push_back(p.get());
      auto assembled = assemble_and_finetune(path_ptrs, sel.train, cfg.network, cfg.train,
                                             cfg.pretrain, out_dir, meta);
      result = assembled.result;
    } else {
      TrainConfig train_cfg = cfg.train;
      if (!train_cfg.dropout) train_cfg.dropout = DropoutSchedule{};
      auto model = build_model(cfg.network, train_cfg.seed);
      result = train(*model, sel.train, train_cfg, out_dir, meta);
    }
  } else {
    fail("unknown --arch '", opt.arch, "'");
  }

  manifest.config_json = cfg.to_json_string();
  manifest.checkpoints.push_back(result.final_checkpoint.string());
  manifest.add_artifact(out_dir / "loss_history.csv");
  manifest.finished = iso_timestamp_now();
  manifest.write(out_dir / "manifest.json");
  std::cout << "trained " << meta.model_name << ": " << result.history.size() << " epochs, "
            << result.patches_consumed << " patches, final loss "
            << result.history.back().mean_loss << "\n";
  return 0;
}

struct EvalOptionsCli {
  std::string model_dir;
  std::string data;
  int fold = -1;
  std::string subsets = "all";
  std::string out = "report.csv";
  int64_t input_side = 0;
  int folds_k = 5;
  uint64_t folds_seed = 17;
};

int cmd_eval(const EvalOptionsCli& opt, const std::string& command_line) {
  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.started = iso_timestamp_now();
  manifest.data_checksum = dataset_checksum(opt.data);

  LoadedCheckpoint ckpt = load_checkpoint(opt.model_dir);
  manifest.checkpoints.push_back(opt.model_dir);
  manifest.seeds = {ckpt.meta.seed};

  const std::vector<Subject> subjects = load_normalized(opt.data);
  std::vector<const Subject*> test;
  if (opt.fold >= 0) {
    test = split_by_fold(subjects, opt.fold, opt.folds_k, opt.folds_seed).test;
  } else {
    for (const Subject& s : subjects)
      if (std::find(ckpt.meta.train_subject_ids.begin(), ckpt.meta.train_subject_ids.end(),
                    s.id()) == ckpt.meta.train_subject_ids.end())
        test.push_back(&s);
  }
  require(!test.empty(), "no test subjects left after excluding the training fold");

  EvalOptions eval_opt;
  eval_opt.input_side = opt.input_side;
  std::vector<ModalityMask> subsets;
  if (!ckpt.meta.channel_subset.empty()) {
    eval_opt.channel_subset = ckpt.meta.channel_subset;
    subsets = {ModalityMask::full(static_cast<int>(ckpt.meta.channel_subset.size()))};
    if (opt.subsets != "all")
      std::cerr << "note: dedicated checkpoint, evaluating its own subset only\n";
  } else if (opt.subsets == "all") {
    subsets = enumerate_subsets(ckpt.model->input_arity());
  } else {
    std::istringstream in(opt.subsets);
    std::string token;
    while (std::getline(in, token, ','))
      subsets.push_back(parse_subset(token, ckpt.meta.modality_names));
    require(!subsets.empty(), "no subsets parsed from '", opt.subsets, "'");
  }

  const DiceReport report =
      evaluate_subsets(*ckpt.model, ckpt.meta.model_name, test, subsets,
                       ckpt.meta.train_subject_ids, eval_opt, ckpt.meta.fold_id,
                       ckpt.meta.seed);
  emit_report({report}, opt.out, ReportFormat::Csv, ckpt.meta.modality_names);
  manifest.add_artifact(opt.out);
  manifest.finished = iso_timestamp_now();
  manifest.write(fs::path(opt.out).parent_path().empty()
                     ? fs::path("manifest.json")
                     : fs::path(opt.out).parent_path() / "manifest.json");
  std::cout << "evaluated " << ckpt.meta.model_name << " on " << test.size() << " subjects, "
            << report.rows.size() << " report rows -> " << opt.out << "\n";
  return 0;
}

struct ReportOptions {
  std::vector<std::string> inputs;
  std::string out = "report.md";
  std::string format = "markdown";
  std::string modalities = "T1W,T1WC,T2W,FLAIR";
};

std::vector<std::string> split_csv_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string token;
  while (std::getline(in, token, ','))
    if (!token.empty()) out.push_back(token);
  return out;
}

int cmd_report(const ReportOptions& opt, const std::string&) {
  require(!opt.inputs.empty(), "report: no input csv files");
  std::vector<DiceReport> reports;
  for (const auto& file : opt.inputs) {
    auto parsed = parse_report_csv(file);
    reports.insert(reports.end(), parsed.begin(), parsed.end());
  }
  const auto names = split_csv_list(opt.modalities);
  emit_report(reports, opt.out,
              opt.format == "csv" ? ReportFormat::Csv : ReportFormat::Markdown, names);
  std::cout << "wrote " << opt.out << "\n";
  return 0;
}

struct VisualizeOptions {
  std::string model_dir;
  std::string data;
  int n_voxels = 1000;
  int n_patches = 16;
  std::string masks = "default";
  std::string out;
  uint64_t seed = 7;
  double perplexity = 30.0;
  int64_t input_side = 0;
};

int cmd_visualize(const VisualizeOptions& opt, const std::string& command_line) {
  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.started = iso_timestamp_now();
  manifest.seeds = {opt.seed};
  manifest.data_checksum = dataset_checksum(opt.data);

  LoadedCheckpoint ckpt = load_checkpoint(opt.model_dir);
  require(ckpt.meta.channel_subset.empty(), "visualize expects a full-arity model");
  const std::vector<Subject> subjects = load_normalized(opt.data);
  std::vector<const Subject*> test;
  for (const Subject& s : subjects)
    if (std::find(ckpt.meta.train_subject_ids.begin(), ckpt.meta.train_subject_ids.end(),
                  s.id()) == ckpt.meta.train_subject_ids.end())
      test.push_back(&s);
  require(!test.empty(), "no subjects outside the training fold to visualize");

  const int m = ckpt.model->input_arity();
  std::vector<ModalityMask> masks;
  if (opt.masks == "default") {
    masks.push_back(ModalityMask::full(m));
    for (int i = 0; i < m; ++i) {
      ModalityMask single;
      single.present.assign(static_cast<size_t>(m), 0);
      single.present[static_cast<size_t>(i)] = 1;
      masks.push_back(single);
    }
  } else {
    for (const auto& token : split_csv_list(opt.masks))
      masks.push_back(parse_subset(token, ckpt.meta.modality_names));
    require(!masks.empty(), "no masks parsed from '", opt.masks, "'");
  }

  int64_t input_side = opt.input_side;
  if (input_side == 0) input_side = smallest_valid_input(ckpt.meta.network.depth, 12);

  Rng rng(opt.seed);
  const auto samples =
      extract_features(*ckpt.model, test, rng, opt.n_patches, opt.n_voxels, masks, input_side);

  std::vector<std::vector<float>> features;
  features.reserve(samples.size());
  for (const auto& s : samples) features.push_back(s.feature);
  TsneParams tsne_params;
  tsne_params.perplexity = opt.perplexity;
  tsne_params.seed = opt.seed;
  const auto points = compute_tsne(features, tsne_params);

  const fs::path out_dir(opt.out);
  fs::create_directories(out_dir);
  write_embedding_csv(out_dir / "embedding.csv", points, samples);
  manifest.add_artifact(out_dir / "embedding.csv");
  for (const Highlight h :
       {Highlight::MaskName, Highlight::PredictedLabel, Highlight::TrueLabel})
    for (const auto& png : render_scatter(points, samples, h, out_dir))
      manifest.add_artifact(png);

  json meta;
  meta["perplexity"] = tsne_params.perplexity;
  meta["iterations"] = tsne_params.iterations;
  meta["seed"] = opt.seed;
  meta["hidden_width"] = ckpt.model->hidden_width();
  meta["n_voxels"] = opt.n_voxels;
  meta["n_patches"] = opt.n_patches;
  meta["model"] = ckpt.meta.model_name;
  write_text_file(out_dir / "meta.json", meta.dump(2));

  manifest.finished = iso_timestamp_now();
  manifest.write(out_dir / "manifest.json");
  std::cout << "embedded " << samples.size() << " samples (" << opt.n_voxels << " voxels x "
            << masks.size() << " masks) -> " << opt.out << "\n";
  return 0;
}

// ------------------------------------------------------------- repro-toy

struct ReproOptions {
  std::string out;
  uint64_t seed = 1;
  int subjects = 25;
  int side = 64;
  int modalities = 4;
  int width = 4;
  int pathway_width = 0;  // 0: same as width
  int depth = 3;
  int epochs = 15;
  int path_epochs = 10;
  int fusion_epochs = 10;
  int dedicated_epochs = 8;
  int batches = 50;
  int batch_size = 4;
  int input_side = 44;
  int64_t eval_input_side = 0;
  double learning_rate = 1e-3;
  int n_voxels = 800;
  int n_patches = 16;
  bool no_viz = false;
  bool no_dedicated = false;
};

int cmd_repro_toy(const ReproOptions& opt, const std::string& command_line) {
  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.started = iso_timestamp_now();
  manifest.seeds = {opt.seed};

  const fs::path out_dir(opt.out);
  fs::create_directories(out_dir);

  // 1. synthesize phantoms
  std::cout << "[repro-toy] synthesizing " << opt.subjects << " phantoms\n";
  std::vector<Subject> subjects =
      generate_phantoms(opt.seed, opt.subjects, opt.side, opt.modalities);
  for (const Subject& s : subjects) save_subject(out_dir / "data" / s.id(), s);
  manifest.data_checksum = dataset_checksum(out_dir / "data");
  for (Subject& s : subjects) s.volume = normalize(std::move(s.volume));

  const FoldSelection sel = split_by_fold(subjects, 0, 5, 17);
  std::cout << "[repro-toy] " << sel.train.size() << " training / " << sel.test.size()
            << " test subjects\n";

  NetworkConfig net;
  net.base_width = opt.width;
  net.pathway_width = opt.pathway_width > 0 ? opt.pathway_width : opt.width;
  net.depth = opt.depth;
  net.num_modalities = opt.modalities;
  net.num_labels = 4;

  TrainConfig base;
  base.epochs = opt.epochs;
  base.batches_per_epoch = opt.batches;
  base.batch_size = opt.batch_size;
  base.input_side = opt.input_side;
  base.adam.learning_rate = opt.learning_rate;
  base.seed = opt.seed;
  base.checkpoint_every = 0;

  const DropoutSchedule toy_schedule{0.125, std::max(1, opt.epochs / 3), 0.5};
  PretrainPlan plan;
  plan.path_epochs = opt.path_epochs;
  plan.fusion_epochs = opt.fusion_epochs;

  CheckpointMeta meta;
  meta.modality_names = subjects.front().volume.modality_names;
  meta.train_subject_ids = sel.train_ids;
  meta.fold_id = 0;
  meta.seed = opt.seed;

  EvalOptions eval_opt;
  eval_opt.input_side = opt.eval_input_side;
  const auto all_subsets = enumerate_subsets(opt.modalities);
  std::vector<DiceReport> reports;

  auto train_and_eval_single = [&](const std::string& name, NetKind kind, bool with_dropout,
                                   uint64_t seed_salt) {
    std::cout << "[repro-toy] training " << name << "\n";
    NetworkConfig cfg = net;
    cfg.kind = kind;
    TrainConfig tc = base;
    tc.seed = base.seed ^ (seed_salt * 0x9e3779b97f4a7c15ull);
    if (with_dropout) tc.dropout = toy_schedule;
    CheckpointMeta m = meta;
    m.model_name = name;
    m.network = cfg;
    m.seed = tc.seed;
    auto model = build_model(cfg, tc.seed);
    train(*model, sel.train, tc, out_dir / ("model_" + name), m);
    manifest.checkpoints.push_back((out_dir / ("model_" + name) / "final").string());
    std::cout << "[repro-toy] evaluating " << name << "\n";
    reports.push_back(evaluate_subsets(*model, name, sel.test, all_subsets, sel.train_ids,
                                       eval_opt, 0, tc.seed));
  };

  train_and_eval_single("UNet", NetKind::Single, false, 1);
  train_and_eval_single("Dropout", NetKind::Single, true, 2);
  train_and_eval_single("Multipath", NetKind::MultipathConcat, true, 3);
  train_and_eval_single("SharedRep", NetKind::MultipathSharedRep, true, 4);

  // pretrained paths, shared between the two fusion variants
  std::cout << "[repro-toy] pretraining " << opt.modalities << " single-modality paths\n";
  NetworkConfig concat_cfg = net;
  concat_cfg.kind = NetKind::MultipathConcat;
  TrainConfig pretrain_cfg = base;
  pretrain_cfg.seed = base.seed ^ (5 * 0x9e3779b97f4a7c15ull);
  CheckpointMeta m_pre = meta;
  m_pre.model_name = "paths";
  auto paths = pretrain_paths(sel.train, concat_cfg, pretrain_cfg, plan, out_dir / "paths",
                              m_pre);
  std::vector<Model*> path_ptrs;
  for (auto& p : paths) path_ptrs.push_back(p.get());

  for (const auto& [name, kind] :
       std::vector<std::pair<std::string, NetKind>>{
           {"Multipath+Pretraining", NetKind::MultipathConcat},
           {"SharedRep+Pretraining", NetKind::MultipathSharedRep}}) {
    std::cout << "[repro-toy] fusing " << name << "\n";
    NetworkConfig cfg = net;
    cfg.kind = kind;
    CheckpointMeta m = meta;
    m.model_name = name;
    m.network = cfg;
    TrainConfig tc = pretrain_cfg;
    auto assembled = assemble_and_finetune(path_ptrs, sel.train, cfg, tc, plan,
                                           out_dir / ("model_" + name), m);
    manifest.checkpoints.push_back((out_dir / ("model_" + name) / "final").string());
    std::cout << "[repro-toy] evaluating " << name << "\n";
    reports.push_back(evaluate_subsets(*assembled.model, name, sel.test, all_subsets,
                                       sel.train_ids, eval_opt, 0, tc.seed));
    if (!opt.no_viz) {
      std::cout << "[repro-toy] embedding " << name << "\n";
      std::vector<ModalityMask> masks;
      masks.push_back(ModalityMask::full(opt.modalities));
      for (int i = 0; i < opt.modalities; ++i) {
        ModalityMask single;
        single.present.assign(static_cast<size_t>(opt.modalities), 0);
        single.present[static_cast<size_t>(i)] = 1;
        masks.push_back(single);
      }
      Rng rng(opt.seed ^ 0x715e);
      const auto samples = extract_features(*assembled.model, sel.test, rng, opt.n_patches,
                                            opt.n_voxels, masks, opt.input_side);
      std::vector<std::vector<float>> features;
      for (const auto& s : samples) features.push_back(s.feature);
      TsneParams tsne_params;
      tsne_params.seed = opt.seed;
      tsne_params.perplexity = std::min(30.0, static_cast<double>(samples.size()) / 4.0);
      const auto points = compute_tsne(features, tsne_params);
      const fs::path viz_dir = out_dir / ("viz_" + name);
      fs::create_directories(viz_dir);
      write_embedding_csv(viz_dir / "embedding.csv", points, samples);
      for (const Highlight h :
           {Highlight::MaskName, Highlight::PredictedLabel, Highlight::TrueLabel})
        render_scatter(points, samples, h, viz_dir);
    }
  }

  if (!opt.no_dedicated) {
    std::vector<DiceReport> dedicated_reports;
    for (const auto& subset : all_subsets) {
      const std::string subset_name = subset.name(meta.modality_names);
      std::cout << "[repro-toy] dedicated model for " << subset_name << "\n";
      TrainConfig tc = base;
      tc.epochs = opt.dedicated_epochs;
      tc.seed = base.seed ^ fnv1a(subset_name.data(), subset_name.size());
      CheckpointMeta m = meta;
      m.model_name = "Dedicated";
      auto dedicated = train_dedicated(sel.train, subset, net, tc,
                                       out_dir / ("model_dedicated_" + subset_name), m);
      EvalOptions ded_opt = eval_opt;
      ded_opt.channel_subset = dedicated.channel_subset;
      dedicated_reports.push_back(evaluate_subsets(
          *dedicated.model, "Dedicated", sel.test,
          {ModalityMask::full(static_cast<int>(dedicated.channel_subset.size()))},
          sel.train_ids, ded_opt, 0, tc.seed));
    }
    reports.push_back(merge_reports(dedicated_reports));
  }

  emit_report(reports, out_dir / "report.csv", ReportFormat::Csv, meta.modality_names);
  emit_report(reports, out_dir / "report.md", ReportFormat::Markdown, meta.modality_names);
  manifest.add_artifact(out_dir / "report.csv");
  manifest.add_artifact(out_dir / "report.md");
  manifest.finished = iso_timestamp_now();
  manifest.write(out_dir / "manifest.json");
  size_t rows = 0;
  for (const auto& r : reports) rows += r.rows.size();
  std::cout << "[repro-toy] done: " << rows << " report rows -> "
            << (out_dir / "report.csv") << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"modseg: modality-robust multi-modal MRI segmentation toolkit"};
  app.require_subcommand(1);
  const std::string command_line = join_args(argc, argv);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic phantom dataset");
  synth_cmd->add_option("--seed", synth.seed, "RNG seed");
  synth_cmd->add_option("--subjects", synth.subjects, "Number of subjects");
  synth_cmd->add_option("--side", synth.side, "Cubic volume side (>= 32)");
  synth_cmd->add_option("--modalities", synth.modalities, "Number of modalities");
  synth_cmd->add_option("--out", synth.out, "Output dataset directory")->required();

  IngestOptions ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Convert a BraTS-style directory");
  ingest_cmd->add_option("--root", ingest.root, "BraTS dataset root")->required();
  ingest_cmd->add_option("--out", ingest.out, "Output dataset directory")->required();

  TrainOptions train_opt;
  auto* train_cmd = app.add_subcommand("train", "Train a segmentation network");
  train_cmd->add_option("--arch", train_opt.arch, "unet | dropout | multipath | sharedrep");
  train_cmd->add_flag("--pretrain", train_opt.pretrain,
                      "Pretrain one UNet per modality, then train the fusion");
  train_cmd->add_option("--dedicated", train_opt.dedicated,
                        "Train a dedicated UNet for this subset (e.g. T1WC+FLAIR)");
  train_cmd->add_option("--data", train_opt.data, "Dataset directory")->required();
  train_cmd->add_option("--fold", train_opt.fold, "Test fold index held out of training");
  train_cmd->add_option("--config", train_opt.config, "JSON config file");
  train_cmd->add_option("--out", train_opt.out, "Output directory")->required();
  train_cmd->add_option("--model-name", train_opt.model_name, "Name used in reports");
  train_cmd->add_option("--seed", train_opt.seed_override, "Override the config seed");

  EvalOptionsCli eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint over modality subsets");
  eval_cmd->add_option("--model-dir", eval_opt.model_dir, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", eval_opt.data, "Dataset directory")->required();
  eval_cmd->add_option("--fold", eval_opt.fold,
                       "Test fold index (default: all subjects outside the training set)");
  eval_cmd->add_option("--subsets", eval_opt.subsets, "all or NAME[,NAME...]");
  eval_cmd->add_option("--out", eval_opt.out, "Report CSV path");
  eval_cmd->add_option("--input-side", eval_opt.input_side,
                       "Inference patch side (0 = automatic)");
  eval_cmd->add_option("--folds-k", eval_opt.folds_k, "Number of folds");
  eval_cmd->add_option("--folds-seed", eval_opt.folds_seed, "Fold split seed");

  ReportOptions report_opt;
  auto* report_cmd = app.add_subcommand("report", "Merge report CSVs into tables");
  report_cmd->add_option("--in", report_opt.inputs, "Input report CSVs")->required();
  report_cmd->add_option("--out", report_opt.out, "Output file");
  report_cmd->add_option("--format", report_opt.format, "markdown | csv");
  report_cmd->add_option("--modalities", report_opt.modalities, "Column order");

  VisualizeOptions viz_opt;
  auto* viz_cmd = app.add_subcommand("visualize", "t-SNE embedding of hidden features");
  viz_cmd->add_option("--model-dir", viz_opt.model_dir, "Checkpoint directory")->required();
  viz_cmd->add_option("--data", viz_opt.data, "Dataset directory")->required();
  viz_cmd->add_option("--n-voxels", viz_opt.n_voxels, "Voxels to embed");
  viz_cmd->add_option("--n-patches", viz_opt.n_patches, "Patches to sample");
  viz_cmd->add_option("--masks", viz_opt.masks,
                      "default (All + singles) or NAME[,NAME...]");
  viz_cmd->add_option("--out", viz_opt.out, "Output directory")->required();
  viz_cmd->add_option("--seed", viz_opt.seed, "RNG seed");
  viz_cmd->add_option("--perplexity", viz_opt.perplexity, "t-SNE perplexity");
  viz_cmd->add_option("--input-side", viz_opt.input_side, "Patch side (0 = automatic)");

  ReproOptions repro;
  auto* repro_cmd = app.add_subcommand(
      "repro-toy", "Full toy pipeline: synth, train 7 variants, eval, report, visualize");
  repro_cmd->add_option("--out", repro.out, "Output directory")->required();
  repro_cmd->add_option("--seed", repro.seed, "Master seed");
  repro_cmd->add_option("--subjects", repro.subjects, "Phantom count");
  repro_cmd->add_option("--side", repro.side, "Phantom side");
  repro_cmd->add_option("--modalities", repro.modalities, "Modalities");
  repro_cmd->add_option("--width", repro.width, "Base width c");
  repro_cmd->add_option("--pathway-width", repro.pathway_width,
                        "Pathway width (0 = same as width)");
  repro_cmd->add_option("--depth", repro.depth, "Resolution levels");
  repro_cmd->add_option("--epochs", repro.epochs, "Epochs for jointly trained variants");
  repro_cmd->add_option("--path-epochs", repro.path_epochs, "Pretraining epochs per path");
  repro_cmd->add_option("--fusion-epochs", repro.fusion_epochs, "Fusion training epochs");
  repro_cmd->add_option("--dedicated-epochs", repro.dedicated_epochs,
                        "Epochs per dedicated model");
  repro_cmd->add_option("--batches", repro.batches, "Batches per epoch");
  repro_cmd->add_option("--batch-size", repro.batch_size, "Patches per batch");
  repro_cmd->add_option("--input-side", repro.input_side, "Training patch side");
  repro_cmd->add_option("--eval-input-side", repro.eval_input_side,
                        "Inference patch side (0 = automatic)");
  repro_cmd->add_option("--lr", repro.learning_rate, "Adam learning rate");
  repro_cmd->add_option("--n-voxels", repro.n_voxels, "Voxels for the embedding");
  repro_cmd->add_option("--n-patches", repro.n_patches, "Patches for the embedding");
  repro_cmd->add_flag("--no-viz", repro.no_viz, "Skip the embedding step");
  repro_cmd->add_flag("--no-dedicated", repro.no_dedicated, "Skip the 15 dedicated models");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth, command_line);
    if (ingest_cmd->parsed()) return cmd_ingest(ingest, command_line);
    if (train_cmd->parsed()) return cmd_train(train_opt, command_line);
    if (eval_cmd->parsed()) return cmd_eval(eval_opt, command_line);
    if (report_cmd->parsed()) return cmd_report(report_opt, command_line);
    if (viz_cmd->parsed()) return cmd_visualize(viz_opt, command_line);
    if (repro_cmd->parsed()) return cmd_repro_toy(repro, command_line);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace modseg
