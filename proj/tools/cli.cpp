#include "acsseg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>

#include "acsseg/config.hpp"
#include "acsseg/data_pipeline.hpp"
#include "acsseg/errors.hpp"
#include "acsseg/kernels.hpp"
#include "acsseg/metrics.hpp"
#include "acsseg/train_runtime.hpp"

namespace fs = std::filesystem;

namespace acsseg {
namespace {

struct CommonArgs {
  std::string config, data, out, checkpoint, input, split;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::optional<double> threshold;
  bool force = false;
  bool strict = false;
  bool save_prob = false;
  bool save_att = false;
  // synth
  std::size_t count = 16;
  std::string size = "96x96";
  std::vector<std::size_t> blobs{1, 3};
  std::vector<double> area{0.05, 0.2};
  double noise = 0.03;
};

std::size_t env_workers() {
  const char* v = std::getenv("ACSSEG_NUM_WORKERS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("ACSSEG_NUM_WORKERS must be a positive integer");
  return static_cast<std::size_t>(n);
}

void require_dataset_layout(const fs::path& root) {
  for (const char* sub : {"images", "masks"}) {
    if (!fs::is_directory(root / sub)) throw DataError("missing directory " + (root / sub).string());
  }
}

// Train/val/test manifests: manifest.csv when present, otherwise a seeded split.
std::vector<DatasetManifest> dataset_splits(const fs::path& root, const ExperimentConfig& cfg) {
  require_dataset_layout(root);
  if (fs::is_regular_file(root / "manifest.csv")) {
    auto splits = read_manifest_csv(root / "manifest.csv");
    for (const auto& m : splits)
      for (const auto& e : m.entries)
        if (!fs::is_regular_file(e.image) || !fs::is_regular_file(e.mask)) {
          throw DataError("manifest entry '" + e.id + "' refers to a missing file");
        }
    return splits;
  }
  const auto s = split_dataset(load_manifest(root).entries, cfg.split, cfg.seed, root);
  return {s[0], s[1], s[2]};
}

ExperimentConfig checkpoint_config(const CommonArgs& a, const fs::path& checkpoint) {
  const fs::path file = a.config.empty() ? checkpoint.parent_path() / "config.resolved.cfg" : fs::path(a.config);
  ExperimentConfig cfg = load_config(file);
  const CheckpointMeta meta = read_checkpoint_meta(checkpoint);
  if (config_hash(cfg) != meta.config_hash) {
    throw ConfigError("config " + file.string() + " does not match the checkpoint's config hash");
  }
  for (const auto& o : a.overrides) apply_override(cfg, o);
  if (a.threshold) cfg.eval_threshold = *a.threshold;
  return validate_config(cfg);
}

std::unique_ptr<AcsNet<float>> load_model(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  auto model = build_model<float>(cfg.model(), cfg.seed);
  try {
    load_checkpoint(checkpoint, *model);
  } catch (const ArchiveError& e) {
    throw DataError(e.what());
  }
  model->set_training(false);
  return model;
}

int cmd_train(const CommonArgs& a, std::ostream& out) {
  ExperimentConfig cfg = load_config(a.config);
  for (const auto& o : a.overrides) apply_override(cfg, o);
  if (a.seed) cfg.seed = *a.seed;
  validate_config(cfg);

  const auto splits = dataset_splits(a.data, cfg);
  if (splits[0].entries.empty()) throw DataError("training split is empty");
  ManifestSource train_src(splits[0].entries, cfg.resize_h, cfg.resize_w);
  ManifestSource val_src(splits[1].entries, cfg.resize_h, cfg.resize_w);

  TrainOptions opts;
  opts.out_dir = a.out;
  opts.strict_determinism = a.strict;
  opts.workers = a.strict ? 1 : env_workers();
  opts.progress = &out;
  const TrainResult r = train(cfg, train_src, val_src, opts);
  out << "trained " << r.epochs << " epoch(s), " << r.log.iterations.size() << " iteration(s); best val dice "
      << r.best_val_dice << '\n';
  return kExitOk;
}

int cmd_eval(const CommonArgs& a, std::ostream& out) {
  const ExperimentConfig cfg = checkpoint_config(a, a.checkpoint);
  DatasetManifest manifest;
  if (a.split.empty()) {
    require_dataset_layout(a.data);
    manifest = load_manifest(a.data);
  } else {
    const auto splits = dataset_splits(a.data, cfg);
    manifest = splits.at(static_cast<std::size_t>(split_from_string(a.split)));
  }
  if (manifest.entries.empty()) throw DataError("evaluation manifest is empty");
  const auto model = load_model(cfg, a.checkpoint);
  const DatasetReport report = evaluate_dataset(manifest, [&](const Sample& s) {
    const Sample r = resize_pair(s, cfg.resize_h, cfg.resize_w);
    return std::make_pair(predict_mask(*model, r.image, cfg.eval_threshold), r.mask);
  });
  fs::create_directories(a.out);
  write_report_csv(fs::path(a.out) / "metrics.csv", report);
  for (const auto& f : report.failures) out << "skipped " << f << '\n';
  out << "id,recall,specificity,precision,dice,ioup,ioub,miou,accuracy\n" << format_report_row("MEAN", report.mean) << '\n';
  return kExitOk;
}

int cmd_predict(const CommonArgs& a, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = checkpoint_config(a, a.checkpoint);
  std::vector<fs::path> inputs;
  if (fs::is_directory(a.input)) {
    for (const auto& e : fs::directory_iterator(a.input))
      if (e.is_regular_file()) inputs.push_back(e.path());
    std::sort(inputs.begin(), inputs.end());
  } else {
    inputs.push_back(a.input);
  }
  if (inputs.empty()) throw DataError("no input images in " + a.input);
  const auto model = load_model(cfg, a.checkpoint);
  fs::create_directories(a.out);

  std::size_t written = 0;
  for (const fs::path& file : inputs) {
    ImageTensor image;
    try {
      image = read_image(file);
    } catch (const DataError& e) {
      err << "skipped " << file.string() << ": " << e.what() << '\n';
      continue;
    }
    Sample resized = resize_pair(Sample{file.stem().string(), image, BinaryMask::zeros(image.height, image.width)},
                                 cfg.resize_h, cfg.resize_w);
    MultiScalePredictions<float> preds;
    {
      NoGradGuard guard;
      preds = model->forward(Var<float>(image_batch<float>({&resized.image})));
    }
    // Probability at the original resolution.
    const Tensor<float> prob_small = ops::sigmoid(preds.final).value();
    std::vector<float> prob(image.height * image.width);
    kernels::bilinear_resize(prob_small.data(), 1, cfg.resize_h, cfg.resize_w, image.height, image.width, prob.data());
    BinaryMask mask = BinaryMask::zeros(image.height, image.width);
    for (std::size_t i = 0; i < prob.size(); ++i) mask.values[i] = prob[i] >= cfg.eval_threshold ? 1 : 0;

    const std::string stem = file.stem().string();
    write_mask(fs::path(a.out) / (stem + "_mask.png"), mask);
    if (a.save_prob) write_gray(fs::path(a.out) / (stem + "_prob.png"), image.height, image.width, prob);
    if (a.save_att) {
      for (std::size_t k = 0; k < 4; ++k) {
        const Tensor<float>& att = preds.attention[k];
        if (att.empty()) continue;
        const Dims4 d = att.dims4();
        write_gray(fs::path(a.out) / (stem + "_att" + std::to_string(k + 1) + ".png"), d.h, d.w, att.storage());
      }
    }
    ++written;
  }
  out << "wrote " << written << " mask(s) to " << a.out << '\n';
  if (written == 0) throw DataError("no input image could be read");
  return kExitOk;
}

int cmd_synth(const CommonArgs& a, std::ostream& out) {
  SynthSpec spec;
  spec.count = a.count;
  const auto x = a.size.find_first_of("xX");
  if (x == std::string::npos) throw ConfigError("--size must be HxW");
  try {
    spec.height = std::stoul(a.size.substr(0, x));
    spec.width = std::stoul(a.size.substr(x + 1));
  } catch (const std::exception&) {
    throw ConfigError("--size must be HxW");
  }
  if (a.blobs.size() != 2 || a.area.size() != 2) throw ConfigError("--blobs and --area take two values");
  spec.blob_min = a.blobs[0];
  spec.blob_max = a.blobs[1];
  spec.area_lo = a.area[0];
  spec.area_hi = a.area[1];
  spec.noise_sigma = a.noise;
  spec.seed = a.seed.value_or(7);
  spec.validate();

  const fs::path root = a.out;
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!a.force) throw ConfigError("output directory " + root.string() + " exists and is not empty (use --force)");
    fs::remove_all(root / "images");
    fs::remove_all(root / "masks");
    fs::remove(root / "manifest.csv");
  }
  const auto manifest = write_dataset(root, synth_generate(spec));
  out << "wrote " << manifest.entries.size() << " samples to " << root.string() << '\n';
  return kExitOk;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '"', '\'');
  return s;
}

int fail(std::ostream& err, const char* kind, int code, const std::string& msg) {
  err << "error kind=" << kind << " exit=" << code << " msg=\"" << one_line(msg) << "\"\n";
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Polyp segmentation: train, evaluate, predict and synthesize data"};
  app.require_subcommand(1);
  CommonArgs a;

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", a.config, "Experiment config file")->required();
  train->add_option("--data", a.data, "Dataset root")->required();
  train->add_option("--out", a.out, "Run directory")->required();
  train->add_option("--seed", a.seed, "Overrides train.seed");
  train->add_option("--set", a.overrides, "section.key=value override (repeatable)");
  train->add_flag("--strict-determinism", a.strict, "Single worker, fixed batch order");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", a.data, "Dataset root")->required();
  eval->add_option("--out", a.out, "Output directory for metrics.csv")->required();
  eval->add_option("--config", a.config, "Config (default: config.resolved.cfg beside the checkpoint)");
  eval->add_option("--split", a.split, "Evaluate only this split of manifest.csv (train|val|test)");
  eval->add_option("--threshold", a.threshold, "Binarization threshold");
  eval->add_option("--set", a.overrides, "section.key=value override (repeatable)");
  eval->add_flag("--strict-determinism", a.strict, "Accepted for symmetry; evaluation is always deterministic");

  auto* predict = app.add_subcommand("predict", "Predict masks for images");
  predict->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
  predict->add_option("--input", a.input, "Image file or directory")->required();
  predict->add_option("--out", a.out, "Output directory")->required();
  predict->add_option("--config", a.config, "Config (default: config.resolved.cfg beside the checkpoint)");
  predict->add_option("--threshold", a.threshold, "Binarization threshold");
  predict->add_option("--set", a.overrides, "section.key=value override (repeatable)");
  predict->add_flag("--prob", a.save_prob, "Also write <stem>_prob.png");
  predict->add_flag("--att", a.save_att, "Also write <stem>_att{1..4}.png");
  predict->add_flag("--strict-determinism", a.strict, "Accepted for symmetry; prediction is always deterministic");

  auto* synth = app.add_subcommand("synth", "Write a synthetic blob dataset");
  synth->add_option("--out", a.out, "Dataset root")->required();
  synth->add_option("--count", a.count, "Number of samples");
  synth->add_option("--size", a.size, "HxW, divisible by 32");
  synth->add_option("--blobs", a.blobs, "min max blob count")->expected(2);
  synth->add_option("--area", a.area, "lo hi foreground fraction")->expected(2);
  synth->add_option("--noise", a.noise, "Pixel noise sigma");
  synth->add_option("--seed", a.seed, "Generator seed (default 7)");
  synth->add_flag("--force", a.force, "Overwrite a non-empty output directory");
  synth->add_flag("--strict-determinism", a.strict, "Accepted for symmetry; synthesis is always deterministic");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, "config", kExitConfig, e.what());
  }

  try {
    if (train->parsed()) return cmd_train(a, out);
    if (eval->parsed()) return cmd_eval(a, out);
    if (predict->parsed()) return cmd_predict(a, out, err);
    return cmd_synth(a, out);
  } catch (const ConfigError& e) {
    return fail(err, "config", kExitConfig, e.what());
  } catch (const DataError& e) {
    return fail(err, "data", kExitData, e.what());
  } catch (const ArchiveError& e) {
    return fail(err, "data", kExitData, e.what());
  } catch (const NumericalError& e) {
    return fail(err, "numerical", kExitNumerical, e.what());
  } catch (const std::exception& e) {
    return fail(err, "config", kExitConfig, e.what());
  }
}

}  // namespace acsseg
