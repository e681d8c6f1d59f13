#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "hns/checkpoint.hpp"
#include "hns/config.hpp"
#include "hns/data_pipeline.hpp"
#include "hns/errors.hpp"
#include "hns/losses.hpp"
#include "hns/metrics.hpp"
#include "hns/train_eval.hpp"

namespace hns::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir = "hns_out";
};

void add_common(CLI::App& cmd, Common& common) {
  cmd.add_option("-c,--config", common.config_path, "Run config file (TOML syntax)");
  cmd.add_option("-s,--set", common.overrides, "Override a config key: section.key=value (repeatable)");
  cmd.add_option("-o,--output-dir", common.output_dir, "Directory for all outputs");
}

RunConfig resolve_config(const Common& common, const RunConfig* base = nullptr) {
  RunConfig config = base ? *base : RunConfig{};
  if (!common.config_path.empty()) config = load_run_config(common.config_path);
  for (const auto& o : common.overrides) config.set(o);
  config.validate();
  return config;
}

fs::path prepare_output(const Common& common, const RunConfig& config) {
  const fs::path out = common.output_dir;
  fs::create_directories(out);
  save_run_config(out / "resolved_config.toml", config);
  return out;
}

fs::path checkpoint_root(const fs::path& out, const RunConfig& config) {
  const fs::path dir = config.train.checkpoint_dir;
  return dir.is_absolute() ? dir : out / dir;
}

bool split_exists(const RunConfig& config, const std::string& split) {
  if (split.empty()) return false;
  const auto spec = config.dataset(split);
  return fs::is_directory(spec.image_dir) && fs::is_directory(spec.mask_dir);
}

fs::path resolve_checkpoint(const fs::path& path) {
  if (fs::exists(path / "manifest.json")) return path;
  std::ifstream latest(path / "LATEST");
  std::string name;
  if (latest >> name && fs::exists(path / name / "manifest.json")) return path / name;
  throw IoError("no checkpoint found at " + path.string());
}

std::vector<Variant> parse_variants(const std::string& text) {
  std::vector<Variant> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (!item.empty()) out.push_back(parse_variant(item));
  }
  if (out.empty()) throw ConfigError("no variants given");
  return out;
}

// --- subcommands ----------------------------------------------------------

struct PrepareArgs {
  Common common;
  std::string split;
};

int cmd_prepare(const PrepareArgs& args) {
  const auto config = resolve_config(args.common);
  const auto out = prepare_output(args.common, config);
  const std::string split = args.split.empty() ? config.data.train_split : args.split;
  const auto spec = config.dataset(split);
  DirectoryTileSource source(spec.image_dir, spec.mask_dir);
  json index = json::array();
  for (int64_t i = 0; i < source.size(); ++i) {
    auto tile = source.load(i);
    const auto border = extract_border(tile.mask, 1);
    index.push_back({{"name", tile.name},
                     {"image", source.image_path(i).string()},
                     {"mask", source.mask_path(i).string()},
                     {"height", tile.mask.height()},
                     {"width", tile.mask.width()},
                     {"road_fraction", double(tile.mask.count()) / double(tile.mask.size())},
                     {"border_pixels", border.count()},
                     {"crop_fits", tile.mask.height() >= spec.crop_size && tile.mask.width() >= spec.crop_size}});
  }
  write_json(out / ("prepare_" + split + ".json"),
             {{"split", split}, {"count", source.size()}, {"crop_size", spec.crop_size}, {"tiles", index}});
  std::cout << "prepared " << source.size() << " tiles for split '" << split << "'\n";
  return kExitOk;
}

struct SynthArgs {
  Common common;
  int count = 10;
  int size = 128;
  uint64_t seed = 0;
  int min_width = 3;
  int max_width = 9;
  std::string split = "train";
};

int cmd_synth(const SynthArgs& args) {
  const auto config = resolve_config(args.common);
  const auto out = prepare_output(args.common, config);
  SynthOptions options;
  options.size = args.size;
  options.seed = args.seed;
  options.min_road_width = args.min_width;
  options.max_road_width = args.max_width;
  const auto tiles = synth_tiles(args.count, options);
  const auto dir = out / args.split;
  for (const auto& tile : tiles) {
    write_image(dir / "images" / (tile.name + ".png"), tile.image);
    write_mask(dir / "masks" / (tile.name + ".png"), tile.mask);
  }
  std::cout << "wrote " << tiles.size() << " tiles to " << dir.string() << "\n";
  return kExitOk;
}

struct TrainArgs {
  Common common;
  std::string resume;
  bool verbose = false;
};

int cmd_train(const TrainArgs& args) {
  const auto config = resolve_config(args.common);
  const auto out = prepare_output(args.common, config);
  const auto train_set = Dataset::open(config.dataset(config.data.train_split));
  std::optional<Dataset> val_set;
  if (split_exists(config, config.data.val_split)) val_set = Dataset::open(config.dataset(config.data.val_split));
  TrainOptions options;
  options.checkpoint_root = checkpoint_root(out, config);
  options.log_csv = out / "train_log.csv";
  options.verbose = args.verbose;
  if (!args.resume.empty()) options.resume_from = resolve_checkpoint(args.resume);
  const auto result = train(config, train_set, val_set ? &*val_set : nullptr, options);
  json summary = {{"last_checkpoint", result.last_checkpoint.string()},
                  {"steps", result.steps},
                  {"epochs_completed", result.epochs_completed},
                  {"param_checksum", result.param_checksum},
                  {"final_loss", result.log.empty() ? json(nullptr) : json(result.log.back().losses.total)}};
  if (result.best_checkpoint) summary["best_checkpoint"] = result.best_checkpoint->string();
  write_json(out / "train_summary.json", summary);
  std::cout << "trained " << result.steps << " steps; last checkpoint " << result.last_checkpoint.string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string split;
  std::string averaging = "micro";
  bool overlays = false;
  int64_t max_images = 0;
};

int cmd_eval(const EvalArgs& args) {
  const auto ckpt = resolve_checkpoint(args.checkpoint);
  const auto manifest = read_manifest(ckpt);
  const auto config = resolve_config(args.common, &manifest.config);
  const auto out = prepare_output(args.common, config);
  const std::string split = args.split.empty() ? config.data.test_split : args.split;
  const auto dataset = Dataset::open(config.dataset(split));
  EvalOptions options;
  options.tile_size = config.data.crop_size;
  options.tile_stride = config.data.tile_stride;
  if (args.averaging == "macro") {
    options.averaging = Averaging::Macro;
  } else if (args.averaging != "micro") {
    throw ConfigError("averaging must be micro or macro");
  }
  options.max_images = args.max_images;
  if (args.overlays) options.overlay_dir = out / "overlays";
  const auto result = evaluate_checkpoint(ckpt, dataset, options, &config);
  auto report = result.to_json(options.averaging);
  report["checkpoint"] = ckpt.string();
  report["split"] = split;
  write_json(out / "metrics.json", report);
  std::cout << std::setprecision(4) << "iou " << result.summary.iou << " f1 " << result.summary.f1 << " over "
            << result.per_image.size() << " images\n";
  return kExitOk;
}

struct PredictArgs {
  Common common;
  std::string checkpoint;
  std::vector<std::string> inputs;
  double threshold = 0.5;
};

int cmd_predict(const PredictArgs& args) {
  const auto ckpt = resolve_checkpoint(args.checkpoint);
  const auto manifest = read_manifest(ckpt);
  const auto config = resolve_config(args.common, &manifest.config);
  const auto out = prepare_output(args.common, config);
  auto model = load_model(ckpt, &config);
  std::vector<fs::path> files;
  for (const auto& input : args.inputs) {
    if (fs::is_directory(input)) {
      for (const auto& e : fs::directory_iterator(input)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
    } else {
      files.emplace_back(input);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no input images given");
  for (const auto& file : files) {
    const auto image = read_image(file);
    const auto bundle = predict_full(model, image, config.data.crop_size, config.data.tile_stride);
    const auto stem = file.stem().string();
    const auto road = Mask::from_tensor(bundle.road_prob[0][0], args.threshold);
    write_mask(out / (stem + "_road.png"), road);
    for (size_t i = 0; i < bundle.border_probs.size(); ++i) {
      write_probability(out / (stem + "_border_s" + std::to_string(bundle.border_strides[i]) + ".png"),
                        bundle.border_probs[i][0][0]);
    }
    const auto outline = extract_border(road, 1);
    write_image(out / (stem + "_overlay.png"), render_overlay(image, road, &outline));
  }
  std::cout << "predicted " << files.size() << " images\n";
  return kExitOk;
}

struct AblateArgs {
  Common common;
  std::string variants = "BU,SG,E1,E2,full";
  bool smoke = false;
  std::string eval_split;
};

int cmd_ablate(const AblateArgs& args) {
  const auto config = resolve_config(args.common);
  const auto out = prepare_output(args.common, config);
  const auto variants = parse_variants(args.variants);
  const auto train_set = Dataset::open(config.dataset(config.data.train_split));
  std::string eval_split = args.eval_split;
  if (eval_split.empty()) {
    eval_split = split_exists(config, config.data.val_split) ? config.data.val_split : config.data.test_split;
  }
  const auto eval_set = Dataset::open(config.dataset(eval_split));
  auto base = config;
  base.train.checkpoint_dir = checkpoint_root(out, config).string();
  const auto table = ablate(base, variants, train_set, eval_set, args.smoke, out);
  write_ablation_table(table, out / "ablation.csv", out / "ablation.json");
  for (const auto& row : table.rows) {
    std::cout << to_string(row.variant) << ": " << (row.ok ? "ok" : "FAILED " + row.error) << " f1 "
              << row.report.f1 << "\n";
  }
  if (table.partial) {
    std::cerr << "ablation aborted; partial table written\n";
    return kExitRuntime;
  }
  return kExitOk;
}

struct BordersArgs {
  Common common;
  std::string input_dir;
  int radius = 1;
};

int cmd_make_borders(const BordersArgs& args) {
  const auto config = resolve_config(args.common);
  const auto out = prepare_output(args.common, config);
  if (!fs::is_directory(args.input_dir)) throw IoError("not a directory: " + args.input_dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(args.input_dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    write_mask(out / (file.stem().string() + ".png"), extract_border(read_mask(file), args.radius));
  }
  std::cout << "wrote " << files.size() << " border masks\n";
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"hns: road extraction with border-aware graph reasoning"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  PrepareArgs prepare;
  auto* prepare_cmd = app.add_subcommand("prepare", "Validate a dataset split and write its index");
  add_common(*prepare_cmd, prepare.common);
  prepare_cmd->add_option("--split", prepare.split, "Split to index (default: data.train_split)");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic road tiles");
  add_common(*synth_cmd, synth.common);
  synth_cmd->add_option("--count", synth.count, "Number of tiles")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--size", synth.size, "Tile side in pixels (>= 64)");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--min-width", synth.min_width, "Minimum road width in pixels");
  synth_cmd->add_option("--max-width", synth.max_width, "Maximum road width in pixels");
  synth_cmd->add_option("--split", synth.split, "Split directory to write");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(*train_cmd, train_args.common);
  train_cmd->add_option("--resume", train_args.resume, "Checkpoint (or checkpoint root) to resume from");
  train_cmd->add_flag("-v,--verbose", train_args.verbose, "Print per-step losses");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_common(*eval_cmd, eval.common);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory or root")->required();
  eval_cmd->add_option("--split", eval.split, "Split to evaluate (default: data.test_split)");
  eval_cmd->add_option("--averaging", eval.averaging, "micro or macro region averaging");
  eval_cmd->add_flag("--overlays", eval.overlays, "Write prediction overlays");
  eval_cmd->add_option("--max-images", eval.max_images, "Evaluate at most this many images");

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "Write road, border and overlay PNGs for images");
  add_common(*predict_cmd, predict.common);
  predict_cmd->add_option("--checkpoint", predict.checkpoint, "Checkpoint directory or root")->required();
  predict_cmd->add_option("-i,--input", predict.inputs, "Image files or directories")->required();
  predict_cmd->add_option("--threshold", predict.threshold, "Road probability threshold");

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate ablation variants");
  add_common(*ablate_cmd, ablate_args.common);
  ablate_cmd->add_option("--variants", ablate_args.variants, "Comma-separated subset of BU,SG,E1,E2,full");
  ablate_cmd->add_flag("--smoke", ablate_args.smoke, "One training step per variant");
  ablate_cmd->add_option("--eval-split", ablate_args.eval_split, "Split to evaluate on");

  BordersArgs borders;
  auto* borders_cmd = app.add_subcommand("make-borders", "Extract border masks from a directory of masks");
  add_common(*borders_cmd, borders.common);
  borders_cmd->add_option("--input-dir", borders.input_dir, "Directory of road masks")->required();
  borders_cmd->add_option("--radius", borders.radius, "Structuring element radius")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (e.get_exit_code() != 0) std::cerr << app.help();
    return kExitValidation;
  }

  try {
    if (*prepare_cmd) return cmd_prepare(prepare);
    if (*synth_cmd) return cmd_synth(synth);
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval);
    if (*predict_cmd) return cmd_predict(predict);
    if (*ablate_cmd) return cmd_ablate(ablate_args);
    if (*borders_cmd) return cmd_make_borders(borders);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const c10::Error& e) {
    std::cerr << "failed: " << e.what_without_backtrace() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("hns");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace hns::cli
