// sdseg — dataset preparation, training, evaluation and prediction for the
// dual-branch dental plaque segmentation network.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdseg/checkpoint.hpp"
#include "sdseg/config.hpp"
#include "sdseg/data.hpp"
#include "sdseg/errors.hpp"
#include "sdseg/infer.hpp"
#include "sdseg/plots.hpp"
#include "sdseg/png_io.hpp"
#include "sdseg/report.hpp"
#include "sdseg/synth.hpp"
#include "sdseg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_runs_dir() {
  if (const char* env = std::getenv("SDSEG_RUNS_DIR")) return env;
  return "runs";
}

sdseg::BoundaryOp parse_boundary_op(const std::string& op) {
  if (op == "neighbor") return sdseg::BoundaryOp::kNeighbor;
  if (op == "canny") return sdseg::BoundaryOp::kCanny;
  throw sdseg::UsageError("--boundary-op must be neighbor or canny");
}

struct TrainCli {
  std::string config_path;
  std::string preset;
  std::string root;
  std::string runs_dir = default_runs_dir();
  std::string run_name;
  std::string ccm_reduction;
  std::string boundary_op;
  int64_t seed = -1;
  bool deterministic = false;
  bool resume = false;
};

int cmd_train(const TrainCli& cli) {
  sdseg::TrainConfig cfg;
  std::string config_source;
  if (!cli.config_path.empty()) {
    cfg = sdseg::load_train_config(cli.config_path);
    config_source = cli.config_path;
  } else if (!cli.preset.empty()) {
    cfg = sdseg::preset_config(cli.preset);
    config_source = "preset:" + cli.preset;
  } else {
    throw sdseg::UsageError("train requires --config or --preset");
  }
  if (cli.seed >= 0) cfg.seed = static_cast<uint64_t>(cli.seed);
  if (cli.deterministic) cfg.deterministic = true;
  if (!cli.run_name.empty()) cfg.run_name = cli.run_name;
  if (!cli.ccm_reduction.empty()) {
    if (cli.ccm_reduction == "mean") {
      cfg.loss_weights.ccm_reduction = sdseg::CcmReduction::kMean;
    } else if (cli.ccm_reduction == "sum") {
      cfg.loss_weights.ccm_reduction = sdseg::CcmReduction::kSum;
    } else {
      throw sdseg::UsageError("--ccm-reduction must be mean or sum");
    }
  }
  if (!cli.boundary_op.empty()) cfg.boundary_op = parse_boundary_op(cli.boundary_op);

  sdseg::TrainResult result = sdseg::train_loop(cfg, cli.root, cli.runs_dir, cli.resume);

  const json resolved = sdseg::train_config_to_json(cfg);
  sdseg::write_run_manifest((fs::path(result.run_dir) / "manifest.json").string(), "train",
                            config_source, resolved, cfg.seed,
                            {result.log_path, result.best_checkpoint, result.last_checkpoint});
  std::cout << "run directory: " << result.run_dir << "\n"
            << "best epoch:    " << result.best_epoch
            << " (val plaque Dice " << result.best_val_plaque_dice << ")\n"
            << "best ckpt:     " << result.best_checkpoint << "\n";
  return 0;
}

int cmd_prepare_boundaries(const std::string& root, const std::string& op_str,
                           const std::vector<std::string>& splits) {
  const sdseg::BoundaryOp op = parse_boundary_op(op_str);
  std::vector<std::string> written;
  for (const std::string& split : splits) {
    if (!fs::exists(fs::path(root) / split)) continue;
    const auto ids = sdseg::list_split_ids(root, split);
    const fs::path teeth_dir = fs::path(root) / split / "boundaries" / "teeth";
    const fs::path plaque_dir = fs::path(root) / split / "boundaries" / "plaque";
    fs::create_directories(teeth_dir);
    fs::create_directories(plaque_dir);
    for (const std::string& id : ids) {
      const fs::path mask_path = fs::path(root) / split / "masks" / (id + ".png");
      if (!fs::exists(mask_path)) {
        throw sdseg::DataError("missing mask for image stem '" + id + "'");
      }
      sdseg::ByteMask label = sdseg::read_index_png(mask_path.string());
      auto [teeth, plaque] = sdseg::separate_channels(label);
      sdseg::write_gray8_png((teeth_dir / (id + ".png")).string(),
                             sdseg::extract_boundary(teeth, op));
      sdseg::write_gray8_png((plaque_dir / (id + ".png")).string(),
                             sdseg::extract_boundary(plaque, op));
    }
    written.push_back(split + ": " + std::to_string(ids.size()) + " samples");
  }
  json resolved = {{"root", root}, {"boundary_op", op_str}, {"splits", splits}};
  sdseg::write_run_manifest((fs::path(root) / "boundaries-manifest.json").string(),
                            "prepare-boundaries", "", resolved, 0, written);
  for (const auto& line : written) std::cout << line << "\n";
  return 0;
}

struct EvalCli {
  std::string checkpoint;
  std::string root;
  std::string split = "test";
  std::string clinician_csv;
  std::string eval_mode = "fused";
  std::string miou_agg = "image";
  std::string out;
  int batch_size = 16;
};

int cmd_evaluate(const EvalCli& cli) {
  sdseg::LoadedCheckpoint ckpt = sdseg::load_checkpoint(cli.checkpoint);
  sdseg::TrainConfig cfg = sdseg::parse_train_config(ckpt.meta.at("config"));
  sdseg::SDNetF model(sdseg::model_config_for(cfg));
  sdseg::restore_model(model, ckpt, /*require_all=*/false);

  sdseg::LoadOptions load_opts;
  load_opts.boundary_op = cfg.boundary_op;
  std::vector<sdseg::SampleRecord> records =
      sdseg::load_dataset(cli.root, cli.split, cfg.model.input_size, load_opts);
  if (records.empty()) throw sdseg::DataError("split '" + cli.split + "' has no samples");

  sdseg::EvalOptions options;
  options.batch_size = cli.batch_size;
  if (cli.eval_mode == "fused") {
    options.mode = sdseg::EvalMode::kFused;
  } else if (cli.eval_mode == "branch") {
    options.mode = sdseg::EvalMode::kBranch;
  } else {
    throw sdseg::UsageError("--eval-mode must be branch or fused");
  }
  if (cli.miou_agg == "image") {
    options.aggregation = sdseg::MiouAggregation::kImageMean;
  } else if (cli.miou_agg == "micro") {
    options.aggregation = sdseg::MiouAggregation::kMicro;
  } else {
    throw sdseg::UsageError("--miou-agg must be image or micro");
  }

  std::map<std::string, double> clinician;
  if (!cli.clinician_csv.empty()) clinician = sdseg::read_clinician_csv(cli.clinician_csv);

  sdseg::EvalReport report = sdseg::evaluate_records(
      model, records, options, clinician.empty() ? nullptr : &clinician);

  const std::string out_dir =
      cli.out.empty() ? (fs::path(cli.checkpoint).parent_path() / ("eval-" + cli.split)).string()
                      : cli.out;
  fs::create_directories(out_dir);
  json context = {{"checkpoint", cli.checkpoint},
                  {"split", cli.split},
                  {"eval_mode", cli.eval_mode},
                  {"miou_aggregation", cli.miou_agg}};
  sdseg::write_report_json(report, (fs::path(out_dir) / "report.json").string(), context);
  sdseg::write_report_csv(report, (fs::path(out_dir) / "report.csv").string());
  sdseg::plot_dice_per_image(report, (fs::path(out_dir) / "dice_per_image.png").string());
  sdseg::plot_pr_scatter(report, (fs::path(out_dir) / "pr_scatter.png").string());
  sdseg::write_run_manifest((fs::path(out_dir) / "manifest.json").string(), "evaluate",
                            cli.checkpoint, sdseg::train_config_to_json(cfg), cfg.seed,
                            {out_dir + "/report.json", out_dir + "/report.csv",
                             out_dir + "/dice_per_image.png", out_dir + "/pr_scatter.png"});

  std::cout << "split " << cli.split << " (" << records.size() << " images, " << cli.eval_mode
            << " mode)\n";
  std::printf("  MIoU   teeth %.4f  plaque %.4f\n", report.miou_teeth, report.miou_plaque);
  std::printf("  Dice   teeth %.4f  plaque %.4f\n", report.dice_teeth, report.dice_plaque);
  std::printf("  PR%%    %.4f\n", report.pr_percent);
  if (report.clinician_pr_percent) {
    std::printf("  PR%% (clinician) %.4f\n", *report.clinician_pr_percent);
  }
  std::cout << "report written to " << out_dir << "\n";
  return 0;
}

struct PredictCli {
  std::string checkpoint;
  std::string input;
  std::string out = "predictions";
  bool prob_maps = false;
};

int cmd_predict(const PredictCli& cli) {
  sdseg::LoadedCheckpoint ckpt = sdseg::load_checkpoint(cli.checkpoint);
  sdseg::TrainConfig cfg = sdseg::parse_train_config(ckpt.meta.at("config"));
  sdseg::SDNetF model(sdseg::model_config_for(cfg));
  sdseg::restore_model(model, ckpt, /*require_all=*/false);

  std::vector<fs::path> inputs;
  if (fs::is_directory(cli.input)) {
    for (const auto& entry : fs::directory_iterator(cli.input)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") {
        inputs.push_back(entry.path());
      }
    }
    std::sort(inputs.begin(), inputs.end());
  } else {
    inputs.push_back(cli.input);
  }
  if (inputs.empty()) throw sdseg::DataError("no input images under " + cli.input);

  fs::create_directories(cli.out);
  int failures = 0;
  std::vector<std::string> artifacts;
  for (const fs::path& path : inputs) {
    try {
      sdseg::Tensor img = sdseg::load_image(path.string(), cfg.model.input_size);
      sdseg::Tensor batch({1, 3, cfg.model.input_size, cfg.model.input_size});
      std::copy_n(img.data(), img.numel(), batch.data());
      std::vector<sdseg::FusedPrediction> preds = sdseg::predict(model, batch);
      sdseg::export_masks(preds[0], cli.out, path.stem().string(), cli.prob_maps);
      artifacts.push_back((fs::path(cli.out) / (path.stem().string() + ".png")).string());
    } catch (const std::exception& e) {
      ++failures;
      std::cerr << path.string() << ": " << e.what() << "\n";
    }
  }
  sdseg::write_run_manifest((fs::path(cli.out) / "manifest.json").string(), "predict",
                            cli.checkpoint, sdseg::train_config_to_json(cfg), cfg.seed,
                            artifacts);
  std::cout << (inputs.size() - failures) << "/" << inputs.size() << " images predicted into "
            << cli.out << "\n";
  if (failures == static_cast<int>(inputs.size())) {
    throw sdseg::DataError("every input failed to predict");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"training and evaluation for dual-branch dental plaque segmentation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic shapes dataset");
  std::string synth_out;
  int synth_count = 40, synth_size = 128;
  int64_t synth_seed = 1;
  synth->add_option("--out", synth_out, "dataset root to create")->required();
  synth->add_option("--count", synth_count, "total samples across splits");
  synth->add_option("--size", synth_size, "square image size");
  synth->add_option("--seed", synth_seed, "generator seed");

  // prepare-boundaries
  auto* prep = app.add_subcommand("prepare-boundaries", "materialize boundary ground truth");
  std::string prep_root, prep_op = "neighbor", prep_splits = "train,val,test";
  prep->add_option("--root", prep_root, "dataset root")->required();
  prep->add_option("--boundary-op", prep_op, "neighbor|canny");
  prep->add_option("--splits", prep_splits, "comma-separated split list");

  // train
  auto* train = app.add_subcommand("train", "run the training loop");
  TrainCli train_cli;
  train->add_option("--config", train_cli.config_path, "JSON config file");
  train->add_option("--preset", train_cli.preset, "named preset configuration");
  train->add_option("--root", train_cli.root, "dataset root")->required();
  train->add_option("--runs-dir", train_cli.runs_dir, "runs directory root");
  train->add_option("--run-name", train_cli.run_name, "override run name");
  train->add_option("--seed", train_cli.seed, "override seed");
  train->add_option("--ccm-reduction", train_cli.ccm_reduction, "mean|sum");
  train->add_option("--boundary-op", train_cli.boundary_op, "neighbor|canny");
  train->add_flag("--deterministic", train_cli.deterministic, "force deterministic mode");
  train->add_flag("--resume", train_cli.resume, "resume from the newest checkpoint");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on a split");
  EvalCli eval_cli;
  eval->add_option("--checkpoint", eval_cli.checkpoint, "checkpoint prefix")->required();
  eval->add_option("--root", eval_cli.root, "dataset root")->required();
  eval->add_option("--split", eval_cli.split, "train|val|test");
  eval->add_option("--clinician-csv", eval_cli.clinician_csv, "CSV id,pr with clinician PR");
  eval->add_option("--eval-mode", eval_cli.eval_mode, "branch|fused");
  eval->add_option("--miou-agg", eval_cli.miou_agg, "image|micro");
  eval->add_option("--out", eval_cli.out, "output directory");
  eval->add_option("--batch-size", eval_cli.batch_size, "inference batch size");

  // predict
  auto* pred = app.add_subcommand("predict", "predict masks for an image or directory");
  PredictCli pred_cli;
  pred->add_option("--checkpoint", pred_cli.checkpoint, "checkpoint prefix")->required();
  pred->add_option("--input", pred_cli.input, "image file or directory")->required();
  pred->add_option("--out", pred_cli.out, "output directory");
  pred->add_flag("--prob-maps", pred_cli.prob_maps, "also export 16-bit probability maps");

  // presets
  auto* presets = app.add_subcommand("presets", "list or emit preset configurations");
  std::string presets_emit;
  presets->add_option("--emit", presets_emit, "write preset config files to this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      sdseg::write_synthetic_dataset(synth_out, synth_size,
                                     static_cast<uint64_t>(synth_seed), synth_count);
      json resolved = {{"out", synth_out}, {"count", synth_count}, {"size", synth_size},
                       {"seed", synth_seed}};
      sdseg::write_run_manifest((fs::path(synth_out) / "manifest.json").string(), "synth", "",
                                resolved, static_cast<uint64_t>(synth_seed), {synth_out});
      std::cout << "synthetic dataset written to " << synth_out << "\n";
      return 0;
    }
    if (prep->parsed()) {
      std::vector<std::string> splits;
      std::string cur;
      for (char c : prep_splits + ",") {
        if (c == ',') {
          if (!cur.empty()) splits.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
      return cmd_prepare_boundaries(prep_root, prep_op, splits);
    }
    if (train->parsed()) return cmd_train(train_cli);
    if (eval->parsed()) return cmd_evaluate(eval_cli);
    if (pred->parsed()) return cmd_predict(pred_cli);
    if (presets->parsed()) {
      if (!presets_emit.empty()) {
        sdseg::emit_preset_files(presets_emit);
        json resolved = {{"emit", presets_emit}};
        sdseg::write_run_manifest((fs::path(presets_emit) / "manifest.json").string(),
                                  "presets", "", resolved, 0, sdseg::preset_names());
        std::cout << "presets written to " << presets_emit << "\n";
      } else {
        for (const std::string& name : sdseg::preset_names()) std::cout << name << "\n";
      }
      return 0;
    }
  } catch (const sdseg::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const sdseg::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const sdseg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
