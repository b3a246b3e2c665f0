#include "sdseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sdseg/checkpoint.hpp"
#include "sdseg/errors.hpp"
#include "sdseg/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sdseg {

namespace {

uint64_t weights_seed(const TrainConfig& cfg) { return hash_combine(cfg.seed, hash_str("weights")); }
uint64_t data_seed(const TrainConfig& cfg) { return hash_combine(cfg.seed, hash_str("data-order")); }
uint64_t augment_seed(const TrainConfig& cfg) { return hash_combine(cfg.seed, hash_str("augment")); }

std::vector<size_t> epoch_order(size_t count, uint64_t seed, int64_t epoch) {
  std::vector<size_t> order(count);
  for (size_t i = 0; i < count; ++i) order[i] = i;
  RngStream rng(seed, static_cast<uint64_t>(epoch));
  for (size_t i = count; i > 1; --i) {
    size_t j = static_cast<size_t>(rng.next_below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// JSON-lines entry; float formatting goes through nlohmann so identical runs
// produce identical bytes.
void log_line(std::ofstream& log, const json& j) { log << j.dump() << "\n"; }

json val_metrics_json(const EvalReport& report) {
  return {{"miou_teeth", report.miou_teeth},
          {"miou_plaque", report.miou_plaque},
          {"dice_teeth", report.dice_teeth},
          {"dice_plaque", report.dice_plaque},
          {"pr_percent", report.pr_percent}};
}

int find_latest_checkpoint_epoch(const std::string& run_dir) {
  int latest = -1;
  if (!fs::exists(run_dir)) return latest;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("ckpt-", 0) == 0 && entry.path().extension() == ".json" &&
        name != "ckpt-best.json") {
      try {
        latest = std::max(latest, std::stoi(name.substr(5)));
      } catch (const std::exception&) {
      }
    }
  }
  return latest;
}

}  // namespace

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw UsageError("epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(cfg.epochs) + ")");
  }
  return cfg.lr0 * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_step_epochs);
}

void fill_batch(const std::vector<SampleRecord>& records, const std::vector<size_t>& indices,
                bool augment, uint64_t aug_seed, int64_t epoch, Tensor& images,
                SupervisionBatch& supervision) {
  const int64_t n = static_cast<int64_t>(indices.size());
  const int64_t size = records.at(indices[0]).image.dim(1);
  images = Tensor({n, 3, size, size});
  supervision.labels = ByteMask({n, size, size});
  supervision.teeth_mask = ByteMask({n, size, size});
  supervision.plaque_mask = ByteMask({n, size, size});
  supervision.teeth_boundary = ByteMask({n, size, size});
  supervision.plaque_boundary = ByteMask({n, size, size});

  const int64_t hw = size * size;
  for (int64_t b = 0; b < n; ++b) {
    const SampleRecord& base = records[indices[static_cast<size_t>(b)]];
    SampleRecord flipped;
    const SampleRecord& rec =
        augment ? (flipped = augment_for_step(base, aug_seed, epoch), flipped) : base;
    std::copy_n(rec.image.data(), rec.image.numel(), images.data() + b * 3 * hw);
    const auto& sup = rec.supervision;
    std::copy_n(sup.teeth_mask.data(), hw, supervision.teeth_mask.data() + b * hw);
    std::copy_n(sup.plaque_mask.data(), hw, supervision.plaque_mask.data() + b * hw);
    std::copy_n(sup.teeth_boundary.data(), hw, supervision.teeth_boundary.data() + b * hw);
    std::copy_n(sup.plaque_boundary.data(), hw, supervision.plaque_boundary.data() + b * hw);
    for (int64_t i = 0; i < hw; ++i) {
      supervision.labels[b * hw + i] =
          sup.plaque_mask[i] ? 2 : (sup.teeth_mask[i] ? 1 : 0);
    }
  }
}

LossBreakdown<float> train_step(SDNetF& model, Adam<float>& optimizer, const Tensor& images,
                                const SupervisionBatch& supervision, const TrainConfig& cfg,
                                double lr) {
  model.zero_grad();
  ForwardResult<float> out = model.forward(images, ForwardMode::kTraining);
  LossGrads<float> grads;
  LossBreakdown<float> lb = total_loss(out, supervision, cfg.loss_weights, cfg.ablation, &grads);
  model.backward(grads, cfg.ccm_detach);

  auto params = model.params();
  for (const Param<float>* p : params) {
    for (int64_t i = 0; i < p->grad.numel(); ++i) {
      if (!std::isfinite(p->grad[i])) {
        throw NumericalError("non-finite gradient in parameter '" + p->name + "'");
      }
    }
  }
  optimizer.step(params, AdamParams{lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
  return lb;
}

TrainResult train_loop(const TrainConfig& cfg, const std::string& dataset_root,
                       const std::string& runs_dir, bool resume) {
  cfg.validate();
  const json resolved = train_config_to_json(cfg);
  const std::string run_name =
      cfg.run_name.empty() ? "run-" + config_hash_hex(resolved) : cfg.run_name;
  const fs::path run_dir = fs::path(runs_dir) / run_name;
  fs::create_directories(run_dir);

  LoadOptions load_opts;
  load_opts.boundary_op = cfg.boundary_op;
  std::vector<SampleRecord> train_records =
      load_dataset(dataset_root, "train", cfg.model.input_size, load_opts);
  if (train_records.empty()) throw DataError("train split is empty: " + dataset_root);
  std::vector<SampleRecord> val_records =
      load_dataset(dataset_root, "val", cfg.model.input_size, load_opts);

  SDNetF model(model_config_for(cfg));
  Adam<float> optimizer;
  optimizer.attach(model.params());

  TrainResult result;
  result.run_dir = run_dir.string();
  result.log_path = (run_dir / "train_log.jsonl").string();

  int start_epoch = 0;
  if (resume) {
    const int latest = find_latest_checkpoint_epoch(run_dir.string());
    if (latest < 0) throw DataError("resume requested but no checkpoint in " + run_dir.string());
    LoadedCheckpoint ckpt = load_checkpoint((run_dir / ("ckpt-" + std::to_string(latest))).string());
    restore_model(model, ckpt);
    restore_optimizer(optimizer, model, ckpt);
    start_epoch = latest + 1;
    result.best_epoch = ckpt.meta.value("best_epoch", -1);
    result.best_val_plaque_dice = ckpt.meta.value("best_val_plaque_dice", 0.0);
    result.last_checkpoint = (run_dir / ("ckpt-" + std::to_string(latest))).string();
  } else {
    model.init_weights(weights_seed(cfg));
  }
  if (result.best_epoch >= 0) {
    result.best_checkpoint = (run_dir / "ckpt-best").string();
  }

  std::ofstream log(result.log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError(result.log_path + ": cannot open training log");

  const size_t n_train = train_records.size();
  const int64_t steps_per_epoch =
      static_cast<int64_t>((n_train + cfg.batch_size - 1) / cfg.batch_size);

  Tensor images;
  SupervisionBatch supervision;
  EvalOptions val_options;
  val_options.batch_size = cfg.batch_size;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    const std::vector<size_t> order = epoch_order(n_train, data_seed(cfg), epoch);

    for (int64_t step = 0; step < steps_per_epoch; ++step) {
      const size_t begin = static_cast<size_t>(step) * cfg.batch_size;
      const size_t end = std::min(n_train, begin + cfg.batch_size);
      std::vector<size_t> batch_indices(order.begin() + begin, order.begin() + end);
      fill_batch(train_records, batch_indices, cfg.augment_flip, augment_seed(cfg), epoch,
                 images, supervision);
      LossBreakdown<float> lb = train_step(model, optimizer, images, supervision, cfg, lr);

      log_line(log, {{"type", "step"},
                     {"epoch", epoch},
                     {"step", epoch * steps_per_epoch + step},
                     {"lr", lr},
                     {"seg_teeth", lb.seg_teeth},
                     {"seg_plaque", lb.seg_plaque},
                     {"scm_teeth", lb.scm_teeth},
                     {"scm_plaque", lb.scm_plaque},
                     {"ccm", lb.ccm},
                     {"total", lb.total}});
    }

    json val_json;
    double val_plaque_dice = 0.0;
    if (!val_records.empty()) {
      EvalReport report = evaluate_records(model, val_records, val_options);
      val_json = val_metrics_json(report);
      val_plaque_dice = report.dice_plaque;
      log_line(log, {{"type", "val"}, {"epoch", epoch}, {"metrics", val_json}});
    }

    const bool is_best = val_records.empty()
                             ? epoch == cfg.epochs - 1
                             : (result.best_epoch < 0 || val_plaque_dice > result.best_val_plaque_dice);
    if (is_best) {
      result.best_epoch = epoch;
      result.best_val_plaque_dice = val_plaque_dice;
    }

    if ((epoch + 1) % cfg.checkpoint_every == 0 || epoch == cfg.epochs - 1 || is_best) {
      json meta = {{"epoch", epoch},
                   {"seed", cfg.seed},
                   {"config", resolved},
                   {"best_epoch", result.best_epoch},
                   {"best_val_plaque_dice", result.best_val_plaque_dice},
                   {"val_metrics", val_json}};
      const std::string prefix = (run_dir / ("ckpt-" + std::to_string(epoch))).string();
      save_checkpoint(prefix, model, &optimizer, meta);
      // keep disk usage flat: only the newest epoch checkpoint survives
      if (!result.last_checkpoint.empty() && result.last_checkpoint != prefix) {
        fs::remove(result.last_checkpoint + ".bin");
        fs::remove(result.last_checkpoint + ".json");
      }
      result.last_checkpoint = prefix;
      if (is_best) {
        save_checkpoint((run_dir / "ckpt-best").string(), model, &optimizer, meta);
        result.best_checkpoint = (run_dir / "ckpt-best").string();
      }
    }
  }
  log.flush();
  return result;
}

}  // namespace sdseg
