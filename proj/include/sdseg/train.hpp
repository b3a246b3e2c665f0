#pragma once

#include <string>
#include <vector>

#include "sdseg/config.hpp"
#include "sdseg/data.hpp"
#include "sdseg/losses.hpp"
#include "sdseg/model.hpp"
#include "sdseg/optimizer.hpp"

namespace sdseg {

// Step learning-rate decay: lr0 * decay^floor(epoch / step_epochs).
double lr_at_epoch(const TrainConfig& cfg, int epoch);

// One Adam update on the batch-mean total loss. Throws NumericalError when a
// loss term or a parameter gradient goes non-finite, naming the culprit.
LossBreakdown<float> train_step(SDNetF& model, Adam<float>& optimizer, const Tensor& images,
                                const SupervisionBatch& supervision, const TrainConfig& cfg,
                                double lr);

// Copies records (optionally flip-augmented per (seed, id, epoch)) into a
// batch tensor + supervision batch.
void fill_batch(const std::vector<SampleRecord>& records, const std::vector<size_t>& indices,
                bool augment, uint64_t augment_seed, int64_t epoch, Tensor& images,
                SupervisionBatch& supervision);

struct TrainResult {
  std::string run_dir;
  std::string log_path;
  std::string best_checkpoint;   // prefix (no extension)
  std::string last_checkpoint;   // prefix of the newest ckpt-<epoch>
  int best_epoch = -1;
  double best_val_plaque_dice = 0.0;
};

// Full optimization: per-epoch shuffled batches with flip augmentation,
// JSON-lines step/validation logging, per-epoch checkpointing, best-model
// selection by validation plaque Dice, resume from the newest checkpoint.
TrainResult train_loop(const TrainConfig& cfg, const std::string& dataset_root,
                       const std::string& runs_dir, bool resume = false);

}  // namespace sdseg
