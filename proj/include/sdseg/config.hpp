#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sdseg/data.hpp"
#include "sdseg/losses.hpp"
#include "sdseg/model.hpp"
#include "sdseg/outputs.hpp"

namespace sdseg {

// Declarative training configuration; the JSON config file mirrors these
// field names exactly. The sdpseg_s / sdpseg_c profiles preload the paper
// regimes (120 epochs with a 40-epoch LR step vs 300 with a 100-epoch step);
// every key can still be overridden explicitly.
struct TrainConfig {
  std::string dataset_profile = "custom";  // sdpseg_s | sdpseg_c | custom
  int epochs = 120;
  int batch_size = 16;
  double lr0 = 1e-4;
  double lr_decay_factor = 0.1;
  int lr_step_epochs = 40;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  LossWeights loss_weights;
  uint64_t seed = 1;
  bool deterministic = true;
  Ablation ablation;
  ModelConfig model;
  bool augment_flip = true;
  bool ccm_detach = false;
  int checkpoint_every = 1;
  std::string run_name;
  BoundaryOp boundary_op = BoundaryOp::kNeighbor;

  void validate() const;
};

// Architecture implied by the config: heads exist only for enabled modules.
ModelConfig model_config_for(const TrainConfig& cfg);

TrainConfig parse_train_config(const nlohmann::json& j);
TrainConfig load_train_config(const std::string& path);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

// FNV-1a over the canonical serialized config.
std::string config_hash_hex(const nlohmann::json& resolved);

std::vector<std::string> preset_names();
bool is_preset(const std::string& name);
TrainConfig preset_config(const std::string& name);
void emit_preset_files(const std::string& dir);

void write_run_manifest(const std::string& path, const std::string& command,
                        const std::string& config_path, const nlohmann::json& resolved_config,
                        uint64_t seed, const std::vector<std::string>& artifacts);

}  // namespace sdseg
