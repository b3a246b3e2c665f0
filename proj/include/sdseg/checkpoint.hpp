#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "sdseg/model.hpp"
#include "sdseg/optimizer.hpp"

namespace sdseg {

// Checkpoint = `<prefix>.bin` (named float tensors: weights, and optionally
// Adam moments under adam.m./adam.v.) + `<prefix>.json` sidecar with config,
// seed, epoch, metric snapshot and format version.
inline constexpr int kCheckpointFormatVersion = 1;

struct LoadedCheckpoint {
  std::map<std::string, Tensor> tensors;
  nlohmann::json meta;
};

void save_tensor_archive(const std::string& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_tensor_archive(const std::string& path);

void save_checkpoint(const std::string& prefix, SDNetF& model, Adam<float>* optimizer,
                     const nlohmann::json& meta);
LoadedCheckpoint load_checkpoint(const std::string& prefix);

// require_all=false tolerates stripped training-only heads (inference use).
void restore_model(SDNetF& model, const LoadedCheckpoint& ckpt, bool require_all = true);

// Restores Adam moments and step counter; throws if the checkpoint carries none.
void restore_optimizer(Adam<float>& optimizer, SDNetF& model, const LoadedCheckpoint& ckpt);

}  // namespace sdseg
