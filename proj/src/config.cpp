#include "sdseg/config.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include "sdseg/errors.hpp"
#include "sdseg/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sdseg {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& scope) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw UsageError("unknown config key '" + (scope.empty() ? key : scope + "." + key) + "'");
    }
  }
}

Ablation parse_ablation(const json& j) {
  Ablation ab{false, false, false};
  for (const auto& entry : j) {
    std::string name = entry.get<std::string>();
    if (name == "SD") {
      ab.sd = true;
    } else if (name == "CCM") {
      ab.ccm = true;
    } else if (name == "SCM") {
      ab.scm = true;
    } else {
      throw UsageError("unknown ablation component '" + name + "' (expected SD, CCM, SCM)");
    }
  }
  return ab;
}

json ablation_to_json(const Ablation& ab) {
  json out = json::array();
  if (ab.sd) out.push_back("SD");
  if (ab.ccm) out.push_back("CCM");
  if (ab.scm) out.push_back("SCM");
  return out;
}

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (dataset_profile != "sdpseg_s" && dataset_profile != "sdpseg_c" &&
      dataset_profile != "custom") {
    throw UsageError("dataset_profile must be sdpseg_s, sdpseg_c or custom");
  }
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(lr0 > 0)) throw UsageError("lr0 must be positive");
  if (!(lr_decay_factor > 0 && lr_decay_factor <= 1)) {
    throw UsageError("lr_decay_factor must be in (0, 1]");
  }
  if (lr_step_epochs < 1) throw UsageError("lr_step_epochs must be >= 1");
  if (loss_weights.alpha < 0 || loss_weights.beta < 0) {
    throw UsageError("loss weights alpha and beta must be nonnegative");
  }
  if (!(loss_weights.tau > 0)) throw UsageError("dice smooth term tau must be positive");
  if (checkpoint_every < 1) throw UsageError("checkpoint_every must be >= 1");
  if (!ablation.sd && (ablation.ccm || ablation.scm)) {
    throw UsageError("CCM/SCM require the SD decomposition (baseline has no branches)");
  }
  model.validate();
}

ModelConfig model_config_for(const TrainConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.semantic_decomposition = cfg.ablation.sd;
  mc.boundary_heads = cfg.ablation.sd && cfg.ablation.scm;
  mc.projection_heads = cfg.ablation.sd && cfg.ablation.ccm;
  return mc;
}

TrainConfig parse_train_config(const json& j) {
  static const std::set<std::string> kTopKeys = {
      "dataset_profile", "epochs", "batch_size", "lr0", "lr_decay_factor",
      "lr_step_epochs", "adam_beta1", "adam_beta2", "adam_eps", "loss_weights",
      "seed", "deterministic", "ablation", "model", "augment_flip",
      "ccm_detach", "checkpoint_every", "run_name", "boundary_op"};
  check_keys(j, kTopKeys, "");

  TrainConfig cfg;
  std::string profile = j.value("dataset_profile", std::string("custom"));
  cfg.dataset_profile = profile;
  if (profile == "sdpseg_s") {
    cfg.epochs = 120;
    cfg.lr_step_epochs = 40;
  } else if (profile == "sdpseg_c") {
    cfg.epochs = 300;
    cfg.lr_step_epochs = 100;
  } else if (profile != "custom") {
    throw UsageError("dataset_profile must be sdpseg_s, sdpseg_c or custom");
  }

  if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
  if (j.contains("lr0")) cfg.lr0 = j.at("lr0").get<double>();
  if (j.contains("lr_decay_factor")) cfg.lr_decay_factor = j.at("lr_decay_factor").get<double>();
  if (j.contains("lr_step_epochs")) cfg.lr_step_epochs = j.at("lr_step_epochs").get<int>();
  if (j.contains("adam_beta1")) cfg.adam_beta1 = j.at("adam_beta1").get<double>();
  if (j.contains("adam_beta2")) cfg.adam_beta2 = j.at("adam_beta2").get<double>();
  if (j.contains("adam_eps")) cfg.adam_eps = j.at("adam_eps").get<double>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  if (j.contains("deterministic")) cfg.deterministic = j.at("deterministic").get<bool>();
  if (j.contains("augment_flip")) cfg.augment_flip = j.at("augment_flip").get<bool>();
  if (j.contains("ccm_detach")) cfg.ccm_detach = j.at("ccm_detach").get<bool>();
  if (j.contains("checkpoint_every")) cfg.checkpoint_every = j.at("checkpoint_every").get<int>();
  if (j.contains("run_name")) cfg.run_name = j.at("run_name").get<std::string>();

  if (j.contains("boundary_op")) {
    std::string op = j.at("boundary_op").get<std::string>();
    if (op == "neighbor") {
      cfg.boundary_op = BoundaryOp::kNeighbor;
    } else if (op == "canny") {
      cfg.boundary_op = BoundaryOp::kCanny;
    } else {
      throw UsageError("boundary_op must be neighbor or canny");
    }
  }

  if (j.contains("loss_weights")) {
    const json& lw = j.at("loss_weights");
    check_keys(lw, {"alpha", "beta", "tau", "ccm_reduction"}, "loss_weights");
    if (lw.contains("alpha")) cfg.loss_weights.alpha = lw.at("alpha").get<double>();
    if (lw.contains("beta")) cfg.loss_weights.beta = lw.at("beta").get<double>();
    if (lw.contains("tau")) cfg.loss_weights.tau = lw.at("tau").get<double>();
    if (lw.contains("ccm_reduction")) {
      std::string red = lw.at("ccm_reduction").get<std::string>();
      if (red == "mean") {
        cfg.loss_weights.ccm_reduction = CcmReduction::kMean;
      } else if (red == "sum") {
        cfg.loss_weights.ccm_reduction = CcmReduction::kSum;
      } else {
        throw UsageError("loss_weights.ccm_reduction must be mean or sum");
      }
    }
  }

  if (j.contains("ablation")) cfg.ablation = parse_ablation(j.at("ablation"));

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, {"input_size", "encoder_channels", "embedding_dim", "use_skip_connections"},
               "model");
    if (m.contains("input_size")) cfg.model.input_size = m.at("input_size").get<int>();
    if (m.contains("encoder_channels")) {
      auto ch = m.at("encoder_channels").get<std::vector<int>>();
      if (ch.size() != 5) throw UsageError("model.encoder_channels must list 5 widths");
      std::copy(ch.begin(), ch.end(), cfg.model.encoder_channels.begin());
    }
    if (m.contains("embedding_dim")) cfg.model.embedding_dim = m.at("embedding_dim").get<int>();
    if (m.contains("use_skip_connections")) {
      cfg.model.use_skip_connections = m.at("use_skip_connections").get<bool>();
    }
  }

  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": invalid JSON: " + e.what());
  }
  return parse_train_config(j);
}

json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["dataset_profile"] = cfg.dataset_profile;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr0"] = cfg.lr0;
  j["lr_decay_factor"] = cfg.lr_decay_factor;
  j["lr_step_epochs"] = cfg.lr_step_epochs;
  j["adam_beta1"] = cfg.adam_beta1;
  j["adam_beta2"] = cfg.adam_beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["loss_weights"] = {
      {"alpha", cfg.loss_weights.alpha},
      {"beta", cfg.loss_weights.beta},
      {"tau", cfg.loss_weights.tau},
      {"ccm_reduction", cfg.loss_weights.ccm_reduction == CcmReduction::kMean ? "mean" : "sum"}};
  j["seed"] = cfg.seed;
  j["deterministic"] = cfg.deterministic;
  j["ablation"] = ablation_to_json(cfg.ablation);
  j["model"] = {{"input_size", cfg.model.input_size},
                {"encoder_channels", cfg.model.encoder_channels},
                {"embedding_dim", cfg.model.embedding_dim},
                {"use_skip_connections", cfg.model.use_skip_connections}};
  j["augment_flip"] = cfg.augment_flip;
  j["ccm_detach"] = cfg.ccm_detach;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["run_name"] = cfg.run_name;
  j["boundary_op"] = to_string(cfg.boundary_op);
  return j;
}

std::string config_hash_hex(const json& resolved) {
  uint64_t h = hash_str(resolved.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

TrainConfig base_sdnet_preset() {
  TrainConfig cfg;
  cfg.dataset_profile = "sdpseg_s";
  cfg.epochs = 120;
  cfg.lr_step_epochs = 40;
  cfg.ablation = Ablation{true, true, true};
  return cfg;
}

const std::vector<double> kAlphaSweep = {0.1, 0.2, 0.4, 0.6, 0.8, 1.0};

std::string alpha_name(double alpha) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "alpha-%.1f", alpha);
  return buf;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names = {"sdnet",  "unet-baseline", "sd-only",
                                    "sd+scm", "sd+ccm",        "overfit-smoke"};
  for (double a : kAlphaSweep) names.push_back(alpha_name(a));
  return names;
}

bool is_preset(const std::string& name) {
  for (const auto& n : preset_names()) {
    if (n == name) return true;
  }
  return false;
}

TrainConfig preset_config(const std::string& name) {
  TrainConfig cfg = base_sdnet_preset();
  cfg.run_name = name;
  if (name == "sdnet") {
    return cfg;
  }
  if (name == "unet-baseline") {
    cfg.ablation = Ablation{false, false, false};
    return cfg;
  }
  if (name == "sd-only") {
    cfg.ablation = Ablation{true, false, false};
    return cfg;
  }
  if (name == "sd+scm") {
    cfg.ablation = Ablation{true, false, true};
    return cfg;
  }
  if (name == "sd+ccm") {
    cfg.ablation = Ablation{true, true, false};
    return cfg;
  }
  if (name == "overfit-smoke") {
    cfg.dataset_profile = "custom";
    cfg.epochs = 200;
    cfg.batch_size = 8;
    cfg.lr0 = 1e-3;
    cfg.lr_step_epochs = 200;
    cfg.checkpoint_every = 50;
    cfg.seed = 7;
    cfg.model.input_size = 64;
    cfg.model.encoder_channels = {16, 32, 64, 96, 128};
    cfg.model.embedding_dim = 32;
    return cfg;
  }
  for (double a : kAlphaSweep) {
    if (name == alpha_name(a)) {
      cfg.loss_weights.alpha = a;
      cfg.loss_weights.beta = 1.0;
      return cfg;
    }
  }
  throw UsageError("unknown preset '" + name + "'");
}

void emit_preset_files(const std::string& dir) {
  fs::create_directories(dir);
  for (const std::string& name : preset_names()) {
    json j = train_config_to_json(preset_config(name));
    std::ofstream out((fs::path(dir) / (name + ".json")).string(), std::ios::trunc);
    if (!out) throw DataError(dir + ": cannot write preset file for " + name);
    out << j.dump(2) << "\n";
  }
}

void write_run_manifest(const std::string& path, const std::string& command,
                        const std::string& config_path, const json& resolved_config,
                        uint64_t seed, const std::vector<std::string>& artifacts) {
  json manifest;
  manifest["command"] = command;
  manifest["config_path"] = config_path;
  manifest["config_hash"] = config_hash_hex(resolved_config);
  manifest["resolved_config"] = resolved_config;
  manifest["seed"] = seed;
  manifest["timestamp"] = iso8601_now();
  manifest["artifacts"] = artifacts;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path + ": cannot write manifest");
  out << manifest.dump(2) << "\n";
}

}  // namespace sdseg
