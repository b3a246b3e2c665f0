#include "sdseg/checkpoint.hpp"

#include <cstdint>
#include <fstream>

#include "sdseg/errors.hpp"

namespace sdseg {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'S', 'E', 'G', 'C', 'K', '1'};

template <typename V>
void write_pod(std::ofstream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::ifstream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  return v;
}

}  // namespace

void save_tensor_archive(const std::string& path, const std::map<std::string, Tensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open for writing");
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint64_t>(out, tensors.size());
  for (const auto& [name, tensor] : tensors) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(tensor.ndim()));
    for (int i = 0; i < tensor.ndim(); ++i) write_pod<int64_t>(out, tensor.dim(i));
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
  }
  if (!out) throw DataError(path + ": write failed");
}

std::map<std::string, Tensor> load_tensor_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open for reading");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw DataError(path + ": not a checkpoint tensor archive");
  }
  const uint64_t count = read_pod<uint64_t>(in);
  std::map<std::string, Tensor> tensors;
  for (uint64_t k = 0; k < count; ++k) {
    const uint32_t name_len = read_pod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t ndim = read_pod<uint32_t>(in);
    std::vector<int64_t> shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) shape[i] = read_pod<int64_t>(in);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw DataError(path + ": truncated tensor archive");
    tensors.emplace(std::move(name), std::move(t));
  }
  return tensors;
}

void save_checkpoint(const std::string& prefix, SDNetF& model, Adam<float>* optimizer,
                     const nlohmann::json& meta) {
  std::map<std::string, Tensor> tensors = model.state();
  if (optimizer) {
    auto params = model.params();
    auto& m = optimizer->moments_m();
    auto& v = optimizer->moments_v();
    if (m.size() != params.size()) {
      throw std::logic_error("optimizer state does not match model parameters");
    }
    for (size_t i = 0; i < params.size(); ++i) {
      tensors.emplace("adam.m." + params[i]->name, m[i]);
      tensors.emplace("adam.v." + params[i]->name, v[i]);
    }
  }
  save_tensor_archive(prefix + ".bin", tensors);

  nlohmann::json sidecar = meta;
  sidecar["format_version"] = kCheckpointFormatVersion;
  sidecar["weights_file"] = prefix + ".bin";
  if (optimizer) sidecar["adam_step_count"] = optimizer->step_count();
  std::ofstream out(prefix + ".json", std::ios::trunc);
  if (!out) throw DataError(prefix + ".json: cannot open for writing");
  out << sidecar.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& prefix) {
  LoadedCheckpoint ckpt;
  ckpt.tensors = load_tensor_archive(prefix + ".bin");
  std::ifstream in(prefix + ".json");
  if (!in) throw DataError(prefix + ".json: cannot open for reading");
  in >> ckpt.meta;
  if (ckpt.meta.value("format_version", 0) != kCheckpointFormatVersion) {
    throw DataError(prefix + ": unsupported checkpoint format version");
  }
  return ckpt;
}

void restore_model(SDNetF& model, const LoadedCheckpoint& ckpt, bool require_all) {
  model.load_state(ckpt.tensors, require_all);
}

void restore_optimizer(Adam<float>& optimizer, SDNetF& model, const LoadedCheckpoint& ckpt) {
  auto params = model.params();
  optimizer.attach(params);
  auto& m = optimizer.moments_m();
  auto& v = optimizer.moments_v();
  for (size_t i = 0; i < params.size(); ++i) {
    auto im = ckpt.tensors.find("adam.m." + params[i]->name);
    auto iv = ckpt.tensors.find("adam.v." + params[i]->name);
    if (im == ckpt.tensors.end() || iv == ckpt.tensors.end()) {
      throw DataError("checkpoint has no optimizer state for '" + params[i]->name + "'");
    }
    m[i] = im->second;
    v[i] = iv->second;
  }
  optimizer.set_step_count(ckpt.meta.value("adam_step_count", int64_t{0}));
}

}  // namespace sdseg
