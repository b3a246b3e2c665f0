#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdseg/errors.hpp"
#include "sdseg/layers.hpp"
#include "sdseg/outputs.hpp"
#include "sdseg/rng.hpp"

// The segmentation network: a five-block shared encoder feeding either two
// category-specific decoder branches (teeth / plaque), each with a mask head,
// an optional boundary head sharing the decoder, and an optional projection
// head producing per-pixel embeddings from the branch-entry feature — or, with
// semantic decomposition disabled, a single decoder with a 3-class head (the
// baseline configuration used for ablation parity).
namespace sdseg {

struct ModelConfig {
  int input_size = 128;
  std::array<int, 5> encoder_channels{64, 128, 256, 512, 1024};
  int embedding_dim = 64;
  bool use_skip_connections = true;
  bool semantic_decomposition = true;
  bool boundary_heads = true;
  bool projection_heads = true;

  static constexpr int kMaskHeadClasses = 2;

  void validate() const {
    if (input_size <= 0 || input_size % 16 != 0) {
      throw UsageError("input_size must be a positive multiple of 16, got " +
                       std::to_string(input_size));
    }
    for (int i = 0; i < 5; ++i) {
      if (encoder_channels[i] <= 0 ||
          (i > 0 && encoder_channels[i] <= encoder_channels[i - 1])) {
        throw UsageError("encoder_channels must be strictly increasing positive widths");
      }
    }
    if (embedding_dim <= 0) throw UsageError("embedding_dim must be positive");
    if (projection_heads && encoder_channels[4] % 8 != 0) {
      throw UsageError("bottleneck width must be divisible by 8 for the projection head");
    }
  }

  int bottleneck_size() const { return input_size / 16; }
  int bottleneck_pixels() const { return bottleneck_size() * bottleneck_size(); }

  bool operator==(const ModelConfig&) const = default;
};

enum class ForwardMode { kTraining, kInference };

namespace detail {

// One decoder step: upsample, optionally concatenate the matching encoder
// skip, then a conv block down to the stage width.
template <typename T>
class DecoderStage {
 public:
  DecoderStage() = default;
  DecoderStage(const std::string& name, int in_channels, int skip_channels, int out_channels,
               bool use_skip)
      : use_skip_(use_skip),
        in_channels_(in_channels),
        block_(name, use_skip ? in_channels + skip_channels : in_channels, out_channels) {}

  TensorT<T> forward(const TensorT<T>& x, const TensorT<T>& skip, bool keep) {
    TensorT<T> up = up_.forward(x, keep);
    if (use_skip_) up = concat_channels(up, skip);
    return block_.forward(up, keep);
  }

  // Returns grad w.r.t. the stage input; adds the skip gradient into d_skip.
  TensorT<T> backward(TensorT<T> dy, TensorT<T>& d_skip) {
    TensorT<T> d_up = block_.backward(std::move(dy));
    if (use_skip_) {
      auto [da, db] = split_channels(d_up, in_channels_);
      add_into(d_skip, db);
      return up_.backward(da);
    }
    return up_.backward(d_up);
  }

  void collect(std::vector<Param<T>*>& out) { block_.collect(out); }

 private:
  bool use_skip_ = true;
  int64_t in_channels_ = 0;
  BilinearUp2<T> up_;
  ConvBlock<T> block_;
};

// Channel reduction (two 1x1 convolutions) followed by three per-pixel fully
// connected layers; ReLU between layers, linear output. Emits [N,P,D].
template <typename T>
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(const std::string& name, int in_channels, int embedding_dim)
      : reduce1_(name + ".reduce1", in_channels, in_channels / 4, 1),
        reduce2_(name + ".reduce2", in_channels / 4, in_channels / 8, 1),
        fc1_(name + ".fc1", in_channels / 8, 128, 1),
        fc2_(name + ".fc2", 128, 64, 1),
        fc3_(name + ".fc3", 64, embedding_dim, 1) {}

  TensorT<T> forward(const TensorT<T>& x, bool keep) {
    TensorT<T> y = reduce1_.forward(x, keep);
    relu1_.forward(y, keep);
    y = reduce2_.forward(y, keep);
    relu2_.forward(y, keep);
    y = fc1_.forward(y, keep);
    relu3_.forward(y, keep);
    y = fc2_.forward(y, keep);
    relu4_.forward(y, keep);
    y = fc3_.forward(y, keep);

    const int64_t n = y.dim(0), d = y.dim(1), p = y.dim(2) * y.dim(3);
    TensorT<T> emb({n, p, d});
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t k = 0; k < d; ++k) {
        for (int64_t i = 0; i < p; ++i) {
          emb.at(b, i, k) = y[(b * d + k) * p + i];
        }
      }
    }
    spatial_ = {y.dim(2), y.dim(3)};
    return emb;
  }

  TensorT<T> backward(const TensorT<T>& d_emb) {
    const int64_t n = d_emb.dim(0), p = d_emb.dim(1), d = d_emb.dim(2);
    TensorT<T> dy({n, d, spatial_[0], spatial_[1]});
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t k = 0; k < d; ++k) {
        for (int64_t i = 0; i < p; ++i) {
          dy[(b * d + k) * p + i] = d_emb.at(b, i, k);
        }
      }
    }
    TensorT<T> g = fc3_.backward(dy);
    relu4_.backward(g);
    g = fc2_.backward(g);
    relu3_.backward(g);
    g = fc1_.backward(g);
    relu2_.backward(g);
    g = reduce2_.backward(g);
    relu1_.backward(g);
    return reduce1_.backward(g);
  }

  void collect(std::vector<Param<T>*>& out) {
    reduce1_.collect(out);
    reduce2_.collect(out);
    fc1_.collect(out);
    fc2_.collect(out);
    fc3_.collect(out);
  }

 private:
  Conv2d<T> reduce1_, reduce2_, fc1_, fc2_, fc3_;
  Relu<T> relu1_, relu2_, relu3_, relu4_;
  std::array<int64_t, 2> spatial_{0, 0};
};

}  // namespace detail

template <typename T>
class SDNet {
 public:
  explicit SDNet(const ModelConfig& config) : cfg_(config) {
    cfg_.validate();
    const auto& ch = cfg_.encoder_channels;
    enc_blocks_[0] = ConvBlock<T>("encoder.block1", 3, ch[0]);
    for (int i = 1; i < 5; ++i) {
      enc_blocks_[i] = ConvBlock<T>("encoder.block" + std::to_string(i + 1), ch[i - 1], ch[i]);
    }
    if (cfg_.semantic_decomposition) {
      build_branch(teeth_, "teeth");
      build_branch(plaque_, "plaque");
    } else {
      build_decoder_stages(base_stages_, "decoder");
      base_head_ = Conv2d<T>("decoder.head", ch[0], 3, 1);
    }
  }

  const ModelConfig& config() const { return cfg_; }

  // Shape of the shared bottleneck F from the most recent forward pass.
  const std::vector<int64_t>& bottleneck_shape() const { return bottleneck_shape_; }

  ForwardResult<T> forward(const TensorT<T>& images, ForwardMode mode = ForwardMode::kInference) {
    if (images.ndim() != 4 || images.dim(1) != 3) {
      throw std::invalid_argument("expected [N,3,H,W] images, got " + images.shape_str());
    }
    if (images.dim(2) != cfg_.input_size || images.dim(3) != cfg_.input_size) {
      throw std::invalid_argument("expected " + std::to_string(cfg_.input_size) + "x" +
                                  std::to_string(cfg_.input_size) + " input, got " +
                                  images.shape_str());
    }
    const bool keep = mode == ForwardMode::kTraining;

    // Shared encoder: skips are the pre-pool block outputs.
    TensorT<T> cur = enc_blocks_[0].forward(images, keep);
    skips_[0] = cur;
    for (int i = 1; i < 5; ++i) {
      cur = pools_[i - 1].forward(cur, keep);
      cur = enc_blocks_[i].forward(cur, keep);
      if (i < 4) skips_[i] = cur;
    }
    // cur is now the shared bottleneck F.
    bottleneck_shape_ = cur.shape();

    ForwardResult<T> result;
    if (cfg_.semantic_decomposition) {
      result.teeth = branch_forward(teeth_, cur, mode);
      result.plaque = branch_forward(plaque_, cur, mode);
    } else {
      result.baseline = true;
      TensorT<T> d = cur;
      for (int i = 0; i < 4; ++i) d = base_stages_[i].forward(d, skips_[3 - i], keep);
      result.label3_logits = base_head_.forward(d, keep);
    }
    return result;
  }

  // Backpropagates the supplied output gradients; parameter gradients
  // accumulate (call zero_grad between steps). Branches whose gradients are
  // all empty are skipped entirely, so their parameters keep exact zeros.
  void backward(const LossGrads<T>& grads, bool detach_projection = false) {
    std::array<TensorT<T>, 4> d_skips;
    for (int i = 0; i < 4; ++i) d_skips[i] = TensorT<T>(skips_[i].shape());

    std::optional<TensorT<T>> d_bottleneck;
    auto accumulate = [&](TensorT<T> df) {
      if (!d_bottleneck) {
        d_bottleneck = std::move(df);
      } else {
        add_into(*d_bottleneck, df);
      }
    };

    if (cfg_.semantic_decomposition) {
      if (!grads.teeth_mask.empty() || !grads.teeth_boundary.empty() ||
          !grads.teeth_emb.empty()) {
        accumulate(branch_backward(teeth_, grads.teeth_mask, grads.teeth_boundary,
                                   grads.teeth_emb, d_skips, detach_projection));
      }
      if (!grads.plaque_mask.empty() || !grads.plaque_boundary.empty() ||
          !grads.plaque_emb.empty()) {
        accumulate(branch_backward(plaque_, grads.plaque_mask, grads.plaque_boundary,
                                   grads.plaque_emb, d_skips, detach_projection));
      }
    } else if (!grads.label3.empty()) {
      TensorT<T> d = base_head_.backward(grads.label3);
      for (int i = 3; i >= 0; --i) d = base_stages_[i].backward(std::move(d), d_skips[3 - i]);
      accumulate(std::move(d));
    }
    if (!d_bottleneck) return;

    TensorT<T> d = enc_blocks_[4].backward(std::move(*d_bottleneck));
    for (int i = 3; i >= 0; --i) {
      d = pools_[i].backward(d);
      add_into(d, d_skips[i]);
      d = enc_blocks_[i].backward(std::move(d));
    }
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& b : enc_blocks_) b.collect(out);
    if (cfg_.semantic_decomposition) {
      collect_branch(teeth_, out);
      collect_branch(plaque_, out);
    } else {
      for (auto& s : base_stages_) s.collect(out);
      base_head_.collect(out);
    }
    return out;
  }

  int64_t param_count() {
    int64_t n = 0;
    for (const Param<T>* p : params()) n += p->value.numel();
    return n;
  }

  void zero_grad() {
    for (Param<T>* p : params()) p->grad.fill(T(0));
  }

  // He fan-in initialization for weights, zero biases. Each parameter draws
  // from a stream keyed by its name, so identical names get identical values
  // across architecture variants with the same seed.
  void init_weights(uint64_t seed) {
    for (Param<T>* p : params()) {
      if (p->name.size() >= 5 && p->name.rfind(".bias") == p->name.size() - 5) {
        p->value.fill(T(0));
        continue;
      }
      const int64_t fan_in = p->value.dim(1);
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      RngStream stream(seed, hash_str(p->name));
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        p->value[i] = static_cast<T>(stream.next_gaussian() * stddev);
      }
    }
  }

  std::map<std::string, TensorT<T>> state() {
    std::map<std::string, TensorT<T>> out;
    for (Param<T>* p : params()) out.emplace(p->name, p->value);
    return out;
  }

  // Missing-parameter policy: with require_all, any absent tensor is an
  // error; otherwise training-only heads (boundary / projection) may be
  // absent, which is what inference from a stripped checkpoint needs.
  void load_state(const std::map<std::string, TensorT<T>>& state, bool require_all = true) {
    for (Param<T>* p : params()) {
      auto it = state.find(p->name);
      if (it == state.end()) {
        bool training_only = p->name.find(".boundary_head.") != std::string::npos ||
                             p->name.find(".proj.") != std::string::npos;
        if (require_all || !training_only) {
          throw DataError("checkpoint is missing parameter '" + p->name + "'");
        }
        continue;
      }
      if (!(it->second.shape() == p->value.shape())) {
        throw DataError("checkpoint parameter '" + p->name + "' has shape " +
                        it->second.shape_str() + ", expected " + p->value.shape_str());
      }
      p->value = it->second;
    }
  }

 private:
  struct Branch {
    ConvBlock<T> entry;
    std::array<detail::DecoderStage<T>, 4> stages;
    Conv2d<T> mask_head;
    std::unique_ptr<Conv2d<T>> boundary_head;
    std::unique_ptr<detail::ProjectionHead<T>> proj;
  };

  void build_decoder_stages(std::array<detail::DecoderStage<T>, 4>& stages,
                            const std::string& prefix) {
    const auto& ch = cfg_.encoder_channels;
    int in_c = ch[4];
    for (int i = 0; i < 4; ++i) {
      const int skip_c = ch[3 - i];
      stages[i] = detail::DecoderStage<T>(prefix + ".dec" + std::to_string(i + 1), in_c,
                                          skip_c, skip_c, cfg_.use_skip_connections);
      in_c = skip_c;
    }
  }

  void build_branch(Branch& branch, const std::string& prefix) {
    const auto& ch = cfg_.encoder_channels;
    branch.entry = ConvBlock<T>(prefix + ".entry", ch[4], ch[4]);
    build_decoder_stages(branch.stages, prefix);
    branch.mask_head = Conv2d<T>(prefix + ".mask_head", ch[0], ModelConfig::kMaskHeadClasses, 1);
    if (cfg_.boundary_heads) {
      branch.boundary_head = std::make_unique<Conv2d<T>>(prefix + ".boundary_head", ch[0], 1, 1);
    }
    if (cfg_.projection_heads) {
      branch.proj = std::make_unique<detail::ProjectionHead<T>>(prefix + ".proj", ch[4],
                                                                cfg_.embedding_dim);
    }
  }

  BranchOutputs<T> branch_forward(Branch& branch, const TensorT<T>& bottleneck,
                                  ForwardMode mode) {
    const bool keep = mode == ForwardMode::kTraining;
    BranchOutputs<T> out;
    TensorT<T> fb = branch.entry.forward(bottleneck, keep);
    // Constraint heads are training-only; inference runs the mask path alone.
    if (mode == ForwardMode::kTraining && branch.proj) {
      out.embeddings = branch.proj->forward(fb, keep);
    }
    TensorT<T> d = std::move(fb);
    for (int i = 0; i < 4; ++i) d = branch.stages[i].forward(d, skips_[3 - i], keep);
    out.mask_logits = branch.mask_head.forward(d, keep);
    if (mode == ForwardMode::kTraining && branch.boundary_head) {
      out.boundary_logits = branch.boundary_head->forward(d, keep);
    }
    return out;
  }

  TensorT<T> branch_backward(Branch& branch, const TensorT<T>& d_mask,
                             const TensorT<T>& d_boundary, const TensorT<T>& d_emb,
                             std::array<TensorT<T>, 4>& d_skips, bool detach_projection) {
    TensorT<T> d_feat;
    if (!d_mask.empty()) d_feat = branch.mask_head.backward(d_mask);
    if (!d_boundary.empty()) {
      TensorT<T> d_b = branch.boundary_head->backward(d_boundary);
      if (d_feat.empty()) {
        d_feat = std::move(d_b);
      } else {
        add_into(d_feat, d_b);
      }
    }

    std::optional<TensorT<T>> d_fb;
    if (!d_feat.empty()) {
      TensorT<T> d = std::move(d_feat);
      for (int i = 3; i >= 0; --i) d = branch.stages[i].backward(std::move(d), d_skips[3 - i]);
      d_fb = std::move(d);
    }
    if (!d_emb.empty()) {
      TensorT<T> d_p = branch.proj->backward(d_emb);
      if (!detach_projection) {
        if (!d_fb) {
          d_fb = std::move(d_p);
        } else {
          add_into(*d_fb, d_p);
        }
      }
    }
    // Only reachable when every gradient feeding this branch is detached;
    // the entry block then sees a zero upstream gradient.
    if (!d_fb) d_fb = TensorT<T>(bottleneck_shape_);
    return branch.entry.backward(std::move(*d_fb));
  }

  void collect_branch(Branch& branch, std::vector<Param<T>*>& out) {
    branch.entry.collect(out);
    for (auto& s : branch.stages) s.collect(out);
    branch.mask_head.collect(out);
    if (branch.boundary_head) branch.boundary_head->collect(out);
    if (branch.proj) branch.proj->collect(out);
  }

  ModelConfig cfg_;
  std::array<ConvBlock<T>, 5> enc_blocks_;
  std::array<MaxPool2<T>, 4> pools_;
  std::array<TensorT<T>, 4> skips_;
  std::vector<int64_t> bottleneck_shape_;
  Branch teeth_, plaque_;
  std::array<detail::DecoderStage<T>, 4> base_stages_;
  Conv2d<T> base_head_;
};

using SDNetF = SDNet<float>;

}  // namespace sdseg
